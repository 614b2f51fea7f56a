import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lumicell.mac import (MacError, SlotSchedule, TransmissionLog, draw_slot, per_message_success,
                          simulate_async, simulate_sync, theoretical_success_rate, wilson_interval)


def enumerate_oracle(N, n):
    # count slot tuples with all-distinct entries
    good = sum(len(set(t)) == n for t in itertools.product(range(N), repeat=n))
    return good / N ** n


@pytest.mark.parametrize("N,n", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 4), (6, 4), (3, 4)])
def test_theory_matches_enumeration(N, n):
    assert theoretical_success_rate(N, n) == pytest.approx(enumerate_oracle(N, n), abs=1e-12)


def test_theory_reference_values():
    assert theoretical_success_rate(20, 4) == pytest.approx(20 * 19 * 18 * 17 / 20 ** 4)
    assert theoretical_success_rate(20, 4) == pytest.approx(0.7268, abs=5e-5)
    assert theoretical_success_rate(50, 4) == pytest.approx(0.886, abs=0.01)
    assert theoretical_success_rate(10, 1) == 1.0
    assert theoretical_success_rate(10, 0) == 1.0
    with pytest.raises(MacError):
        theoretical_success_rate(0, 2)


@given(st.integers(1, 60), st.integers(0, 8))
def test_theory_monotone_in_N(N, n):
    assert theoretical_success_rate(N + 1, n) >= theoretical_success_rate(N, n)


@pytest.mark.parametrize("N", [5, 10, 20, 50])
def test_sync_within_four_sigma(N):
    F = 20_000
    p = theoretical_success_rate(N, 4)
    assert abs(simulate_sync(N, 4, F, seed=N) - p) <= 4 * math.sqrt(p * (1 - p) / F)


def test_single_transmitter_always_succeeds():
    assert simulate_sync(7, 1, 10) == 1.0
    assert simulate_async(7, 1, 10) == 1.0


def test_simulators_deterministic():
    assert simulate_sync(20, 4, 1000, seed=3) == simulate_sync(20, 4, 1000, seed=3)
    assert simulate_async(20, 4, 1000, seed=3) == simulate_async(20, 4, 1000, seed=3)
    assert simulate_async(20, 4, 1000, seed=3, fixed_offsets=True) == \
        simulate_async(20, 4, 1000, seed=3, fixed_offsets=True)


def async_oracle(N, n, rounds, rng):
    # plain loops: fresh offsets each round, neighbours from the adjacent rounds
    ok = 0
    for _ in range(rounds):
        off = rng.uniform(0, N, n)
        slot = rng.integers(N, size=(n, 3))
        good = True
        for i in range(n):
            mine = off[i] + slot[i, 1]
            for j in range(n):
                if j == i:
                    continue
                for r in range(3):
                    if abs(off[j] + (r - 1) * N + slot[j, r] - mine) < 1.0:
                        good = False
        ok += good
    return ok / rounds


@pytest.mark.parametrize("N", [10, 20])
def test_async_against_loop_oracle(N):
    F = 20_000
    got = simulate_async(N, 4, F, seed=1)
    ref = async_oracle(N, 4, 4000, np.random.default_rng(2))
    assert abs(got - ref) < 4 * math.sqrt(0.25 / 4000)


@pytest.mark.parametrize("N", [5, 10, 20, 40])
def test_async_never_beats_sync(N):
    F = 20_000
    s = simulate_sync(N, 4, F, seed=10)
    a = simulate_async(N, 4, F, seed=11)
    sigma = math.sqrt(max(s * (1 - s), 1e-4) / F)
    assert a <= s + 2 * sigma


def test_async_monotone_trend():
    vals = [simulate_async(N, 4, 20_000, seed=N) for N in (10, 20, 40, 80)]
    assert vals == sorted(vals) and vals[-1] > 0.7


def test_slot_schedule():
    s = SlotSchedule(20, rng_seed=5)
    seq = [draw_slot(s) for _ in range(50)]
    assert all(0 <= v < 20 for v in seq)
    s2 = SlotSchedule(20, rng_seed=5)
    assert seq == [draw_slot(s2) for _ in range(50)]
    assert s.frame_duration == pytest.approx(20 * 5.6e-3)
    with pytest.raises(MacError):
        SlotSchedule(0)
    with pytest.raises(MacError):
        SlotSchedule(4, phase_offset=1.0)


def log_oracle(tx, start, dur):
    return [not any(tx[j] != tx[i] and abs(start[j] - start[i]) < dur for j in range(len(tx)))
            for i in range(len(tx))]


@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0, 20)), min_size=1, max_size=30))
def test_transmission_log_overlap_oracle(msgs):
    tx = [m[0] for m in msgs]
    start = [m[1] for m in msgs]
    log = TransmissionLog.from_intervals(tx, np.zeros(len(tx)), np.zeros(len(tx)), start, 1.0)
    assert list(log.delivered) == log_oracle(tx, start, 1.0)
    assert np.allclose(log.end - log.start, 1.0)


def test_touching_intervals_do_not_collide():
    log = TransmissionLog.from_intervals([1, 2], [0, 0], [0, 1], [0.0, 1.0], 1.0)
    assert log.delivered.all()


def test_capture_rule():
    kw = dict(frame=[0, 0], slot=[0, 0], start=[0.0, 0.5], duration=1.0)
    strong_weak = TransmissionLog.from_intervals([1, 2], power=[1.0, 0.2], capture_ratio=1 / 3, **kw)
    assert list(strong_weak.delivered) == [True, False]
    equal = TransmissionLog.from_intervals([1, 2], power=[1.0, 0.9], capture_ratio=1 / 3, **kw)
    assert not equal.delivered.any()
    binary = TransmissionLog.from_intervals([1, 2], power=[1.0, 0.01], **kw)
    assert not binary.delivered.any()


@given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 10)), min_size=2, max_size=25),
       st.permutations(range(6)))
def test_per_message_success_relabel_invariant(msgs, perm):
    tx = [m[0] for m in msgs]
    start = [m[1] for m in msgs]
    z = np.zeros(len(tx))
    considered = {0, 1, 2}
    a = TransmissionLog.from_intervals(tx, z, z, start, 1.0)
    b = TransmissionLog.from_intervals([perm[t] for t in tx], z, z, start, 1.0)
    if not any(t in considered for t in tx):
        return
    assert per_message_success(a, considered) == per_message_success(b, {perm[c] for c in considered})


def test_per_message_counts_all_interferers():
    # light 9 is not considered but still destroys light 1's message
    log = TransmissionLog.from_intervals([1, 9, 2], [0, 0, 0], [0, 0, 5], [0.0, 0.3, 5.0], 1.0)
    assert per_message_success(log, {1, 2}) == 0.5
    with pytest.raises(MacError, match="no transmissions"):
        per_message_success(TransmissionLog([], [], [], [], [], []), {1})


@pytest.mark.parametrize("k,n", [(0, 10), (5, 10), (10, 10), (727, 1000)])
def test_wilson_against_formula(k, n):
    z = 1.959963984540054
    p = k / n
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(max(c - h, 0.0), abs=1e-9)
    assert hi == pytest.approx(min(c + h, 1.0), abs=1e-9)
