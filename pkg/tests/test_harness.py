import numpy as np
import pytest

from lumicell import harness, io
from lumicell.channel import Luminaire, ReceiverModel, rss_model, superpose
from lumicell.phy import BeaconFrame, Waveform, dummy_carrier, encode_frame, modulate


@pytest.fixture(scope="module")
def testbed():
    return harness.canonical_testbed()


def test_testbed_shape(testbed):
    assert len(testbed.luminaires) == 4
    assert testbed.ids == [1, 2, 3, 4]
    assert len(testbed.fingerprint_points) == 36 and len(testbed.eval_points) == 25
    assert {l.position for l in testbed.luminaires} == {(0.0, 0.0, 2.37), (3.0, 0.0, 2.37),
                                                        (0.0, 3.0, 2.37), (3.0, 3.0, 2.37)}
    fp = testbed.fingerprint_points
    assert np.allclose(np.diff(np.unique(fp[:, 0])), 0.4)
    assert np.allclose(fp.mean(axis=0), 1.5)     # centred
    assert testbed.n_slots == 20
    off = harness.canonical_testbed(light4_off=True)
    assert off.ids == [1, 2, 3] and testbed.without(4).ids == [1, 2, 3]


def test_floor_shape():
    fl = harness.canonical_floor()
    assert len(fl.luminaires) == 81 and len(fl.eval_points) == 1600
    assert len(set(fl.ids)) == 81
    assert fl.aligned and fl.n_slots == 20


def test_scenario_validation(testbed):
    with pytest.raises(harness.ScenarioError):
        testbed.with_(mode="bogus")
    with pytest.raises(harness.ScenarioError):
        testbed.with_(eval_points=[[5.0, 5.0]])
    with pytest.raises(harness.ScenarioError):
        testbed.with_(luminaires=[])


def test_unit_peak_power():
    h = 2.5
    lum = Luminaire(1, (0, 0, h), tx_power=harness.unit_peak_power(h))
    assert rss_model(lum, ReceiverModel((0, 0, 0))) == pytest.approx(1.0)


def test_top_k():
    fl = harness.canonical_floor()
    top = harness.top_k_beacons(fl, (4.4, 4.4))
    assert top == [1, 2, 10, 11]
    # symmetric point: ties resolved by smaller id
    assert harness.top_k_beacons(fl, (4.5, 4.5)) == [1, 2, 10, 11]


def test_single_light_waveform_noiseless_is_perfect():
    sc = harness.Scenario("one", [Luminaire(7, (0, 0, 2.5), tx_power=harness.unit_peak_power(2.5))],
                          ReceiverModel(noise_sigma=0.0), mode="waveform",
                          eval_points=[[0.2, 0.1]], footprint=(-1, 1, -1, 1), repetitions=10)
    tr = harness.run_broadcast(sc)
    assert tr.success_rate[0] == 1.0
    assert all(b == 7 for _, _, b, _, _ in tr.records)


def test_fast_synthesis_equals_superpose():
    sc = harness.canonical_floor(noise_sigma=0.0, n_slots=5).with_(aligned=False)
    ids = np.array([3, 8, 40])
    amps = np.array([0.9, 0.4, 0.2])
    rng = np.random.default_rng(1)
    x, starts, slots, slot_len, guard = harness.synthesize_timeline(sc, ids, amps, 3, rng)
    # re-derive the shifts the same way, then build each light's timeline separately
    rng = np.random.default_rng(1)
    frame_len = sc.n_slots * slot_len
    shifts = rng.integers(0, frame_len, size=len(ids))
    parts = []
    for i, b in enumerate(ids):
        tl = dummy_carrier(len(x), sc.phy, 1.0, phase=-int(shifts[i])).samples.copy()
        fw = modulate(encode_frame(BeaconFrame(int(b))), sc.phy, rate=sc.phy.analog_rate).samples
        for s in starts[:, i]:
            tl[s:s + slot_len] = fw
        parts.append((Waveform(tl, sc.phy.analog_rate), amps[i]))
    ref = superpose(parts).samples
    assert np.allclose(x, ref, atol=1e-9)


def test_noiseless_interval_fingerprints_equal_model(testbed):
    sc = testbed.with_(receiver=ReceiverModel((1.5, 1.5, 0), noise_sigma=0.0), mode="synchronized")
    fp = harness.generate_fingerprints(sc)
    assert fp.X.shape == (36, 2) and len(fp.beacon_ids) <= 4
    for k, p in enumerate(fp.X):
        expect = harness.point_rss(sc, p)
        for c, b in enumerate(fp.beacon_ids):
            assert fp.Y[k, c] == expect[sc.ids.index(b)]


def test_broadcast_deterministic_and_thread_invariant():
    fl = harness.canonical_floor(grid=10)
    pts = fl.eval_points[:6]
    a = harness.run_broadcast(fl, pts, frames=4, threads=1)
    b = harness.run_broadcast(fl, pts, frames=4, threads=3)
    assert np.array_equal(a.success_rate, b.success_rate)
    assert a.records == b.records


@pytest.mark.slow
def test_waveform_and_interval_agree_when_noiseless():
    fl = harness.canonical_floor(noise_sigma=0.0, grid=40)
    pts = fl.eval_points[::27]
    wave = harness.run_broadcast(fl, pts)
    intv = harness.run_broadcast(fl.with_(mode="synchronized"), pts)
    assert abs(np.mean(wave.success_rate) - np.mean(intv.success_rate)) <= 0.05
    assert abs(np.median(wave.success_rate) - np.median(intv.success_rate)) <= 0.05


@pytest.mark.slow
def test_no_phantom_decodes_at_high_noise():
    fl = harness.canonical_floor(noise_sigma=0.05, grid=40)
    tr = harness.run_broadcast(fl, fl.eval_points[::53])
    assert tr.phantoms == 0
    ids = set(fl.ids)
    assert all(b in ids for _, _, b, _, _ in tr.records)


def test_observe_and_trace_csv(tmp_path, testbed):
    obs = harness.observe(testbed, (1.0, 1.0), np.random.default_rng(0))
    assert set(obs.readings) <= {1, 2, 3, 4}
    tr = harness.run_broadcast(testbed, testbed.eval_points[:3], frames=2)
    header, rows = io.read_rows(io.write_trace(tmp_path / "t.csv", tr))
    assert header == ["point_x", "point_y", "frame", "beacon_id", "rss", "clean"]
    assert len(rows) == len(tr.records)
    edges, counts = tr.histogram(10)
    header, rows = io.read_rows(io.write_histogram(tmp_path / "h.csv", edges, counts))
    assert header == ["bin_low", "bin_high", "count"] and len(rows) == 10


def test_rectangle_trajectory_closed():
    tr = harness.rectangle_trajectory()
    assert np.allclose(tr[0, 1:], (0.6, 0.6)) and np.allclose(tr[-1, 1:], (1.0, 1.0))
    step = np.hypot(*np.diff(tr[:, 1:], axis=0).T)
    assert np.median(step) == pytest.approx(1 / 9, rel=0.05)


@pytest.fixture(scope="module")
def suite(testbed):
    return harness.localization_suite(testbed, restarts=2, fixed_steps=60)


def test_suite_runs(suite):
    assert suite.static.rows.shape == (50, 6)
    assert suite.fixed.rows.shape == (60, 6)
    assert suite.static.metrics.mean < 0.2


def test_track_forms_closed_loops(suite):
    rows = suite.track.rows
    first = harness.rectangle_trajectory(loops=((0.6, 0.6, 2.4, 2.4),))
    end = len(first) - 1
    gap = np.hypot(*(rows[end, 1:3] - rows[0, 1:3]))
    assert gap < 3 * suite.track.metrics.mean + 0.04
