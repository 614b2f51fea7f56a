"""Basic framed slotted ALOHA: slot draws, collision models and success rates."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from lumicell import kernels

PACKET_DURATION = 5.6e-3  # 56 symbols at 10 kHz


class MacError(ValueError):
    pass


def theoretical_success_rate(N: int, n: int) -> float:
    """Probability that ``n`` perfectly aligned transmitters pick distinct slots.

    N (N-1) ... (N-n+1) / N**n, the falling factorial over all slot tuples.
    """
    if N < 1 or n < 0:
        raise MacError("need N >= 1 and n >= 0")
    if n <= 1:
        return 1.0
    if n > N:
        return 0.0
    return math.perm(N, n) / N ** n


@dataclass
class SlotSchedule:
    n_slots: int
    slot_duration: float = PACKET_DURATION
    phase_offset: float = 0.0
    rng_seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_slots < 1:
            raise MacError("n_slots must be >= 1")
        if not 0 <= self.phase_offset < self.n_slots * self.slot_duration:
            raise MacError("phase_offset must lie in [0, frame duration)")
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def frame_duration(self) -> float:
        return self.n_slots * self.slot_duration


def draw_slot(schedule: SlotSchedule) -> int:
    """Uniform slot for the next MAC frame; the sequence is fixed by ``rng_seed``."""
    return int(schedule.rng.integers(schedule.n_slots))


def _check(N, n, frames):
    if N < 1 or n < 0:
        raise MacError("need N >= 1 and n >= 0")
    if frames < 1:
        raise MacError("frames must be >= 1")


def simulate_sync(N: int, n: int, frames: int, seed: int = 0) -> float:
    """Fraction of aligned MAC frames in which all ``n`` slots are distinct."""
    _check(N, n, frames)
    if n <= 1:
        return 1.0
    slots = np.random.default_rng(seed).integers(N, size=(frames, n))
    slots.sort(axis=1)
    distinct = np.all(np.diff(slots, axis=1) != 0, axis=1)
    return float(distinct.mean())


def async_starts(N, n, frames, rng, slot_duration=1.0):
    """Message start times (frames, n) for free-running transmitters.

    Transmitter i sends round k at offset_i + (k N + slot_ik) * slot_duration.
    """
    frame_len = N * slot_duration
    offsets = rng.uniform(0.0, frame_len, size=n)
    slots = rng.integers(N, size=(frames, n))
    rounds = np.arange(frames)[:, None] * frame_len
    return offsets[None, :] + rounds + slots * slot_duration


def _fresh_offset_hits(N, n, frames, rng):
    """Collision flags (frames, n) with new offsets and slots drawn for every round.

    Each row is an independent round: transmitter offsets uniform over one
    frame, and the neighbouring rounds of the other transmitters drawn too so
    overlaps across round edges are counted.
    """
    offsets = rng.uniform(0.0, N, size=(frames, n, 1))
    slots = rng.integers(N, size=(frames, n, 3))
    starts = offsets + (np.arange(-1, 2) * N)[None, None, :] + slots
    mine = starts[:, :, 1]
    hit = np.zeros((frames, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j:
                hit[:, i] |= np.any(np.abs(starts[:, j, :] - mine[:, i:i + 1]) < 1.0, axis=1)
    return hit


def simulate_async(N: int, n: int, frames: int, seed: int = 0, fixed_offsets: bool = False) -> float:
    """Fraction of rounds in which every transmitter's message is overlap-free.

    Each transmitter has its own uniform phase offset, so slot edges are
    misaligned and partial overlaps also destroy messages. By default offsets
    are redrawn every round (free-running clocks drift), which averages over
    offset configurations; ``fixed_offsets=True`` keeps one draw for the whole run.
    """
    _check(N, n, frames)
    if n <= 1:
        return 1.0
    rng = np.random.default_rng(seed)
    if fixed_offsets:
        hit = kernels.interval_collisions(async_starts(N, n, frames, rng), 1.0)
    else:
        hit = _fresh_offset_hits(N, n, frames, rng)
    return float((~hit.any(axis=1)).mean())


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    if trials < 1:
        raise MacError("trials must be >= 1")
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TransmissionLog:
    """One row per sent message."""

    tx_id: np.ndarray
    frame: np.ndarray
    slot: np.ndarray
    start: np.ndarray
    end: np.ndarray
    delivered: np.ndarray

    def __post_init__(self):
        self.tx_id = np.asarray(self.tx_id, dtype=np.int64)
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.slot = np.asarray(self.slot, dtype=np.int64)
        self.start = np.asarray(self.start, dtype=float)
        self.end = np.asarray(self.end, dtype=float)
        self.delivered = np.asarray(self.delivered, dtype=bool)

    def __len__(self):
        return len(self.tx_id)

    @classmethod
    def from_intervals(cls, tx_id, frame, slot, start, duration, power=None, capture_ratio=0.0):
        """Build a log, marking delivery by overlap against every other transmitter.

        With the default ``capture_ratio=0`` any overlap destroys both messages.
        Given per-message ``power``, a message instead survives while the summed
        power of the messages overlapping it stays within ``capture_ratio`` times
        its own.
        """
        start = np.asarray(start, dtype=float)
        tx = np.asarray(tx_id, dtype=np.int64)
        order = np.argsort(start, kind="stable")
        s = start[order]
        t = tx[order]
        if power is None or capture_ratio <= 0:
            w = np.ones(len(s))
            limit = np.zeros(len(s))
        else:
            w = np.asarray(power, dtype=float)[order]
            limit = capture_ratio * w
        interference = np.zeros(len(s))
        # sorted sweep: only neighbours closer than one duration can overlap
        for lag in range(1, len(s)):
            close = s[lag:] - s[:-lag] < duration
            if not close.any():
                break
            pair = close & (t[lag:] != t[:-lag])
            interference[lag:] += np.where(pair, w[:-lag], 0.0)
            interference[:-lag] += np.where(pair, w[lag:], 0.0)
        delivered = np.empty(len(s), dtype=bool)
        delivered[order] = interference <= limit
        return cls(tx, frame, slot, start, start + duration, delivered)


def per_message_success(log: TransmissionLog, considered) -> float:
    """Delivered / sent, counted over the ``considered`` transmitters only."""
    if len(log) == 0:
        raise MacError("no transmissions")
    considered = set(int(c) for c in considered)
    if not considered:
        raise MacError("considered set must be non-empty")
    mask = np.isin(log.tx_id, list(considered))
    if not mask.any():
        raise MacError("no transmissions from the considered transmitters")
    return float(log.delivered[mask].sum() / mask.sum())
