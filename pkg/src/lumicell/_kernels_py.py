"""Pure-Python/numpy reference kernels.

Same contracts as the compiled ``_kernels`` extension; used when the extension
is not built or ``LUMICELL_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

N_SFD = 4
N_SYNC = 8
N_PAIRS = 20
N_SYMBOLS = 56
SYNC_TEMPLATE = np.array([1.0, -1.0] * (N_SYNC // 2))


def high_runs(x, min_run, max_run):
    """End indices (exclusive) of runs of ``x > 0`` with length in [min_run, max_run]."""
    pos = np.concatenate(([0], (np.asarray(x) > 0).view(np.int8), [0]))
    d = np.diff(pos)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    length = ends - starts
    keep = (length >= min_run) & (length <= max_run)
    return ends[keep].astype(np.int64)


def _seqsum(values):
    # left-to-right like the compiled loop, so both backends round identically
    total = 0.0
    for v in values:
        total += v
    return total


def _sample(x, t):
    i = np.floor(t).astype(np.int64)
    f = t - i
    return x[i] * (1.0 - f) + x[i + 1] * f


def scan_frames(x, spb, min_run, max_run, margin):
    """Locate SFD runs, recover symbol phase from Sync and slice Manchester data.

    Returns arrays ``(start, payload, checksum, pp, dmin, dmax)`` for candidates
    whose SFD, Sync and all 20 data pairs pass; checksum is left to the caller.
    ``pp`` is the mean pair peak-to-peak, ``dmin``/``dmax`` the extreme pair
    half-differences.
    """
    x = np.ascontiguousarray(x, dtype=float)
    n = len(x)
    n_phase = 2 * int(math.ceil(spb)) + 1
    offsets = -0.5 * spb + np.arange(n_phase) * (spb / (n_phase - 1))
    centers = (np.arange(N_SYMBOLS) + 0.5) * spb
    sync_centers = centers[N_SFD:N_SFD + N_SYNC]
    out = ([], [], [], [], [], [])
    for end in high_runs(x, min_run, max_run):
        # SFD plus the first Sync symbol form the run; its falling edge is sharp
        r = end - (N_SFD + 1) * spb
        if r < 0 or r + N_SYMBOLS * spb >= n - 1:
            continue
        t0s = r + offsets
        grid = _sample(x, t0s[:, None] + sync_centers[None, :])
        corr = np.zeros(n_phase)
        for j in range(N_SYNC):
            corr = corr + grid[:, j] * SYNC_TEMPLATE[j]
        t0 = t0s[int(np.argmax(corr))]
        v = _sample(x, t0 + centers)
        if not (np.all(v[:N_SFD] > 0) and np.all(v[N_SFD:N_SFD + N_SYNC] * SYNC_TEMPLATE > 0)):
            continue
        ref = _seqsum(np.abs(v[N_SFD:N_SFD + N_SYNC]).tolist()) / N_SYNC
        a = v[N_SFD + N_SYNC:N_SFD + N_SYNC + 2 * N_PAIRS:2]
        b = v[N_SFD + N_SYNC + 1:N_SFD + N_SYNC + 2 * N_PAIRS:2]
        d = 0.5 * (a - b)
        ad = np.abs(d)
        if np.any(a * b >= 0) or np.any(ad < margin * ref):
            continue
        word = 0
        for bit in (d > 0):
            word = (word << 1) | int(bit)
        out[0].append(t0)
        out[1].append(word >> 4)
        out[2].append(word & 0xF)
        out[3].append(2.0 * _seqsum(ad.tolist()) / N_PAIRS)
        out[4].append(ad.min())
        out[5].append(ad.max())
    return (np.array(out[0], dtype=float), np.array(out[1], dtype=np.int64),
            np.array(out[2], dtype=np.int64), np.array(out[3], dtype=float),
            np.array(out[4], dtype=float), np.array(out[5], dtype=float))


def interval_collisions(starts, duration):
    """Flag messages whose [start, start + duration) overlaps another transmitter's.

    ``starts`` is (frames, n): message start times per transmitter round. A
    transmitter's rounds never overlap each other, so only rounds k-1, k, k+1
    of the other transmitters need checking.
    """
    s = np.asarray(starts, dtype=float)
    frames, n = s.shape
    hit = np.zeros((frames, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for dk in (-1, 0, 1):
                lo, hi = max(0, -dk), min(frames, frames - dk)
                if lo >= hi:
                    continue
                other = s[lo + dk:hi + dk, j]
                hit[lo:hi, i] |= np.abs(s[lo:hi, i] - other) < duration
    return hit
