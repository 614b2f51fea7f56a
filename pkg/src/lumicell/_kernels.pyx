# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs

cnp.import_array()

DEF N_SFD = 4
DEF N_SYNC = 8
DEF N_PAIRS = 20
DEF N_SYMBOLS = 56


cdef inline double _sample(const double[::1] x, double t) nogil:
    cdef Py_ssize_t i = <Py_ssize_t>floor(t)
    cdef double f = t - i
    return x[i] * (1.0 - f) + x[i + 1] * f


def high_runs(x, Py_ssize_t min_run, Py_ssize_t max_run):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i = 0, j
    out = []
    while i < n:
        if xv[i] > 0:
            j = i
            while j < n and xv[j] > 0:
                j += 1
            if min_run <= j - i <= max_run:
                out.append(j)
            i = j
        else:
            i += 1
    return np.array(out, dtype=np.int64)


def scan_frames(x, double spb, Py_ssize_t min_run, Py_ssize_t max_run, double margin):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t n_phase = 2 * <Py_ssize_t>ceil(spb) + 1
    cdef Py_ssize_t p, k, j, best_p
    cdef double r
    cdef double t0, t, corr, best, ref, a, b, d, ad, pp, lo, hi, sgn
    cdef long word
    cdef bint ok
    cdef double v[N_SYMBOLS]
    cdef const long long[::1] runs = high_runs(x, min_run, max_run)
    res_t, res_p, res_c, res_pp, res_lo, res_hi = [], [], [], [], [], []
    for k in range(runs.shape[0]):
        r = runs[k] - (N_SFD + 1) * spb
        if r < 0 or r + N_SYMBOLS * spb >= n - 1:
            continue
        best = -1e300
        best_p = 0
        for p in range(n_phase):
            t0 = r + (-0.5 * spb + p * (spb / (n_phase - 1)))
            corr = 0.0
            sgn = 1.0
            for j in range(N_SYNC):
                corr += _sample(xv, t0 + (N_SFD + j + 0.5) * spb) * sgn
                sgn = -sgn
            if corr > best:
                best = corr
                best_p = p
        t0 = r + (-0.5 * spb + best_p * (spb / (n_phase - 1)))
        for j in range(N_SYMBOLS):
            v[j] = _sample(xv, t0 + (j + 0.5) * spb)
        ok = True
        for j in range(N_SFD):
            if not v[j] > 0:
                ok = False
        sgn = 1.0
        ref = 0.0
        for j in range(N_SYNC):
            if not v[N_SFD + j] * sgn > 0:
                ok = False
            ref += fabs(v[N_SFD + j])
            sgn = -sgn
        if not ok:
            continue
        ref /= N_SYNC
        word = 0
        pp = 0.0
        lo = 1e300
        hi = 0.0
        for j in range(N_PAIRS):
            a = v[N_SFD + N_SYNC + 2 * j]
            b = v[N_SFD + N_SYNC + 2 * j + 1]
            d = 0.5 * (a - b)
            ad = fabs(d)
            if a * b >= 0 or ad < margin * ref:
                ok = False
                break
            word = (word << 1) | (1 if d > 0 else 0)
            pp += ad
            if ad < lo:
                lo = ad
            if ad > hi:
                hi = ad
        if not ok:
            continue
        res_t.append(t0)
        res_p.append(word >> 4)
        res_c.append(word & 0xF)
        res_pp.append(2.0 * pp / N_PAIRS)
        res_lo.append(lo)
        res_hi.append(hi)
    return (np.array(res_t, dtype=float), np.array(res_p, dtype=np.int64),
            np.array(res_c, dtype=np.int64), np.array(res_pp, dtype=float),
            np.array(res_lo, dtype=float), np.array(res_hi, dtype=float))


def interval_collisions(starts, double duration):
    cdef const double[:, ::1] s = np.ascontiguousarray(starts, dtype=np.float64)
    cdef Py_ssize_t frames = s.shape[0], n = s.shape[1]
    cdef Py_ssize_t f, i, j, g
    hit_arr = np.zeros((frames, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] hit = hit_arr
    for f in range(frames):
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for g in range(f - 1 if f > 0 else 0, f + 2 if f + 2 <= frames else frames):
                    if fabs(s[f, i] - s[g, j]) < duration:
                        hit[f, i] = 1
                        break
                if hit[f, i]:
                    break
    return hit_arr.astype(bool)
