"""CSV/JSON artifact writers and readers.

Floats go out as ``%.10g`` so reruns with one seed give identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from lumicell.phy import Waveform, PhyError

FLOAT_FMT = "{:.10g}"


def _f(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return FLOAT_FMT.format(v)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _f(v)
    return str(v)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_rows(path):
    """Header and rows (as strings), skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [r for r in reader if r]


# --- phy ---------------------------------------------------------------

def write_waveform(path, w: Waveform, labels=None) -> Path:
    """One amplitude per line after a ``# sample_rate=<Hz>`` header.

    ``labels`` (same length as the waveform) adds a second column naming the
    frame section each sample belongs to.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# sample_rate={_f(w.sample_rate)}\n")
        if labels is None:
            fh.writelines(_f(v) + "\n" for v in w.samples)
        else:
            if len(labels) != len(w.samples):
                raise PhyError("labels must match the waveform length")
            fh.writelines(f"{_f(v)},{lab}\n" for v, lab in zip(w.samples, labels))
    return path


def read_waveform(path, coupling: str = "unipolar") -> Waveform:
    rate = None
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "sample_rate":
                    rate = float(val)
                continue
            values.append(float(line.split(",")[0]))
    if rate is None:
        raise PhyError(f"{path}: missing '# sample_rate=' header")
    return Waveform(np.array(values), rate, coupling)


def write_decoded(path, frames) -> Path:
    return write_rows(path, ["start_sample", "payload_hex", "rss", "clean"],
                      [(d.start_sample, f"{d.frame.payload:04x}", d.rss, d.clean) for d in frames])


# --- mac ---------------------------------------------------------------

MAC_HEADER = ["N", "n", "mode", "frames", "success_rate", "ci_low", "ci_high"]


def write_success_rates(path, rows) -> Path:
    return write_rows(path, MAC_HEADER, rows)


# --- channel / gpr -----------------------------------------------------

def write_gain_grid(path, xs, ys, fields: dict) -> Path:
    """``fields`` maps beacon id -> (ny, nx) gain raster."""
    def rows():
        for b in sorted(fields):
            g = fields[b]
            for j, y in enumerate(ys):
                for i, x in enumerate(xs):
                    yield x, y, b, g[j, i]
    return write_rows(path, ["x", "y", "beacon_id", "gain"], rows())


def write_fingerprints(path, fp) -> Path:
    rows = ((x, y, b, fp.Y[k, c]) for k, (x, y) in enumerate(fp.X)
            for c, b in enumerate(fp.beacon_ids))
    return write_rows(path, ["x", "y", "beacon_id", "rss"], rows)


def read_fingerprints(path):
    from lumicell.gpr import FingerprintSet
    _, rows = read_rows(path)
    pts, ids, vals = {}, set(), {}
    for x, y, b, r in rows:
        key = (float(x), float(y))
        pts.setdefault(key, len(pts))
        ids.add(int(b))
        vals[(key, int(b))] = float(r)
    ids = sorted(ids)
    X = np.array(list(pts))
    Y = np.array([[vals.get((key, b), 0.0) for b in ids] for key in pts])
    return FingerprintSet(X, Y, ids)


def write_map(path, maps, beacon_id) -> Path:
    g = maps.grid
    mean, var = maps.mean[beacon_id], maps.variance[beacon_id]
    rows = ((x, y, mean[j, i], var[j, i]) for j, y in enumerate(g.ys) for i, x in enumerate(g.xs))
    return write_rows(path, ["x", "y", "mean", "variance"], rows)


# --- localization ------------------------------------------------------

def write_trajectory(path, rows) -> Path:
    return write_rows(path, ["t", "x_est", "y_est", "x_true", "y_true", "error"], rows)


def write_cdf(path, metrics) -> Path:
    return write_rows(path, ["percentile", "error_m"], ((int(p), e) for p, e in metrics.cdf))


def write_trace(path, trace) -> Path:
    rows = ((trace.points[k][0], trace.points[k][1], f, b, rss, clean)
            for k, f, b, rss, clean in trace.records)
    return write_rows(path, ["point_x", "point_y", "frame", "beacon_id", "rss", "clean"], rows)


def write_histogram(path, edges, counts) -> Path:
    return write_rows(path, ["bin_low", "bin_high", "count"],
                      zip(edges[:-1], edges[1:], counts))


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
