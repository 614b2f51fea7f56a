"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and the speedup. Inputs mirror real
workloads: a receiver-chain output holding a few dozen overlapping frames,
and 20 000 rounds of four free-running transmitters.
"""
import argparse
import timeit

import numpy as np

from lumicell import _kernels_py
from lumicell.harness import canonical_floor, synthesize_timeline, point_rss
from lumicell.mac import async_starts
from lumicell.phy import Waveform, receiver_chain

try:
    from lumicell import _kernels as _compiled
except ImportError:
    _compiled = None


def workloads():
    sc = canonical_floor(n_slots=20, noise_sigma=0.01)
    rss = point_rss(sc, (14.6, 15.3))
    ids = np.array([l.id for l, r in zip(sc.luminaires, rss) if r > 0])
    amps = rss[rss > 0]
    x, *_ = synthesize_timeline(sc, ids, amps, 20, np.random.default_rng(0))
    rx = receiver_chain(Waveform(x, sc.phy.analog_rate), sc.phy).samples
    starts = async_starts(20, 4, 20_000, np.random.default_rng(1))
    return {
        "high_runs": lambda k: k.high_runs(rx, 17, 57),
        "scan_frames": lambda k: k.scan_frames(rx, 4.8, 17, 57, 0.5),
        "interval_collisions": lambda k: k.interval_collisions(starts, 1.0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    jobs = workloads()
    print(f"{'kernel':22s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, job in jobs.items():
        t_py = min(timeit.repeat(lambda: job(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:22s} {t_py:10.2f} {'n/a':>12s}")
            continue
        t_c = min(timeit.repeat(lambda: job(_compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:22s} {t_py:10.2f} {t_c:12.3f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
