"""``lumicell`` command line.

Exit codes: 0 success, 1 validation error, 2 acceptance failure, 3 I/O error.
Everything a subcommand writes lands in ``<out>/<subcommand>/``.
"""
from __future__ import annotations

import argparse
import math
import os
from pathlib import Path
import sys
import time
import warnings

import numpy as np

from lumicell import bayes, config, harness, io, mac, phy
from lumicell.config import ConfigError

EXIT_OK, EXIT_INVALID, EXIT_ACCEPTANCE, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "LUMICELL_SEED"
FLOOR_BUDGET_S = 30 * 60


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for acceptance failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--out", default="out", help="output root directory")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--threads", type=int, default=None, help="worker cap")
    p.add_argument("--N", type=int, default=None, help="slots per MAC frame")
    p.add_argument("--noise-sigma", type=float, default=None, help="receiver noise std")
    p.add_argument("--mode", default=None, help="synchronized, asynchronous or waveform")
    p.add_argument("--resolution", type=float, default=None, help="map resolution, m")
    p.add_argument("--quiet", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="lumicell", description="VLC beacon broadcasting and localization simulator")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phy-roundtrip", parents=[common], help="encode/decode random frames")
    p.add_argument("--count", type=int, default=None, help="round trips (default 1000)")
    p.add_argument("--corrupt", type=int, default=0, metavar="K",
                   help="also sweep K-symbol inversions over one frame")

    p = sub.add_parser("success-rate", parents=[common], help="BFSA success rate versus N")
    p.add_argument("--slots", default=None, help="comma-separated N list")
    p.add_argument("--n", type=int, default=None, help="transmitters (default 4)")
    p.add_argument("--frames", type=int, default=None, help="MAC frames per point")
    p.add_argument("--check", action="store_true", help="exit 2 unless the curves are ordered")

    p = sub.add_parser("floor-sim", parents=[common], help="floor-scale success-rate histogram")
    p.add_argument("--points", type=int, default=None,
                   help="evaluate only every k-th grid point so about this many remain")
    p.add_argument("--trace", action="store_true", help="also write the per-frame decode trace")

    p = sub.add_parser("localize", parents=[common], help="testbed localization experiments")
    p.add_argument("--check", action="store_true",
                   help="exit 2 unless the synthetic accuracy bounds hold")
    return ap


def resolve_seed(arg, cfg: config.RunConfig) -> int:
    if arg is not None:
        if arg < 0:
            raise ConfigError("--seed must be >= 0")
        return arg
    if cfg.values.get("seed") is not None:
        return cfg.values["seed"]
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            v = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
        if v < 0:
            raise ConfigError(f"{SEED_ENV} must be >= 0")
        return v
    return 0


def load_config(args) -> config.RunConfig:
    """Config file, then flag overrides, then ``--set`` pairs; all validated up front."""
    cfg = config.load(args.config) if args.config else config.RunConfig()
    flags = config.RunConfig()
    for key, val in (("mac.n_slots", args.N), ("channel.noise_sigma", args.noise_sigma),
                     ("mac.mode", args.mode), ("localize.resolution", args.resolution),
                     ("threads", args.threads), ("success.N", getattr(args, "slots", None)),
                     ("success.n", getattr(args, "n", None)),
                     ("success.frames", getattr(args, "frames", None)),
                     ("roundtrip.count", getattr(args, "count", None))):
        if val is not None:
            flags.set(key, str(val), "flag: ")
    cfg.update(flags).update(config.parse_overrides(args.overrides))
    if not 0 <= getattr(args, "corrupt", 0) <= phy.FRAME_LEN:
        raise ConfigError(f"--corrupt must lie in [0, {phy.FRAME_LEN}]")
    if getattr(args, "points", None) is not None and args.points < 1:
        raise ConfigError("--points must be >= 1")
    cfg.values["seed"] = resolve_seed(args.seed, cfg)
    return cfg


def _log(args, msg):
    if not args.quiet:
        print(msg)


# --- subcommands -------------------------------------------------------

def cmd_phy_roundtrip(args, cfg, out: Path) -> int:
    pc = config.phy_config(cfg)
    count = cfg.get("roundtrip.count")
    noise = cfg.get("roundtrip.noise_sigma")
    rng = np.random.default_rng(cfg.get("seed"))
    payloads = rng.integers(0, 1 << phy.PAYLOAD_BITS, size=count)
    rows, passed = [], 0
    for p in payloads:
        ok = phy.roundtrip(phy.BeaconFrame(int(p)), pc, rng, noise)
        passed += ok
        rows.append((f"{int(p):04x}", ok))
    io.write_rows(out / "roundtrips.csv", ["payload_hex", "ok"], rows)

    # one annotated received frame, noise-free, for inspection
    sample = phy.BeaconFrame(int(payloads[0]))
    w, lead = phy.transmit(sample, pc, idle_frames=0.5,
                           lead=int(round(0.5 * phy.FRAME_LEN * pc.analog_rate / pc.f_mod)))
    rx = phy.receiver_chain(w, pc)
    start = lead * pc.sample_rate / pc.analog_rate
    labels = phy.section_labels(len(rx), start, pc.samples_per_symbol())
    io.write_waveform(out / "sample_waveform.csv", rx, labels)
    io.write_decoded(out / "sample_decoded.csv", phy.demodulate(rx, pc))

    summary = {"count": int(count), "passed": int(passed), "failed": int(count - passed),
               "noise_sigma": noise, "airtime_s": pc.packet_duration}
    if args.corrupt:
        trials, false, rejected = phy.corruption_sweep(sample, pc, args.corrupt)
        summary.update(corrupt_width=args.corrupt, corrupt_trials=trials,
                       false_accepts=false, rejected=rejected)
    io.write_json(out / "summary.json", summary)
    _log(args, f"round trips: {passed}/{count} ok")
    if args.corrupt:
        _log(args, f"corruption sweep (width {args.corrupt}): {summary['false_accepts']} false accepts "
                   f"in {summary['corrupt_trials']} trials")
    failed = passed != count or summary.get("false_accepts", 0) > 0
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def cmd_success_rate(args, cfg, out: Path) -> int:
    Ns = cfg.get("success.N")
    n = cfg.get("success.n")
    frames = cfg.get("success.frames")
    if min(Ns) < 1:
        raise ConfigError("success.N: every N must be >= 1")
    seed = cfg.get("seed")
    rows, curves = [], {"theory": [], "sync": [], "async": []}
    for k, N in enumerate(Ns):
        th = mac.theoretical_success_rate(N, n)
        rows.append((N, n, "theory", 0, th, th, th))
        curves["theory"].append(th)
        for mode, fn in (("sync", mac.simulate_sync), ("async", mac.simulate_async)):
            s = fn(N, n, frames, seed=seed + 1000 * k + (mode == "async"))
            lo, hi = mac.wilson_interval(round(s * frames), frames)
            rows.append((N, n, mode, frames, s, lo, hi))
            curves[mode].append(s)
    io.write_success_rates(out / "success_rate.csv", rows)
    for N, th, s, a in zip(Ns, curves["theory"], curves["sync"], curves["async"]):
        _log(args, f"N={N:3d}  theory={th:.4f}  sync={s:.4f}  async={a:.4f}")
    if args.check:
        tol = 2.0 / math.sqrt(frames)    # four binomial sigmas at p = 1/2
        order = np.argsort(Ns)
        mono = all(np.all(np.diff(np.asarray(curves[m])[order]) >= -tol) for m in ("sync", "async"))
        below = all(a <= s + tol and s <= t + tol
                    for t, s, a in zip(curves["theory"], curves["sync"], curves["async"]))
        if not (mono and below):
            print("success-rate check failed: curves not monotone or not ordered", file=sys.stderr)
            return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_floor_sim(args, cfg, out: Path) -> int:
    sc = config.build_scenario(cfg, "floor")
    pts = sc.eval_points
    if args.points is not None:
        step = max(1, len(pts) // args.points)
        pts = pts[::step]
    threads = cfg.get("threads")
    # time a few points first and project the full run
    probe = min(len(pts), 8)
    t0 = time.perf_counter()
    harness.run_broadcast(sc, pts[:probe], threads=1)
    per_point = (time.perf_counter() - t0) / probe
    projected = per_point * len(pts) / threads
    if projected > FLOOR_BUDGET_S and sc.mode == "waveform":
        print(f"projected runtime {projected / 60:.0f} min at waveform level; "
              f"consider --mode synchronized (interval level)", file=sys.stderr)
    trace = harness.run_broadcast(sc, pts, threads=threads)
    rates = trace.success_rate
    io.write_rows(out / "point_success.csv", ["point_x", "point_y", "success_rate"],
                  ((p[0], p[1], r) for p, r in zip(trace.points, rates)))
    edges, counts = trace.histogram(cfg.get("floor.bins"))
    io.write_histogram(out / "histogram.csv", edges, counts)
    if args.trace:
        io.write_trace(out / "trace.csv", trace)
    ok = rates[np.isfinite(rates)]
    q1, med, q3 = np.percentile(ok, [25, 50, 75]) if len(ok) else (math.nan,) * 3
    io.write_json(out / "summary.json", {
        "N": sc.n_slots, "mode": sc.mode, "n_points": int(len(pts)), "median": float(med),
        "iqr": float(q3 - q1), "mean": float(ok.mean()) if len(ok) else math.nan,
        "phantoms": int(trace.phantoms)})
    _log(args, f"N={sc.n_slots} {sc.mode}: median success {med:.4f}, IQR {q3 - q1:.4f} "
               f"over {len(pts)} points")
    return EXIT_OK


def _metrics_json(run):
    m = run.metrics
    return {"mean_m": m.mean, "p90_m": m.p90, "n_points": int(len(m.errors)),
            "std_m": float(np.std(m.errors))}


def cmd_localize(args, cfg, out: Path) -> int:
    sc = config.build_scenario(cfg, "testbed")
    res = cfg.get("localize.resolution")
    off_id = cfg.get("localize.off_id")
    if off_id not in sc.ids:
        raise ConfigError(f"localize.off_id: no light with id {off_id}")
    suite = harness.localization_suite(
        sc, resolution=res, motion=bayes.MotionParams(cfg.get("localize.sigma_move")),
        static_cycles=cfg.get("localize.static_cycles"),
        fixed_steps=cfg.get("localize.fixed_steps"), off_id=off_id,
        restarts=cfg.get("localize.restarts"), threads=cfg.get("threads"))
    io.write_fingerprints(out / "fingerprints.csv", suite.fingerprints)
    for b in suite.maps.beacon_ids:
        io.write_map(out / f"map_{b}.csv", suite.maps, b)
    runs = {"static": suite.static, "fixed": suite.fixed, "track": suite.track,
            "light_off": suite.light_off}
    for name, run in runs.items():
        io.write_trajectory(out / f"{name}.csv", run.rows)
        io.write_cdf(out / f"{name}_cdf.csv", run.metrics)
    hp = suite.hyperparams
    summary = {**_metrics_json(suite.static),
               "experiments": {k: _metrics_json(r) for k, r in runs.items()},
               "hyperparams": {"sigma_f2": hp.sigma_f2, "length_scale": hp.length_scale,
                               "sigma_n2": hp.sigma_n2},
               "resolution_m": res, "off_id": off_id}
    io.write_json(out / "summary.json", summary)
    for name, run in runs.items():
        _log(args, f"{name:9s} mean {run.metrics.mean:.3f} m  p90 {run.metrics.p90:.3f} m")
    if args.check:
        base, off = suite.static.metrics, suite.light_off.metrics
        ok = (base.mean <= 0.20 and base.p90 <= 0.45 and np.std(suite.fixed.metrics.errors) <= 0.05
              and base.mean < off.mean <= min(2 * base.mean, 0.45))
        if not ok:
            print("localize check failed", file=sys.stderr)
            return EXIT_ACCEPTANCE
    return EXIT_OK


COMMANDS = {
    "phy-roundtrip": cmd_phy_roundtrip,
    "success-rate": cmd_success_rate,
    "floor-sim": cmd_floor_sim,
    "localize": cmd_localize,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args)
        if cfg.get("threads") < 1:
            raise ConfigError("threads must be >= 1")
        out = Path(args.out) / args.command
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"lumicell: config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"lumicell: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"lumicell: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
