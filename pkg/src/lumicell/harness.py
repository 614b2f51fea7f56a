"""Scenario orchestration: beacon broadcasting, fingerprint surveys and localization runs.

Broadcasting runs at one of three levels:

``synchronized`` / ``asynchronous``
    Interval level. Delivery follows overlap of message intervals among the
    lights the receiver can see, with a capture threshold matching the
    demodulator (``capture_ratio=0`` gives the purely binary model); RSS is the
    channel model plus Gaussian noise of ``receiver.noise_sigma``.
``waveform``
    Every audible light's timeline (beacon in its slot, dummy carrier
    elsewhere) is synthesized at the analog rate, superposed with its channel
    gain and AWGN, then pushed through :func:`~lumicell.phy.receiver_chain` and
    :func:`~lumicell.phy.demodulate`. ``aligned`` selects common slot edges.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math
import warnings

import numpy as np

from lumicell import bayes, gpr
from lumicell.channel import Luminaire, ReceiverModel, channel_gain, rss_model
from lumicell.mac import TransmissionLog, per_message_success
from lumicell.phy import (BeaconFrame, PhyConfig, Waveform, demodulate, dummy_carrier,
                          encode_frame, receiver_chain, symbol_boundaries, FRAME_LEN)

MODES = ("synchronized", "asynchronous", "waveform")

# seed offsets per stage so surveys and evaluations never share a stream
FINGERPRINT_SEED = 1_000_000
STATIC_SEED = 2_000_000
FIXED_SEED = 3_000_000
TRACK_SEED = 4_000_000
LIGHT_OFF_SEED = 5_000_000


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    luminaires: list
    receiver: ReceiverModel
    phy: PhyConfig = field(default_factory=PhyConfig)
    n_slots: int = 20
    mode: str = "synchronized"
    aligned: bool = True
    eval_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    fingerprint_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    repetitions: int = 20
    seed: int = 0
    footprint: tuple = (0.0, 1.0, 0.0, 1.0)
    top_k: int = 4
    guard_slots: int = 2
    # interval-level capture threshold; None derives it from the demodulator margin
    capture_ratio: float | None = None

    def __post_init__(self):
        self.eval_points = np.asarray(self.eval_points, dtype=float).reshape(-1, 2)
        self.fingerprint_points = np.asarray(self.fingerprint_points, dtype=float).reshape(-1, 2)
        self.validate()

    def validate(self):
        if not self.luminaires:
            raise ScenarioError("scenario needs at least one luminaire")
        ids = [l.id for l in self.luminaires]
        if len(set(ids)) != len(ids):
            raise ScenarioError("luminaire ids must be distinct")
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_slots < 1 or self.repetitions < 1 or self.top_k < 1:
            raise ScenarioError("n_slots, repetitions and top_k must be >= 1")
        xmin, xmax, ymin, ymax = self.footprint
        for pts in (self.eval_points, self.fingerprint_points):
            if len(pts) and not (np.all((pts[:, 0] >= xmin - 1e-9) & (pts[:, 0] <= xmax + 1e-9))
                                 and np.all((pts[:, 1] >= ymin - 1e-9) & (pts[:, 1] <= ymax + 1e-9))):
                raise ScenarioError("evaluation points must lie inside the scene footprint")
        for lum in self.luminaires:
            if lum.position[2] <= self.receiver.position[2]:
                raise ScenarioError(f"luminaire {lum.id} is not above the receiver plane")

    @property
    def slot_duration(self) -> float:
        return self.phy.packet_duration

    @property
    def effective_capture_ratio(self) -> float:
        """Interference/signal power ratio a beacon survives at interval level.

        The demodulator keeps a pair when (a - i) / (a + i) >= decision_margin,
        i.e. i <= a (1 - margin) / (1 + margin) for aligned interference i.
        """
        if self.capture_ratio is not None:
            return self.capture_ratio
        k = self.phy.decision_margin
        return (1 - k) / (1 + k)

    @property
    def ids(self):
        return [l.id for l in self.luminaires]

    def without(self, *ids) -> "Scenario":
        """Copy with the given luminaires switched off."""
        keep = [l for l in self.luminaires if l.id not in ids]
        return replace(self, luminaires=keep, name=f"{self.name}-off{'-'.join(map(str, ids))}")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def unit_peak_power(h: float, m: float = 1.0, area: float = 1.0) -> float:
    """Transmit power putting the RSS directly below a light at 1."""
    return 2 * math.pi * h * h / ((m + 1) * area)


def canonical_testbed(light4_off: bool = False, seed: int = 0, noise_sigma: float = 0.01,
                      mode: str = "asynchronous", n_slots: int = 20) -> Scenario:
    """3 m x 3 m testbed, four corner lights at 2.37 m.

    36 fingerprint points on a 6 x 6, 0.4 m grid centred in the room; 25
    evaluation points on a 5 x 5 grid over [0.3, 2.7]^2.
    """
    h = 2.37
    p = unit_peak_power(h)
    corners = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)]
    lums = [Luminaire(k + 1, (x, y, h), tx_power=p) for k, (x, y) in enumerate(corners)]
    if light4_off:
        lums = lums[:3]
    fp_axis = 0.5 + 0.4 * np.arange(6)
    ev_axis = np.linspace(0.3, 2.7, 5)
    fx, fy = np.meshgrid(fp_axis, fp_axis)
    ex, ey = np.meshgrid(ev_axis, ev_axis)
    return Scenario(
        name="testbed",
        luminaires=lums,
        receiver=ReceiverModel((1.5, 1.5, 0.0), noise_sigma=noise_sigma),
        n_slots=n_slots,
        mode=mode,
        aligned=False,
        eval_points=np.column_stack([ex.ravel(), ey.ravel()]),
        fingerprint_points=np.column_stack([fx.ravel(), fy.ravel()]),
        repetitions=20,
        seed=seed,
        footprint=(0.0, 3.0, 0.0, 3.0),
    )


def canonical_floor(n_slots: int = 20, seed: int = 0, noise_sigma: float = 0.01,
                    mode: str = "waveform", grid: int = 40) -> Scenario:
    """30 m x 30 m floor, 9 x 9 lights at 3 m pitch, receiver 2.5 m below, 40 x 40 evaluation grid."""
    h = 2.5
    p = unit_peak_power(h)
    axis = 3.0 * np.arange(1, 10)
    lums = [Luminaire(j * 9 + i + 1, (x, y, h), tx_power=p)
            for j, y in enumerate(axis) for i, x in enumerate(axis)]
    step = 30.0 / grid
    ev_axis = step * (np.arange(grid) + 0.5)
    ex, ey = np.meshgrid(ev_axis, ev_axis)
    return Scenario(
        name="floor",
        luminaires=lums,
        receiver=ReceiverModel((15.0, 15.0, 0.0), noise_sigma=noise_sigma),
        n_slots=n_slots,
        mode=mode,
        aligned=True,
        eval_points=np.column_stack([ex.ravel(), ey.ravel()]),
        repetitions=20,
        seed=seed,
        footprint=(0.0, 30.0, 0.0, 30.0),
    )


def point_rss(scenario: Scenario, point) -> np.ndarray:
    rx = scenario.receiver.moved(float(point[0]), float(point[1]))
    return np.array([rss_model(l, rx) for l in scenario.luminaires])


def top_k_beacons(scenario: Scenario, point, k: int | None = None) -> list:
    """Ids of the ``k`` strongest in-FOV lights at ``point``; ties go to the smaller id."""
    k = scenario.top_k if k is None else k
    if k < 1:
        raise ScenarioError("k must be >= 1")
    rss = point_rss(scenario, point)
    ranked = sorted((-r, l.id) for r, l in zip(rss, scenario.luminaires) if r > 0)
    if len(ranked) < k:
        warnings.warn(f"only {len(ranked)} lights in view at {tuple(point)}, wanted {k}", stacklevel=2)
    return [i for _, i in ranked[:k]]


@dataclass
class PointBroadcast:
    log: TransmissionLog
    # rows of (frame, beacon_id, rss, clean)
    decodes: list
    top: list
    success_rate: float
    phantoms: int = 0


@lru_cache(maxsize=4096)
def _frame_samples(payload: int, f_mod: float, rate: float) -> np.ndarray:
    # same holding rule as phy.modulate, cached per beacon id
    symbols = encode_frame(BeaconFrame(payload)).symbols.astype(float)
    w = np.repeat(symbols, np.diff(symbol_boundaries(FRAME_LEN, rate, f_mod)))
    w.setflags(write=False)
    return w


def _interval_broadcast(scenario, ids, amps, frames, rng):
    N = scenario.n_slots
    n = len(ids)
    slots = rng.integers(N, size=(frames, n))
    if scenario.mode == "asynchronous":
        offsets = rng.uniform(0.0, N, size=n)
    else:
        offsets = np.zeros(n)
    # slot units keep aligned edges exact
    start = offsets[None, :] + (np.arange(frames)[:, None] * N + slots)
    log = TransmissionLog.from_intervals(np.tile(ids, frames), np.repeat(np.arange(frames), n),
                                         slots.ravel(), start.ravel(), 1.0,
                                         power=np.tile(amps, frames),
                                         capture_ratio=scenario.effective_capture_ratio)
    T = scenario.slot_duration
    log.start *= T
    log.end *= T
    sigma = scenario.receiver.noise_sigma
    noise = rng.normal(0.0, sigma, size=len(log)) if sigma > 0 else np.zeros(len(log))
    amp_of = dict(zip(ids, amps))
    decodes = []
    for k in np.flatnonzero(log.delivered):
        rss = max(amp_of[int(log.tx_id[k])] + noise[k], 0.0)
        decodes.append((int(log.frame[k]), int(log.tx_id[k]), float(rss), True))
    return log, decodes, 0


def synthesize_timeline(scenario, ids, amps, frames, rng):
    """Analog-rate superposition of every audible light's beacons and dummy carrier.

    Returns ``(samples, starts, slots, slot_len, guard)`` with ``starts`` the
    (frames, n) analog sample index of each beacon.
    """
    cfg = scenario.phy
    ra = cfg.analog_rate
    N = scenario.n_slots
    n = len(ids)
    slot_len = int(symbol_boundaries(FRAME_LEN, ra, cfg.f_mod)[-1])
    frame_len = N * slot_len
    guard = scenario.guard_slots * slot_len
    if scenario.aligned:
        shifts = np.zeros(n, dtype=np.int64)
    else:
        shifts = rng.integers(0, frame_len, size=n)
    slots = rng.integers(N, size=(frames, n))
    total = 2 * guard + frames * frame_len + (0 if scenario.aligned else frame_len)
    x = np.zeros(total)
    carriers = {}
    for s in np.unique(shifts):
        carriers[int(s)] = dummy_carrier(total, cfg, 1.0, rate=ra, phase=-int(s)).samples
        x += carriers[int(s)] * float(np.sum(amps[shifts == s]))
    starts = guard + shifts[None, :] + (np.arange(frames)[:, None] * N + slots) * slot_len
    for i in range(n):
        fw = _frame_samples(int(ids[i]), cfg.f_mod, ra)
        c = carriers[int(shifts[i])]
        for f in range(frames):
            s = int(starts[f, i])
            x[s:s + slot_len] += amps[i] * (fw - c[s:s + slot_len])
    sigma = scenario.receiver.noise_sigma
    if sigma > 0:
        x += sigma * rng.standard_normal(total)
    return x, starts, slots, slot_len, guard


def _waveform_broadcast(scenario, ids, amps, frames, rng):
    cfg = scenario.phy
    x, starts, slots, slot_len, guard = synthesize_timeline(scenario, ids, amps, frames, rng)
    rx = receiver_chain(Waveform(x, cfg.analog_rate), cfg)
    decoded = demodulate(rx, cfg)
    ratio = cfg.sample_rate / cfg.analog_rate
    tol = 0.5 * slot_len * ratio
    frame_len = scenario.n_slots * slot_len
    n = len(ids)
    delivered = np.zeros((frames, n), dtype=bool)
    col = {int(b): i for i, b in enumerate(ids)}
    decodes, phantoms = [], 0
    for d in decoded:
        b = d.frame.payload
        i = col.get(b)
        frame = None
        if i is not None:
            gap = np.abs(starts[:, i] * ratio - d.start)
            f = int(np.argmin(gap))
            if gap[f] <= tol:
                delivered[f, i] = True
                frame = f
        if frame is None:
            phantoms += i is None
            frame = int(np.clip((d.start / ratio - guard) // frame_len, 0, frames - 1))
        decodes.append((frame, b, d.rss, d.clean))
    T = scenario.slot_duration
    log = TransmissionLog(np.tile(ids, frames), np.repeat(np.arange(frames), n), slots.ravel(),
                          starts.ravel() / cfg.analog_rate, starts.ravel() / cfg.analog_rate + T,
                          delivered.ravel())
    return log, decodes, phantoms


def broadcast_point(scenario: Scenario, point, frames: int, rng) -> PointBroadcast:
    """Run ``frames`` MAC frames of broadcasting as heard at ``point``."""
    rss = point_rss(scenario, point)
    audible = np.flatnonzero(rss > 0)
    ids = np.array([scenario.luminaires[k].id for k in audible], dtype=np.int64)
    amps = rss[audible]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        top = top_k_beacons(scenario, point)
    if len(ids) == 0:
        empty = TransmissionLog([], [], [], [], [], [])
        return PointBroadcast(empty, [], top, math.nan)
    if scenario.mode == "waveform":
        log, decodes, phantoms = _waveform_broadcast(scenario, ids, amps, frames, rng)
    else:
        log, decodes, phantoms = _interval_broadcast(scenario, ids, amps, frames, rng)
    rate = per_message_success(log, top) if top else math.nan
    return PointBroadcast(log, decodes, top, rate, phantoms)


@dataclass
class ObservationTrace:
    points: np.ndarray
    success_rate: np.ndarray
    # rows of (point_index, frame, beacon_id, rss, clean)
    records: list
    top: list
    phantoms: int = 0

    def histogram(self, bins=40):
        rates = self.success_rate[np.isfinite(self.success_rate)]
        counts, edges = np.histogram(rates, bins=bins, range=(0.0, 1.0))
        return edges, counts


def run_broadcast(scenario: Scenario, points=None, frames: int | None = None,
                  threads: int = 1, seed_offset: int = 0) -> ObservationTrace:
    """Broadcast at every point (default: the scenario's evaluation points).

    Point ``k`` draws from its own generator seeded ``seed + seed_offset + k``,
    so results do not depend on ``threads``.
    """
    pts = scenario.eval_points if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
    frames = scenario.repetitions if frames is None else frames

    def work(k):
        rng = np.random.default_rng(scenario.seed + seed_offset + k)
        try:
            return broadcast_point(scenario, pts[k], frames, rng)
        except Exception as exc:
            raise ScenarioError(f"broadcast failed at point {k} {tuple(pts[k])}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(pts))))
    else:
        results = [work(k) for k in range(len(pts))]
    records = [(k, f, b, rss, clean) for k, r in enumerate(results) for f, b, rss, clean in r.decodes]
    return ObservationTrace(pts, np.array([r.success_rate for r in results]), records,
                            [r.top for r in results], sum(r.phantoms for r in results))


def generate_fingerprints(scenario: Scenario, threads: int = 1) -> gpr.FingerprintSet:
    """Survey RSS at the fingerprint points: mean of clean decodes, 0 where never decoded."""
    trace = run_broadcast(scenario, scenario.fingerprint_points, scenario.repetitions,
                          threads=threads, seed_offset=FINGERPRINT_SEED)
    ids = sorted({b for _, _, b, _, _ in trace.records})
    readings = {}
    for k, _, b, rss, clean in trace.records:
        if clean:
            readings.setdefault((k, b), []).append(rss)
    Y = np.zeros((len(trace.points), len(ids)))
    col = {b: i for i, b in enumerate(ids)}
    for (k, b), r in readings.items():
        # shifted mean: exact when every reading is identical
        Y[k, col[b]] = r[0] + sum(v - r[0] for v in r) / len(r)
    return gpr.FingerprintSet(trace.points, Y, ids)


def observe(scenario: Scenario, point, rng, t: float = 0.0) -> bayes.Observation:
    """One MAC frame of broadcasting reduced to per-beacon readings."""
    res = broadcast_point(scenario, point, 1, rng)
    readings = {}
    for _, b, rss, clean in res.decodes:
        if b in readings and readings[b][1] and not clean:
            continue
        readings[b] = (rss, clean)
    return bayes.Observation(t, readings)


@dataclass
class LocalizationRun:
    # rows of (t, x_est, y_est, x_true, y_true, error)
    rows: np.ndarray
    metrics: bayes.ErrorMetrics


def _known(maps, obs):
    readings = {b: v for b, v in obs.readings.items() if b in maps.mean}
    return bayes.Observation(obs.t, readings)


def run_localization(scenario: Scenario, maps: gpr.IntensityMapSet, trajectory,
                     motion: bayes.MotionParams = bayes.MotionParams(),
                     seed_offset: int = TRACK_SEED) -> LocalizationRun:
    """Filter along ``trajectory`` rows of (t, x, y), one observation cycle per row."""
    traj = np.asarray(trajectory, dtype=float).reshape(-1, 3)
    belief = bayes.init_belief(maps.grid)
    rows = []
    for k, (t, x, y) in enumerate(traj):
        rng = np.random.default_rng(scenario.seed + seed_offset + k)
        obs = _known(maps, observe(scenario, (x, y), rng, t))
        belief = bayes.predict_step(belief, motion)
        belief = bayes.update_step(belief, maps, obs)
        (xe, ye), _ = bayes.map_estimate(belief)
        rows.append((t, xe, ye, x, y, math.hypot(xe - x, ye - y)))
    rows = np.array(rows)
    return LocalizationRun(rows, bayes.error_metrics(rows[:, 1:3], rows[:, 3:5]))


def static_localization(scenario: Scenario, maps, cycles: int = 10,
                        motion: bayes.MotionParams = bayes.MotionParams(),
                        seed_offset: int = STATIC_SEED, restarts: int = 1) -> LocalizationRun:
    """Fresh filter at each evaluation point; the final MAP after ``cycles`` observations counts.

    With ``restarts > 1`` every point is localized that many times with
    independent observation streams; rows are ordered restart-major and the
    first column holds the point index.
    """
    if cycles < 1 or restarts < 1:
        raise ScenarioError("cycles and restarts must be >= 1")
    pts = scenario.eval_points
    rows = []
    for r in range(restarts):
        for k, (x, y) in enumerate(pts):
            traj = np.column_stack([np.arange(cycles), np.full(cycles, x), np.full(cycles, y)])
            run = run_localization(scenario, maps, traj, motion,
                                   seed_offset + (r * len(pts) + k) * cycles)
            rows.append((k, *run.rows[-1][1:]))
    rows = np.array(rows)
    return LocalizationRun(rows, bayes.error_metrics(rows[:, 1:3], rows[:, 3:5]))


def rectangle_trajectory(loops=((0.6, 0.6, 2.4, 2.4), (1.0, 1.0, 2.0, 2.0)),
                         speed: float = 1.0, rate_hz: float = 9.0) -> np.ndarray:
    """Closed rectangular loops walked counter-clockwise, sampled at ``rate_hz``."""
    step = speed / rate_hz
    pts = []
    for x0, y0, x1, y1 in loops:
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
        for (ax, ay), (bx, by) in zip(corners[:-1], corners[1:]):
            n = max(1, int(round(math.hypot(bx - ax, by - ay) / step)))
            for s in range(n):
                pts.append((ax + (bx - ax) * s / n, ay + (by - ay) * s / n))
        pts.append((x0, y0))
    pts = np.array(pts)
    t = np.arange(len(pts)) / rate_hz
    return np.column_stack([t, pts])


@dataclass
class LocalizationSuite:
    fingerprints: gpr.FingerprintSet
    hyperparams: gpr.GPHyperparams
    maps: gpr.IntensityMapSet
    static: LocalizationRun
    fixed: LocalizationRun
    track: LocalizationRun
    light_off: LocalizationRun


def localization_suite(scenario: Scenario, resolution: float = 0.04,
                       motion: bayes.MotionParams = bayes.MotionParams(),
                       static_cycles: int = 10, fixed_point=(1.0, 1.0), fixed_steps: int = 300,
                       off_id: int = 4, restarts: int = 20, threads: int = 1) -> LocalizationSuite:
    """Survey, map, and run the static, fixed-point, trajectory and light-off experiments."""
    fp = generate_fingerprints(scenario, threads=threads)
    hp = gpr.select_hyperparams(fp, gpr.candidate_grid(fp))
    xmin, xmax, ymin, ymax = scenario.footprint
    grid = gpr.GridSpec.covering(xmin, xmax, ymin, ymax, resolution)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        maps = gpr.build_maps(fp, hp, grid)
    static = static_localization(scenario, maps, static_cycles, motion, restarts=restarts)
    fixed_traj = np.column_stack([np.arange(fixed_steps), np.full(fixed_steps, fixed_point[0]),
                                  np.full(fixed_steps, fixed_point[1])])
    fixed = run_localization(scenario, maps, fixed_traj, motion, FIXED_SEED)
    track = run_localization(scenario, maps, rectangle_trajectory(), motion, TRACK_SEED)
    off = static_localization(scenario.without(off_id), maps, static_cycles, motion,
                              LIGHT_OFF_SEED, restarts)
    return LocalizationSuite(fp, hp, maps, static, fixed, track, off)
