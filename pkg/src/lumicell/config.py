"""Flat ``key=value`` run configuration with dotted sections.

::

    # comments start with '#'
    scenario = floor
    mac.n_slots = 50
    channel.noise_sigma = 0.01

Every key is typed and checked before anything runs; errors name the key.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

from lumicell import harness
from lumicell.phy import PhyConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str):
    out = [int(t) for t in s.replace(",", " ").split()]
    if not out:
        raise ValueError("empty list")
    return out


def _positive(t):
    def conv(s):
        v = t(s)
        if not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
            raise ValueError(f"must be positive, got {s!r}")
        return v
    return conv


def _nonneg(t):
    def conv(s):
        v = t(s)
        if v < 0 or (isinstance(v, float) and not math.isfinite(v)):
            raise ValueError(f"must be >= 0, got {s!r}")
        return v
    return conv


def _choice(*opts):
    def conv(s):
        v = s.strip()
        if v not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}, got {s!r}")
        return v
    return conv


# key -> (converter, default, help)
SCHEMA = {
    "scenario": (_choice("testbed", "floor"), None, "builtin scene; default depends on subcommand"),
    "seed": (_nonneg(int), 0, "master seed"),
    "threads": (_positive(int), 1, "worker cap for per-point parallelism"),
    "mac.n_slots": (_positive(int), None, "slots per MAC frame (N)"),
    "mac.mode": (_choice(*harness.MODES), None, "broadcast level"),
    "mac.repetitions": (_positive(int), None, "MAC frames per evaluation point"),
    "mac.aligned": (_bool, None, "common slot edges in waveform mode"),
    "mac.capture_ratio": (_nonneg(float), None, "interval-level capture threshold"),
    "channel.noise_sigma": (_nonneg(float), None, "receiver AWGN std (relative)"),
    "channel.fov_deg": (_positive(float), None, "receiver FOV half angle, degrees"),
    "phy.f_mod": (_positive(float), None, "modulation clock, Hz"),
    "phy.sample_rate": (_positive(float), None, "ADC rate, Hz"),
    "phy.dummy_carrier_freq": (_positive(float), None, "idle carrier, Hz"),
    "phy.lpf_order": (_positive(int), None, "Butterworth order"),
    "phy.lpf_cutoff": (_positive(float), None, "LPF cutoff, Hz"),
    "phy.analog_rate": (_positive(float), None, "synthesis rate, Hz"),
    "phy.decision_margin": (_positive(float), None, "Data pair acceptance margin"),
    "phy.fluctuation_ratio": (_positive(float), None, "clean-frame amplitude ratio"),
    "roundtrip.count": (_positive(int), 1000, "round trips for phy-roundtrip"),
    "roundtrip.noise_sigma": (_nonneg(float), 0.02, "noise for phy-roundtrip"),
    "success.N": (_int_list, [5, 10, 15, 20, 25, 30], "slot counts to sweep"),
    "success.n": (_nonneg(int), 4, "transmitters"),
    "success.frames": (_positive(int), 100_000, "MAC frames per simulated point"),
    "floor.grid": (_positive(int), 40, "evaluation grid side"),
    "floor.bins": (_positive(int), 40, "histogram bins"),
    "localize.resolution": (_positive(float), 0.04, "map resolution, m"),
    "localize.sigma_move": (_nonneg(float), 0.1, "motion diffusion per cycle, m"),
    "localize.static_cycles": (_positive(int), 10, "observation cycles per static estimate"),
    "localize.restarts": (_positive(int), 20, "independent static runs per point"),
    "localize.fixed_steps": (_positive(int), 300, "fixed-point estimation steps"),
    "localize.off_id": (_positive(int), 4, "light switched off in the robustness run"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        v = self.values.get(key)
        if v is None:
            v = SCHEMA[key][1]
        return default if v is None else v

    def set(self, key: str, raw: str, where: str = ""):
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{where}unknown config key {key!r}")
        try:
            self.values[key] = SCHEMA[key][0](raw)
        except ValueError as exc:
            raise ConfigError(f"{where}bad value for {key!r}: {exc}") from None

    def update(self, other: "RunConfig"):
        self.values.update(other.values)
        return self


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        where = f"{source}:{lineno}: "
        if not eq or not key.strip():
            raise ConfigError(f"{where}expected key=value, got {raw.strip()!r}")
        cfg.set(key, val.strip(), where)
    return cfg


def load(path) -> RunConfig:
    """Read a config file. ``OSError`` propagates to the caller."""
    with open(path) as fh:
        return parse_text(fh.read(), str(path))


def parse_overrides(pairs) -> RunConfig:
    cfg = RunConfig()
    for p in pairs or ():
        key, eq, val = p.partition("=")
        if not eq:
            raise ConfigError(f"override {p!r} is not key=value")
        cfg.set(key, val, "override: ")
    return cfg


_PHY_KEYS = ("f_mod", "sample_rate", "dummy_carrier_freq", "lpf_order", "lpf_cutoff",
             "analog_rate", "decision_margin", "fluctuation_ratio")


def phy_config(cfg: RunConfig) -> PhyConfig:
    kw = {k: cfg.values[f"phy.{k}"] for k in _PHY_KEYS if cfg.values.get(f"phy.{k}") is not None}
    try:
        return PhyConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"phy: {exc}") from None


def build_scenario(cfg: RunConfig, default: str) -> harness.Scenario:
    """Builtin scene named by ``scenario`` (or ``default``) with config overrides applied."""
    name = cfg.get("scenario", default)
    seed = cfg.get("seed")
    noise = cfg.get("channel.noise_sigma", 0.01)
    if name == "testbed":
        sc = harness.canonical_testbed(seed=seed, noise_sigma=noise,
                                       mode=cfg.get("mac.mode", "asynchronous"),
                                       n_slots=cfg.get("mac.n_slots", 20))
    else:
        sc = harness.canonical_floor(n_slots=cfg.get("mac.n_slots", 20), seed=seed,
                                     noise_sigma=noise, mode=cfg.get("mac.mode", "waveform"),
                                     grid=cfg.get("floor.grid"))
    changes = {"phy": phy_config(cfg)}
    for key, attr in (("mac.repetitions", "repetitions"), ("mac.aligned", "aligned"),
                      ("mac.capture_ratio", "capture_ratio")):
        if cfg.values.get(key) is not None:
            changes[attr] = cfg.values[key]
    fov = cfg.values.get("channel.fov_deg")
    if fov is not None:
        if fov > 90:
            raise ConfigError("channel.fov_deg must be <= 90")
        changes["receiver"] = replace(sc.receiver, fov_half_angle=math.radians(fov))
    try:
        return sc.with_(**changes)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None
