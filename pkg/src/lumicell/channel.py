"""Line-of-sight Lambertian channel and signal superposition."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from lumicell.phy import Waveform


class ChannelError(ValueError):
    pass


DOWN = (0.0, 0.0, -1.0)
UP = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Luminaire:
    id: int
    position: tuple
    orientation: tuple = DOWN
    m: float = 1.0
    tx_power: float = 1.0

    def __post_init__(self):
        if not 0 <= self.id <= 0xFFFF:
            raise ChannelError(f"luminaire id {self.id!r} is not a 16-bit value")
        if self.m < 1:
            raise ChannelError("lambertian order must be >= 1")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "orientation", _unit(self.orientation))


@dataclass(frozen=True)
class ReceiverModel:
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = UP
    fov_half_angle: float = math.radians(60.0)
    area: float = 1.0
    noise_sigma: float = 0.01

    def __post_init__(self):
        if not 0 < self.fov_half_angle <= math.pi / 2:
            raise ChannelError("fov_half_angle must lie in (0, 90 deg]")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "orientation", _unit(self.orientation))

    def moved(self, x: float, y: float) -> "ReceiverModel":
        return ReceiverModel((x, y, self.position[2]), self.orientation,
                             self.fov_half_angle, self.area, self.noise_sigma)


def _unit(v):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ChannelError("orientation must be non-zero")
    return tuple(float(c) for c in v / norm)


def channel_gain(lum: Luminaire, rx: ReceiverModel) -> float:
    """DC gain (m+1) A cos^m(phi) cos(psi) / (2 pi d^2), zero outside the FOV."""
    v = np.subtract(rx.position, lum.position)
    d = float(np.linalg.norm(v))
    if d == 0:
        raise ChannelError("degenerate geometry: luminaire and receiver coincide")
    cos_phi = float(np.dot(v, lum.orientation)) / d
    cos_psi = -float(np.dot(v, rx.orientation)) / d
    if cos_phi <= 0 or cos_psi <= 0:
        return 0.0
    if math.acos(min(cos_psi, 1.0)) > rx.fov_half_angle:
        return 0.0
    return (lum.m + 1) * rx.area * cos_phi ** lum.m * cos_psi / (2 * math.pi * d * d)


def rss_model(lum: Luminaire, rx: ReceiverModel) -> float:
    return lum.tx_power * channel_gain(lum, rx)


def gain_field(lums, rx: ReceiverModel, xs, ys) -> np.ndarray:
    """Gains on a grid for facing-normal geometry, shape (len(lums), len(ys), len(xs)).

    Vectorized form of :func:`channel_gain` for a downward luminaire and an
    upward receiver: (m+1) A h^(m+1) / (2 pi d^(m+3)).
    """
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float))
    out = np.zeros((len(lums),) + X.shape)
    cos_fov = math.cos(rx.fov_half_angle)
    for k, lum in enumerate(lums):
        if lum.orientation != DOWN or rx.orientation != UP:
            raise ChannelError("gain_field only handles facing normals")
        h = lum.position[2] - rx.position[2]
        if h <= 0:
            raise ChannelError("luminaire must be above the receiver")
        d = np.sqrt((X - lum.position[0]) ** 2 + (Y - lum.position[1]) ** 2 + h * h)
        g = (lum.m + 1) * rx.area * h ** (lum.m + 1) / (2 * math.pi * d ** (lum.m + 3))
        out[k] = np.where(h / d >= cos_fov - 1e-15, g, 0.0)
    return out


def superpose(waveforms, noise_sigma: float = 0.0, seed=None, rng=None) -> Waveform:
    """Gain-weighted sample-wise sum, zero-padded to the longest input, plus AWGN.

    ``waveforms`` is a sequence of ``(Waveform, gain)``. Noise is added once,
    after summation.
    """
    waveforms = list(waveforms)
    if not waveforms:
        raise ChannelError("nothing to superpose")
    rates = {w.sample_rate for w, _ in waveforms}
    if len(rates) != 1:
        raise ChannelError(f"mismatched sample rates: {sorted(rates)}")
    if any(g < 0 for _, g in waveforms):
        raise ChannelError("gains must be non-negative")
    n = max(len(w) for w, _ in waveforms)
    total = np.zeros(n)
    for w, g in waveforms:
        total[:len(w)] += g * w.samples
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(seed)
        total += rng.normal(0.0, noise_sigma, n)
    return Waveform(total, rates.pop(), "unipolar")
