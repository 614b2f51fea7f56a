"""Grid Bayes filter over GPR intensity maps."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage

from lumicell.gpr import GridSpec, IntensityMapSet

UNDERFLOW = 1e-300
_LOG_2PI = math.log(2 * math.pi)


class LocalizationError(ValueError):
    pass


@dataclass
class BeliefGrid:
    grid: GridSpec
    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != self.grid.shape:
            raise LocalizationError(f"belief shape {self.p.shape} != grid {self.grid.shape}")


@dataclass
class Observation:
    """``readings`` maps beacon id -> (rss, clean)."""

    t: float = 0.0
    readings: dict = field(default_factory=dict)

    def clean_readings(self) -> dict:
        return {b: float(r) for b, (r, ok) in sorted(self.readings.items()) if ok}


@dataclass(frozen=True)
class MotionParams:
    sigma_move: float = 0.1

    def __post_init__(self):
        if self.sigma_move < 0:
            raise LocalizationError("sigma_move must be >= 0")


def init_belief(grid: GridSpec) -> BeliefGrid:
    if grid.nx < 1 or grid.ny < 1:
        raise LocalizationError("grid is empty")
    return BeliefGrid(grid, np.full(grid.shape, 1.0 / (grid.nx * grid.ny)))


def _check_ids(maps: IntensityMapSet, readings):
    unknown = sorted(set(readings) - set(maps.mean))
    if unknown:
        raise LocalizationError(f"beacon ids not in map: {unknown}")


def log_likelihood_grid(maps: IntensityMapSet, obs: Observation) -> np.ndarray:
    readings = obs.clean_readings()
    _check_ids(maps, readings)
    out = np.zeros(maps.grid.shape)
    for b, rss in readings.items():
        var = maps.variance[b]
        out += -0.5 * (rss - maps.mean[b]) ** 2 / var - 0.5 * np.log(var) - 0.5 * _LOG_2PI
    return out


def likelihood_grid(maps: IntensityMapSet, obs: Observation) -> np.ndarray:
    """Product over clean readings of N(rss; mu_b, var_b) at every cell; missing beacons give 1."""
    readings = obs.clean_readings()
    _check_ids(maps, readings)
    out = np.ones(maps.grid.shape)
    for b, rss in readings.items():
        var = maps.variance[b]
        out *= np.exp(-0.5 * (rss - maps.mean[b]) ** 2 / var) / np.sqrt(2 * math.pi * var)
    return out


def likelihood(maps: IntensityMapSet, obs: Observation, cell) -> float:
    """Likelihood at the grid node nearest to ``cell`` (x, y)."""
    g = maps.grid
    i = int(round((cell[0] - g.x0) / g.resolution))
    j = int(round((cell[1] - g.y0) / g.resolution))
    if not (0 <= i < g.nx and 0 <= j < g.ny):
        raise LocalizationError(f"cell {tuple(cell)} is outside the map grid")
    readings = obs.clean_readings()
    _check_ids(maps, readings)
    value = 1.0
    for b, rss in readings.items():
        mu, var = maps.mean[b][j, i], maps.variance[b][j, i]
        value *= math.exp(-0.5 * (rss - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)
    return value


def predict_step(belief: BeliefGrid, motion: MotionParams) -> BeliefGrid:
    """Diffuse with an isotropic Gaussian (truncated at 4 sigma) and renormalize."""
    if motion.sigma_move == 0:
        return BeliefGrid(belief.grid, belief.p.copy())
    sigma = motion.sigma_move / belief.grid.resolution
    p = ndimage.gaussian_filter(belief.p, sigma=sigma, mode="constant", cval=0.0, truncate=4.0)
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total <= 0:
        raise LocalizationError("belief mass vanished during diffusion")
    return BeliefGrid(belief.grid, p / total)


def update_step(belief: BeliefGrid, maps: IntensityMapSet, obs: Observation) -> BeliefGrid:
    """Posterior = prior x likelihood, renormalized; log-space when the product underflows."""
    if maps.grid != belief.grid:
        raise LocalizationError("belief and maps must share the grid")
    post = belief.p * likelihood_grid(maps, obs)
    total = post.sum()
    if total >= UNDERFLOW and np.isfinite(total):
        return BeliefGrid(belief.grid, post / total)
    with np.errstate(divide="ignore"):
        logp = np.log(belief.p) + log_likelihood_grid(maps, obs)
    top = np.max(logp)
    if not np.isfinite(top):
        raise LocalizationError("observation inconsistent with map")
    post = np.exp(logp - top)
    return BeliefGrid(belief.grid, post / post.sum())


def map_estimate(belief: BeliefGrid):
    """Coordinates of the most probable cell (first in row-major order on ties) and its mass."""
    k = int(np.argmax(belief.p))
    j, i = divmod(k, belief.grid.nx)
    g = belief.grid
    return (g.x0 + i * g.resolution, g.y0 + j * g.resolution), float(belief.p.flat[k])


@dataclass
class ErrorMetrics:
    errors: np.ndarray
    mean: float
    p90: float
    cdf: np.ndarray  # rows of (percentile, error_m)


def error_metrics(estimates, truths) -> ErrorMetrics:
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truths, dtype=float))
    if est.shape != tru.shape or len(est) < 1:
        raise LocalizationError(f"length mismatch: {len(est)} estimates vs {len(tru)} truths")
    err = np.hypot(*(est - tru).T)
    q = np.arange(101)
    cdf = np.column_stack([q, np.percentile(err, q)])
    return ErrorMetrics(err, float(err.mean()), float(np.percentile(err, 90)), cdf)
