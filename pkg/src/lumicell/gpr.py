"""Gaussian process regression of per-beacon RSS over 2D positions."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import linalg

JITTER_START = 1e-10
JITTER_MAX = 1e-6


class GPRError(ValueError):
    pass


@dataclass(frozen=True)
class GPHyperparams:
    sigma_f2: float
    length_scale: float
    sigma_n2: float

    def __post_init__(self):
        if not (self.sigma_f2 > 0 and self.length_scale > 0 and self.sigma_n2 > 0):
            raise GPRError(f"hyperparameters must be strictly positive: {self}")


@dataclass
class FingerprintSet:
    """Design matrix ``X`` (n, 2) and RSS matrix ``Y`` (n, L), one column per beacon."""

    X: np.ndarray
    Y: np.ndarray
    beacon_ids: list

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        self.beacon_ids = [int(b) for b in self.beacon_ids]
        n = self.X.shape[0]
        if n < 1 or self.X.shape[1] != 2:
            raise GPRError("X must be an (n, 2) matrix with n >= 1")
        if self.Y.shape != (n, len(self.beacon_ids)):
            raise GPRError(f"Y must be ({n}, {len(self.beacon_ids)}), got {self.Y.shape}")
        if not np.all(np.isfinite(self.X)):
            raise GPRError("positions must be finite")

    def y(self, beacon_id: int) -> np.ndarray:
        return self.Y[:, self.beacon_ids.index(beacon_id)]


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice; node (i, j) sits at (x0 + i*res, y0 + j*res)."""

    x0: float
    y0: float
    resolution: float
    nx: int
    ny: int

    @classmethod
    def covering(cls, xmin, xmax, ymin, ymax, resolution):
        nx = int(math.floor((xmax - xmin) / resolution + 1e-9)) + 1
        ny = int(math.floor((ymax - ymin) / resolution + 1e-9)) + 1
        return cls(float(xmin), float(ymin), float(resolution), nx, ny)

    @property
    def xs(self):
        return self.x0 + self.resolution * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.resolution * np.arange(self.ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    def points(self) -> np.ndarray:
        """Node coordinates, row-major over (y, x), shape (ny*nx, 2)."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])


def kernel(xp, xq, hp: GPHyperparams) -> float:
    d = np.subtract(xp, xq)
    return hp.sigma_f2 * math.exp(-float(np.dot(d, d)) / (2 * hp.length_scale ** 2))


def kernel_matrix(A, B, hp: GPHyperparams) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)
    return hp.sigma_f2 * np.exp(-sq / (2 * hp.length_scale ** 2))


@dataclass
class GPModel:
    X: np.ndarray
    y: np.ndarray
    hp: GPHyperparams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    beacon_id: int = -1


def _cholesky(C, beacon_id):
    jitter = 0.0
    n = len(C)
    while True:
        try:
            L = linalg.cholesky(C + jitter * np.eye(n), lower=True, check_finite=True)
            return L, jitter
        except linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise GPRError(f"ill-conditioned kernel matrix for beacon {beacon_id}") from None


def fit_one(X, y, hp: GPHyperparams, beacon_id: int = -1) -> GPModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    C = kernel_matrix(X, X, hp) + hp.sigma_n2 * np.eye(len(X))
    L, jitter = _cholesky(C, beacon_id)
    alpha = linalg.cho_solve((L, True), y)
    return GPModel(X, y, hp, L, alpha, jitter, beacon_id)


def fit(fp: FingerprintSet, hp: GPHyperparams) -> dict:
    """One Cholesky-backed model per beacon, keyed by beacon id."""
    return {b: fit_one(fp.X, fp.Y[:, k], hp, b) for k, b in enumerate(fp.beacon_ids)}


def predict_many(model: GPModel, Xs):
    """Vectorized :func:`predict` over query rows ``Xs`` (m, 2)."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    Ks = kernel_matrix(Xs, model.X, model.hp)
    mean = Ks @ model.alpha
    v = linalg.solve_triangular(model.chol, Ks.T, lower=True)
    var = model.hp.sigma_f2 - (v * v).sum(axis=0)
    var = np.maximum(var, 0.0)
    return mean, var, var + model.hp.sigma_n2


def predict(model: GPModel, x):
    """Posterior mean, latent variance and observation variance at one point."""
    m, v, vo = predict_many(model, np.asarray(x, dtype=float)[None, :])
    return float(m[0]), float(v[0]), float(vo[0])


def log_marginal_likelihood(fp: FingerprintSet, hp: GPHyperparams) -> float:
    """Sum over beacons of log N(y; 0, K + sigma_n^2 I)."""
    n = len(fp.X)
    C = kernel_matrix(fp.X, fp.X, hp) + hp.sigma_n2 * np.eye(n)
    L, _ = _cholesky(C, "*")
    logdet = 2.0 * np.log(np.diag(L)).sum()
    total = 0.0
    for k in range(fp.Y.shape[1]):
        y = fp.Y[:, k]
        alpha = linalg.cho_solve((L, True), y)
        total += -0.5 * y @ alpha - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
    return float(total)


def select_hyperparams(fp: FingerprintSet, candidates) -> GPHyperparams:
    candidates = list(candidates)
    if not candidates:
        raise GPRError("candidate grid is empty")
    best, best_lml = None, -math.inf
    for hp in candidates:
        try:
            lml = log_marginal_likelihood(fp, hp)
        except GPRError:
            continue
        if lml > best_lml:
            best, best_lml = hp, lml
    if best is None:
        raise GPRError("every candidate produced an ill-conditioned kernel matrix")
    return best


def candidate_grid(fp: FingerprintSet, length_scales=(0.25, 0.5, 1.0, 1.5, 2.0, 3.0),
                   noise_fractions=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2), signal_scales=(0.5, 1.0, 2.0, 4.0)):
    """Candidates around the data's second moment."""
    s2 = float(np.mean(fp.Y ** 2)) or 1.0
    return [GPHyperparams(s2 * a, l, s2 * a * f)
            for a in signal_scales for l in length_scales for f in noise_fractions]


def default_hyperparams(fp: FingerprintSet) -> GPHyperparams:
    s2 = float(np.var(fp.Y))
    if s2 <= 0:
        s2 = 1.0
    return GPHyperparams(s2, 1.0, 0.01 * s2)


@dataclass
class IntensityMapSet:
    grid: GridSpec
    mean: dict = field(default_factory=dict)
    variance: dict = field(default_factory=dict)
    latent_variance: dict = field(default_factory=dict)

    @property
    def beacon_ids(self):
        return list(self.mean)


def build_maps(fp: FingerprintSet, hp: GPHyperparams, grid: GridSpec) -> IntensityMapSet:
    """Rasterize each beacon's posterior mean and observation variance on ``grid``."""
    lo = fp.X.min(axis=0)
    hi = fp.X.max(axis=0)
    if (grid.xs[0] < lo[0] or grid.xs[-1] > hi[0] or grid.ys[0] < lo[1] or grid.ys[-1] > hi[1]):
        warnings.warn("map grid extends beyond the fingerprint hull; border values are extrapolated",
                      stacklevel=2)
    pts = grid.points()
    maps = IntensityMapSet(grid)
    for b, model in fit(fp, hp).items():
        m, v, vo = predict_many(model, pts)
        maps.mean[b] = m.reshape(grid.shape)
        maps.latent_variance[b] = v.reshape(grid.shape)
        maps.variance[b] = vo.reshape(grid.shape)
    return maps
