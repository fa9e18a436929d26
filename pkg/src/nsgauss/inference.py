"""Kernel estimation of threshold-AR coefficient curves with simultaneous
bands, bandwidth admissibility, and a covariance CUSUM statistic."""
from __future__ import annotations

import csv
import enum
import functools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, EigenvalueWarning, SingularDesignError, WindowError
from .linalg import psd_sqrt

__all__ = [
    "KernelShape", "KernelSpec", "BandResult", "BandwidthReport", "ChangePointStat",
    "fit_tvtar", "local_ar_fit", "bandwidth_check", "feasible_betas", "admissible_beta",
    "simultaneous_band", "band_covers", "longrun_cov_estimate", "cusum_covariance",
    "default_grid",
]

MIN_EFFECTIVE = 8


class KernelShape(str, enum.Enum):
    EPANECHNIKOV = "Epanechnikov"
    TRIANGULAR = "Triangular"
    UNIFORM = "Uniform"


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    shape: KernelShape = KernelShape.EPANECHNIKOV

    def __post_init__(self):
        if not 0 < self.bandwidth < 0.5:
            raise DomainError(f"bandwidth must lie in (0, 1/2), got {self.bandwidth}")
        object.__setattr__(self, "shape", KernelShape(self.shape))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 1.0
        if self.shape is KernelShape.EPANECHNIKOV:
            k = 0.75 * (1.0 - x * x)
        elif self.shape is KernelShape.TRIANGULAR:
            k = 1.0 - np.abs(x)
        else:
            k = np.full_like(x, 0.5)
        return np.where(inside, k, 0.0)


def default_grid(bandwidth: float, points: int = 64) -> np.ndarray:
    """Equispaced points strictly inside ``(b, 1 - b)``."""
    return np.linspace(bandwidth, 1.0 - bandwidth, points + 2)[1:-1]


@dataclass(frozen=True, eq=False)
class BandResult:
    grid: np.ndarray
    theta_hat: np.ndarray
    m_matrix: np.ndarray
    kernel: KernelSpec
    n: int
    half_width: np.ndarray | None = None
    level: float | None = None
    weights: np.ndarray = field(default=None, repr=False)

    def write_csv(self, path):
        hw = self.half_width if self.half_width is not None else np.full(len(self.grid), np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "theta1_hat", "theta2_hat", "half_width"))
            for t, th, h in zip(self.grid, self.theta_hat, hw):
                w.writerow([repr(float(t)), repr(float(th[0])), repr(float(th[1])), repr(float(h))])


def _design(y):
    y = np.asarray(getattr(y, "values", y), dtype=float).reshape(-1)
    lag = y[:-1]
    v = np.stack([np.maximum(lag, 0.0), np.maximum(-lag, 0.0)], axis=1)
    return y, v, y[1:]


def _weights(kernel, grid, n):
    i = np.arange(2, n + 1) / n
    return kernel((i[None, :] - np.asarray(grid)[:, None]) / kernel.bandwidth)


def fit_tvtar(path, kernel: KernelSpec, grid=None) -> BandResult:
    """Kernel-weighted least squares of ``Y_i`` on ``(Y_{i-1}^+, Y_{i-1}^-)`` at
    each grid point, by exact solution of the 2x2 normal equations."""
    y, v, resp = _design(path)
    n = len(y)
    grid = default_grid(kernel.bandwidth) if grid is None else np.asarray(grid, dtype=float)
    w = _weights(kernel, grid, n)
    nb = n * kernel.bandwidth
    m = np.einsum("gi,ia,ib->gab", w, v, v) / nb
    rhs = np.einsum("gi,ia,i->ga", w, v, resp) / nb
    for g, t in enumerate(grid):
        eff = int(np.count_nonzero(w[g]))
        if eff < MIN_EFFECTIVE:
            raise SingularDesignError(f"only {eff} observations carry weight at t={t:.6g}")
        det = m[g, 0, 0] * m[g, 1, 1] - m[g, 0, 1] * m[g, 1, 0]
        if not abs(det) > 1e-12 * max(np.trace(m[g]) ** 2, 1e-300):
            raise SingularDesignError(f"local design is singular at t={t:.6g} "
                                      "(lagged values are one-signed)")
    theta = np.linalg.solve(m, rhs[..., None])[..., 0]
    return BandResult(grid, theta, m, kernel, n, weights=w)


def local_ar_fit(path, kernel: KernelSpec, grid=None) -> np.ndarray:
    """Kernel-weighted least squares of ``Y_i`` on ``Y_{i-1}`` (no threshold)."""
    y, _, resp = _design(path)
    n = len(y)
    grid = default_grid(kernel.bandwidth) if grid is None else np.asarray(grid, dtype=float)
    w = _weights(kernel, grid, n)
    lag = y[:-1]
    return (w @ (lag * resp)) / (w @ (lag * lag))


@dataclass(frozen=True)
class BandwidthReport:
    n: int
    p: float
    beta: float
    alpha: float
    e1: float
    e2: float
    admissible: bool
    window: tuple[float, float]
    window_empty: bool

    @property
    def bandwidth(self) -> float:
        return self.n ** -self.beta


def bandwidth_check(n: int, p: float, beta: float, alpha: float) -> BandwidthReport:
    """Exponents of ``n^{1/p}/sqrt(n b)`` and ``sqrt(n b) b^alpha`` for
    ``b = n^-beta``; admissible iff both are negative."""
    if not 0 < beta < 1:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not p > 2:
        raise DomainError(f"p must exceed 2, got {p}")
    e1 = 1.0 / p - (1.0 - beta) / 2.0
    e2 = (1.0 - beta) / 2.0 - alpha * beta
    lo, hi = 1.0 / (1.0 + 2.0 * alpha), 1.0 - 2.0 / p
    return BandwidthReport(n, p, beta, alpha, e1, e2, e1 < 0 and e2 < 0, (lo, hi), lo >= hi)


def feasible_betas(p: float, alpha: float, step: float = 1e-3) -> np.ndarray:
    """Brute-force scan of admissible ``beta`` on a grid of spacing ``step``."""
    count = int(round(1.0 / step))
    betas = np.arange(1, count) / count
    ok = [bandwidth_check(2, p, b, alpha).admissible for b in betas]
    return betas[np.array(ok, dtype=bool)]


def admissible_beta(p: float, alpha: float, beta: float) -> float:
    """``beta`` itself when admissible, else the midpoint of the feasibility
    window.  Raises :class:`DomainError` when the window is empty."""
    rep = bandwidth_check(2, p, beta, alpha)
    if rep.admissible:
        return beta
    if rep.window_empty:
        raise DomainError(f"no admissible bandwidth exponent for p={p}, alpha={alpha}")
    return 0.5 * (rep.window[0] + rep.window[1])


def _loo_residuals(fit: BandResult, y):
    """Leave-one-out residuals ``e_gi / (1 - h_gi)`` of every observation at
    every grid point, with leverage ``h_gi = K_gi v_i^T (n b M_g)^{-1} v_i``."""
    _, v, resp = _design(y)
    nb = fit.n * fit.kernel.bandwidth
    e = resp[None, :] - fit.theta_hat @ v.T
    minv = np.linalg.inv(fit.m_matrix)
    lev = fit.weights * np.einsum("ia,gab,ib->gi", v, minv, v) / nb
    return v, e / (1.0 - lev), minv


def simultaneous_band(fit: BandResult, path, level: float = 0.95, reps: int = 2000,
                      seed=0, batch: int = 250) -> BandResult:
    """Uniform half-width from the Gaussian surrogate of the score process.

    The score ``v_i e_i`` is a martingale difference sequence, so its
    surrogate has independent increments with covariance ``v_i v_i^T e_i^2``.
    The innovations are estimated by leave-one-out residuals of each local
    fit.  The half-width is the ``level``-quantile of
    ``max_t |M(t)^{-1} (n b)^{-1} sum_i K_i(t) G_i|_inf``.
    """
    if not 0 < level <= 1:
        raise DomainError(f"level must lie in (0, 1], got {level}")
    v, r, minv = _loo_residuals(fit, path)
    nb = fit.n * fit.kernel.bandwidth
    # map from scalar surrogate draws to normalized estimator errors at each grid point
    c = np.einsum("gab,ib,gi->iga", minv, v, fit.weights * r / nb).reshape(v.shape[0], -1)
    rng = np.random.default_rng(seed)
    maxima = []
    for start in range(0, reps, batch):
        xi = rng.standard_normal((min(batch, reps - start), v.shape[0]))
        maxima.append(np.abs(xi @ c).max(axis=1))
    maxima = np.concatenate(maxima)
    hw = float(np.quantile(maxima, level))
    return replace(fit, half_width=np.full(len(fit.grid), hw), level=level)


def band_covers(band: BandResult, truth1, truth2) -> bool:
    """True if both true curves lie inside the band at every grid point."""
    dev = np.abs(band.theta_hat - np.stack([truth1(band.grid), truth2(band.grid)], axis=1))
    return bool(np.all(dev <= band.half_width[:, None]))


def longrun_cov_estimate(w, lag_window: int) -> np.ndarray:
    """Bartlett lag-window estimate of ``sum_k Cov(W_0, W_k)``.

    Autocovariances use the ``1/n`` normalization, so ``lag_window=0`` is the
    sample covariance.  Negative eigenvalues are clipped with an
    :class:`EigenvalueWarning`.
    """
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    n = w.shape[0]
    if lag_window < 0 or lag_window >= n / 4:
        raise WindowError(f"lag window {lag_window} must lie in [0, n/4) with n={n}")
    dev = w - w.mean(axis=0)
    sigma = dev.T @ dev / n
    for k in range(1, lag_window + 1):
        gk = dev[k:].T @ dev[:-k] / n
        sigma += (1.0 - k / (lag_window + 1.0)) * (gk + gk.T)
    sigma = 0.5 * (sigma + sigma.T)
    lam, q = np.linalg.eigh(sigma)
    if lam[0] < 0:
        warnings.warn(f"long-run covariance estimate had eigenvalue {lam[0]:.3g}; clipped to 0",
                      EigenvalueWarning, stacklevel=2)
        sigma = (q * np.clip(lam, 0.0, None)) @ q.T
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


@functools.lru_cache(maxsize=8)
def _standard_bridges(reps: int, grid: int, d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((reps, grid, d)) / math.sqrt(grid)
    bm = np.cumsum(steps, axis=1)
    t = (np.arange(1, grid + 1) / grid)[None, :, None]
    bridges = bm - t * bm[:, -1:, :]
    bridges.setflags(write=False)
    return bridges


@dataclass(frozen=True, eq=False)
class ChangePointStat:
    cusum_path: np.ndarray
    sigma_w_hat: np.ndarray
    statistic: float
    surrogate_quantiles: dict
    surrogate_maxima: np.ndarray = field(repr=False)

    def rejects(self, level: float = 0.95) -> bool:
        return self.statistic > self.surrogate_quantiles[level]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("i", "cusum"))
            for i, c in enumerate(self.cusum_path, start=1):
                w.writerow([i, repr(float(c))])

    def summary(self, level: float = 0.95) -> str:
        q = self.surrogate_quantiles[level]
        return (f"statistic={self.statistic!r} quantile_{level}={q!r} "
                f"reject={self.rejects(level)}")


def cusum_covariance(w, sigma_w, reps: int = 1000, grid: int = 500, seed=0,
                     levels=(0.9, 0.95, 0.99)) -> ChangePointStat:
    """``max_i |C_i|_inf / sqrt(n)`` with ``C_i = sum_{k<=i} D_k - (i/n) sum_k D_k``
    and ``D_k = W_k - W_1``, calibrated by ``Sigma_W^{1/2}``-scaled Brownian
    bridges on ``grid`` points."""
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    n, d = w.shape
    root = psd_sqrt(np.atleast_2d(sigma_w))
    dev = w - w[0]
    s = np.cumsum(dev, axis=0)
    i = np.arange(1, n + 1)[:, None]
    c = s - (i / n) * s[-1]
    path = np.abs(c).max(axis=1) / math.sqrt(n)
    stat = float(path.max())
    bridges = _standard_bridges(reps, grid, d, int(seed))
    maxima = np.abs(bridges @ root.T).max(axis=(1, 2))
    quants = {lv: float(np.quantile(maxima, lv)) for lv in levels}
    return ChangePointStat(path, np.atleast_2d(sigma_w), stat, quants, maxima)
