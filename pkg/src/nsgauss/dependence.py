"""Functional dependence measure: analytic values, Monte-Carlo coupling
estimates, tail sums and decay-exponent fits."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import (
    DivergenceError,
    DomainError,
    NonconvergenceWarning,
    RankDeficiencyError,
    UnavailableCoefficientError,
)
from .processes import InnovationLaw, ProcessSpec
from .seeds import seed_stream


@dataclass(frozen=True, eq=False)
class DependenceProfile:
    """Dependence measures ``delta_j`` (j = 0..J) and tail sums
    ``theta_tails[i] = sum_{j >= i} delta_j``; ``tail`` is the (extrapolated)
    mass beyond lag J."""

    moment_order: float
    deltas: np.ndarray
    theta_tails: np.ndarray
    tail: float = 0.0
    fitted_chi: float | None = None
    fitted_a: float | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_deltas(cls, deltas, moment_order, tail=0.0, **meta):
        d = np.asarray(deltas, dtype=float)
        if np.any(d < 0):
            raise DomainError("dependence measures must be nonnegative")
        theta = np.empty_like(d)
        acc = float(tail)
        for i in range(len(d) - 1, -1, -1):
            acc = d[i] + acc
            theta[i] = acc
        return cls(moment_order, d, theta, float(tail), meta=meta)

    @property
    def theta0(self) -> float:
        return float(self.theta_tails[0])

    def with_fit(self, fit: "DecayFit") -> "DependenceProfile":
        return DependenceProfile(self.moment_order, self.deltas, self.theta_tails, self.tail,
                                 fit.chi_hat, fit.a_hat, self.meta)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "delta", "theta_tail"])
            for j, (d, t) in enumerate(zip(self.deltas, self.theta_tails)):
                w.writerow([j, repr(float(d)), repr(float(t))])


def gaussian_abs_moment(r: float, k: int = 1) -> float:
    """``E|Z|^r`` for a standard normal vector ``Z`` in ``R^k``."""
    return math.exp(r / 2 * math.log(2) + gammaln((k + r) / 2) - gammaln(k / 2))


def _coefficient(coeffs, j):
    if callable(coeffs):
        return np.atleast_2d(np.asarray(coeffs(j), dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None, None]
    if j >= coeffs.shape[0]:
        raise UnavailableCoefficientError(
            f"lag {j} exceeds the {coeffs.shape[0]} stored coefficients"
        )
    return coeffs[j]


def analytic_delta_linear(coeffs, law: InnovationLaw, r: float, j: int,
                          mc_draws: int = 2_000_000, seed=0) -> float:
    """``|| B_j (eps - eps') ||_r`` for a linear process.

    ``coeffs`` is an array ``(J+1, d, d)`` or a callable ``j -> B_j``.  Gaussian
    innovations are handled in closed form whenever the covariance of the
    difference is isotropic on its range (always for ``r = 2`` and for scalar
    processes); other cases fall back to Monte Carlo on the fixed linear form.
    """
    if not law.supports_moment(r):
        raise DomainError(f"innovation law has no finite moment of order {r}")
    b = _coefficient(coeffs, j)
    if not np.any(b):
        return 0.0
    cov = 2.0 * b @ law.cov @ b.T
    if law.family == "gaussian":
        if r == 2:
            return math.sqrt(max(np.trace(cov), 0.0))
        lam = np.linalg.eigvalsh(cov)
        lam = lam[lam > 1e-14 * lam.max()]
        if np.allclose(lam, lam[0], rtol=1e-12, atol=0):
            return math.sqrt(lam[0]) * gaussian_abs_moment(r, len(lam)) ** (1 / r)
    rng = np.random.default_rng(seed)
    diff = law.draw(rng, (mc_draws,)) - law.draw(rng, (mc_draws,))
    y = diff @ b.T
    return float(np.mean(np.linalg.norm(y, axis=-1) ** r) ** (1 / r))


@dataclass(frozen=True)
class McDelta:
    estimate: float
    se: float
    probe: int
    short_estimate: float
    history_len: int
    reps: int


def probe_grid(n: int, count: int = 16) -> np.ndarray:
    return np.unique(np.round(np.linspace(1, n, count)).astype(int))


def _moment_stats(z, r):
    """``(||Z||_r, se)`` from samples of ``|Z|``; delta-method standard error."""
    zr = z ** r
    m = zr.mean()
    if m == 0:
        return 0.0, 0.0
    se_m = zr.std(ddof=1) / math.sqrt(len(zr))
    return m ** (1 / r), (1 / r) * m ** (1 / r - 1) * se_m


def _probe(spec, i, j, r, reps, rng, long_len, short_len, n, batch):
    times = np.arange(i - long_len + 1, i + 1)
    z_long, z_short = [], []
    done = 0
    while done < reps:
        b = min(batch, reps - done)
        eps = spec.law.draw(rng, (b, long_len))
        fresh = spec.law.draw(rng, (b,))
        x_long = spec.terminal(eps, times, n)
        x_short = spec.terminal(eps[:, -short_len:], times[-short_len:], n)
        pos = long_len - 1 - j
        if pos >= 0:
            eps[:, pos] = fresh
            y_long = spec.terminal(eps, times, n)
            y_short = (spec.terminal(eps[:, -short_len:], times[-short_len:], n)
                       if j < short_len else x_short)
        else:
            y_long, y_short = x_long, x_short
        z_long.append(np.linalg.norm(x_long - y_long, axis=-1))
        z_short.append(np.linalg.norm(x_short - y_short, axis=-1))
        done += b
    est, se = _moment_stats(np.concatenate(z_long), r)
    short, _ = _moment_stats(np.concatenate(z_short), r)
    return est, se, short


def mc_delta(spec: ProcessSpec, j: int, r: float, reps: int = 10_000,
             history_len: int = 2048, n: int = 1024, probes: int = 16,
             seed=0, batch: int = 2048) -> McDelta:
    """Monte-Carlo estimate of ``sup_i || X_i - X_{i,(i-j)} ||_r``.

    For each probe time ``i`` the value ``X_i`` is computed from a window of
    innovations ending at ``i``; the coupled value reuses the same window with
    ``eps_{i-j}`` replaced by an independent copy.  The probe with the largest
    estimate is then re-estimated on an independent stream, so the reported
    value carries no selection bias from the maximum.

    Each window is ``2 * history_len`` long; the estimate from its last
    ``history_len`` entries is compared with the full one and a
    :class:`NonconvergenceWarning` is issued if they differ by more than two
    standard errors.
    """
    if j < 0:
        raise DomainError("lag must be nonnegative")
    memory = getattr(spec, "memory", None)
    long_len = 2 * history_len
    if memory is not None:
        long_len = min(long_len, memory)
    short_len = min(history_len, long_len)
    grid = probe_grid(n, probes)
    args = (j, r, reps)
    sizes = (long_len, short_len, n, batch)
    scan = [_probe(spec, i, *args, np.random.default_rng(seed_stream(seed, k)), *sizes)[0]
            for k, i in enumerate(grid)]
    winner = int(grid[int(np.argmax(scan))])
    rng = np.random.default_rng(seed_stream(seed, len(grid)))
    est, se, short = _probe(spec, winner, *args, rng, *sizes)
    best = McDelta(est, se, winner, short, long_len, reps)
    if abs(best.estimate - best.short_estimate) > 2 * best.se and best.se > 0:
        warnings.warn(
            f"doubling the history moved delta_{j} from {best.short_estimate:.4g} to "
            f"{best.estimate:.4g} (se {best.se:.2g}); increase history_len",
            NonconvergenceWarning,
            stacklevel=2,
        )
    return best


def mc_profile(spec: ProcessSpec, max_lag: int, r: float, **kwargs) -> DependenceProfile:
    """Profile of Monte-Carlo deltas for lags ``0..max_lag`` (no extrapolated tail)."""
    seed = kwargs.pop("seed", 0)
    results = [mc_delta(spec, j, r, seed=seed_stream(seed, j), **kwargs)
               for j in range(max_lag + 1)]
    return DependenceProfile.from_deltas(
        [m.estimate for m in results], r,
        standard_errors=[m.se for m in results],
        reps=results[0].reps, history_len=results[0].history_len,
    )


def _tail_fit_slice(deltas):
    J = len(deltas) - 1
    k = max(4, (J + 1) // 4)
    idx = np.arange(max(0, J + 1 - k), J + 1)
    idx = idx[deltas[idx] > 0]
    return idx


def _extrapolated(deltas, start, model):
    """``sum_{j >= start} delta_j`` for ``start > J`` under the fitted tail model."""
    J = len(deltas) - 1
    if model == "none":
        return 0.0
    idx = _tail_fit_slice(deltas)
    if len(idx) < 2:
        raise RankDeficiencyError("need at least two positive trailing deltas to extrapolate")
    logd = np.log(deltas[idx])
    if model == "geometric":
        slope, icpt = np.polyfit(idx, logd, 1)
        rho = math.exp(slope)
        if not rho < 1:
            raise DivergenceError(f"fitted geometric ratio {rho:.4g} >= 1")
        return math.exp(icpt + slope * start) / (1 - rho)
    if model == "polylog":
        idx = idx[idx >= 3]
        if len(idx) < 3:
            raise RankDeficiencyError("polylog extrapolation needs three lags >= 3")
        x = np.column_stack([np.ones(len(idx)), -np.log(idx), -np.log(np.log(idx))])
        (c, beta, a), *_ = np.linalg.lstsq(x, logd, rcond=None)
        if not beta > 1:
            raise DivergenceError(f"fitted tail exponent chi = {beta - 1:.4g} is not positive")
        val, _ = integrate.quad(
            lambda t: math.exp(c - beta * math.log(t) - a * math.log(math.log(t))),
            start - 0.5, math.inf, limit=200,
        )
        return val
    raise DomainError(f"unknown extrapolation model {model!r}")


def theta_tail(profile: DependenceProfile, i: int, extrapolation: str = "auto") -> float:
    """``Theta_i = sum_{j >= i} delta_j``: stored deltas plus an extrapolated tail.

    ``extrapolation`` is ``"none"``, ``"geometric"``, ``"polylog"`` or
    ``"auto"`` (no tail when the last stored delta is exactly zero, geometric
    otherwise).
    """
    d = profile.deltas
    J = len(d) - 1
    model = extrapolation
    if model == "auto":
        model = "none" if d[-1] == 0 else "geometric"
    head = float(d[i:].sum()) if i <= J else 0.0
    return head + _extrapolated(d, max(i, J + 1), model)


@dataclass(frozen=True)
class DecayFit:
    chi_hat: float
    a_hat: float
    intercept: float
    rmse: float
    fit_range: tuple
    super_polynomial: bool

    def report(self) -> dict:
        return {
            "chi_hat": self.chi_hat,
            "a_hat": self.a_hat,
            "rmse": self.rmse,
            "range": list(self.fit_range),
            "super_polynomial": self.super_polynomial,
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True)


def _lsq_decay(i, theta):
    x = np.column_stack([np.ones(len(i)), -np.log(i), -np.log(np.log(i))])
    y = np.log(theta)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    rmse = float(np.sqrt(np.mean((x @ coef - y) ** 2)))
    return coef, rmse


def fit_decay(profile: DependenceProfile, fit_range: tuple[int, int]) -> DecayFit:
    """Least squares ``log Theta_i ~ c - chi log i - A log log i`` on
    ``lo <= i <= hi``.

    The fit is repeated on the first half of the range; if chi grows by more
    than 25% when the range is extended the decay is flagged super-polynomial
    (geometric tails have no finite chi).
    """
    lo, hi = fit_range
    if lo < 3:
        raise DomainError("fit range must start at i >= 3")
    hi = min(hi, len(profile.theta_tails) - 1)
    i = np.arange(lo, hi + 1)
    if len(i) < 4:
        raise RankDeficiencyError(f"fit range {fit_range} has fewer than 4 points")
    theta = profile.theta_tails[i]
    if np.any(theta <= 0):
        raise DomainError("tail sums must be strictly positive on the fit range")
    coef, rmse = _lsq_decay(i, theta)
    half = i[: max(4, len(i) // 2)]
    super_poly = False
    if len(half) < len(i):
        coef_half, _ = _lsq_decay(half, profile.theta_tails[half])
        super_poly = bool(coef[1] > 1.25 * coef_half[1] and coef[1] > 0)
    return DecayFit(float(coef[1]), float(coef[2]), float(coef[0]), rmse, (int(lo), int(hi)),
                    super_poly)


def covariance_process_delta(profile: DependenceProfile, j: int, x_norm: float) -> float:
    """Bound ``2 sup_i ||X_i||_q delta_{j,q}`` on the lag-j dependence of the
    quadratic process ``W_i = (X_ir X_is)`` at moment ``q / 2``."""
    q = profile.moment_order
    if not q > 4:
        raise DomainError(f"need moment order q > 4 for the covariance process, got {q}")
    delta = profile.deltas[j] if j < len(profile.deltas) else 0.0
    return 2.0 * x_norm * float(delta)
