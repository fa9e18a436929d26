"""Data-generating processes driven by an explicit innovation stream.

Every process is a causal function of i.i.d. innovations.  ``filter`` maps an
innovation array ``(..., T, d_eps)`` observed at consecutive integer times to
the process values at the same times, starting from a zero state before the
first time.  Keeping the innovations explicit is what makes exact couplings
(replace one innovation, resample the remote past) possible downstream.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import (
    ContractionError,
    DomainError,
    InstabilityError,
    SingularityError,
)
from .linalg import psd_sqrt

FAMILIES = ("gaussian", "student_t", "uniform")


@dataclass(frozen=True, eq=False)
class InnovationLaw:
    """I.i.d. innovation law with covariance ``cov``.

    Student-t draws are standardized to unit variance before the covariance is
    applied, so ``cov`` is always the covariance matrix.
    """

    family: str = "gaussian"
    cov: np.ndarray = field(default_factory=lambda: np.eye(1))
    dof: float | None = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "cov", cov)
        if self.family not in FAMILIES:
            raise DomainError(f"unknown innovation family {self.family!r}")
        if cov.shape[0] != cov.shape[1]:
            raise DomainError("innovation covariance must be square")
        if self.family == "student_t" and (self.dof is None or self.dof <= 2):
            raise DomainError("student_t innovations need dof > 2")
        object.__setattr__(self, "_root", psd_sqrt(cov))

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def supports_moment(self, r: float) -> bool:
        return self.family != "student_t" or self.dof > r

    def standard(self, rng, shape) -> np.ndarray:
        """Unit-variance i.i.d. draws of shape ``(*shape, d)``."""
        shape = tuple(shape) + (self.dim,)
        if self.family == "gaussian":
            return rng.standard_normal(shape)
        if self.family == "student_t":
            return rng.standard_t(self.dof, size=shape) * math.sqrt((self.dof - 2) / self.dof)
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)

    def draw(self, rng, shape) -> np.ndarray:
        z = self.standard(rng, shape)
        if self.dim == 1:
            return z * self._root[0, 0]
        return z @ self._root


def gaussian(d: int = 1, scale: float = 1.0) -> InnovationLaw:
    return InnovationLaw("gaussian", scale * np.eye(d))


@dataclass
class SamplePath:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def partial_sums(self) -> np.ndarray:
        """``(n+1, d)`` cumulative sums with a zero first row."""
        out = np.zeros((self.n + 1, self.d))
        np.cumsum(self.values, axis=0, out=out[1:])
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{k + 1}" for k in range(self.d)])
            for t, row in enumerate(self.values, start=1):
                w.writerow([t] + [repr(float(x)) for x in row])


class ProcessSpec:
    """Common interface of all process kinds."""

    kind = "abstract"
    law: InnovationLaw

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def lead(self) -> int:
        """Number of innovations drawn before time 1."""
        raise NotImplementedError

    @property
    def linear(self) -> bool:
        return False

    def check(self) -> None:
        """Raise if the specification violates its invariants."""

    def filter(self, eps, times, n) -> np.ndarray:
        raise NotImplementedError

    def terminal(self, eps, times, n) -> np.ndarray:
        """Value at the last time of the window only."""
        return self.filter(eps, times, n)[..., -1, :]


@dataclass(frozen=True, eq=False)
class VectorLinear(ProcessSpec):
    """Finite vector moving average ``X_i = sum_j B_j eps_{i-j}``."""

    coeffs: np.ndarray
    law: InnovationLaw = field(default_factory=gaussian)

    kind = "vector_linear"

    def __post_init__(self):
        b = np.asarray(self.coeffs, dtype=float)
        if b.ndim == 1:
            b = b[:, None, None]
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise DomainError(f"coefficients must have shape (J+1, d, d), got {b.shape}")
        if b.shape[2] != self.law.dim:
            raise DomainError("coefficient and innovation dimensions differ")
        object.__setattr__(self, "coeffs", b)

    @property
    def dim(self):
        return self.coeffs.shape[1]

    @property
    def lead(self):
        return self.coeffs.shape[0] - 1

    @property
    def linear(self):
        return True

    @property
    def memory(self) -> int:
        """Number of innovations ``X_i`` depends on."""
        return self.coeffs.shape[0]

    def ma_coefficients(self):
        return self.coeffs

    def filter(self, eps, times, n):
        return linear_filter(self.coeffs, eps)

    def terminal(self, eps, times, n):
        lags = min(self.coeffs.shape[0], eps.shape[-2])
        out = np.zeros(eps.shape[:-2] + (self.dim,))
        for j in range(lags):
            out += eps[..., -1 - j, :] @ self.coeffs[j].T
        return out


def linear_filter(coeffs, eps, first_lag=0, last_lag=None) -> np.ndarray:
    """``sum_{l=first_lag}^{last_lag} B_l eps_{t-l}`` over the window, zero before it."""
    last = coeffs.shape[0] - 1 if last_lag is None else min(last_lag, coeffs.shape[0] - 1)
    T = eps.shape[-2]
    out = np.zeros(eps.shape[:-1] + (coeffs.shape[1],))
    scalar = coeffs.shape[1] == 1 and coeffs.shape[2] == 1
    for lag in range(first_lag, min(last, T - 1) + 1):
        if scalar:
            out[..., lag:, :] += coeffs[lag, 0, 0] * eps[..., : T - lag, :]
        else:
            out[..., lag:, :] += eps[..., : T - lag, :] @ coeffs[lag].T
    return out


def _as_mats(seq, d):
    mats = []
    for a in seq:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape != (d, d):
            raise DomainError(f"coefficient matrix has shape {a.shape}, expected {(d, d)}")
        mats.append(a)
    return tuple(mats)


@dataclass(frozen=True, eq=False)
class Varma(ProcessSpec):
    """``X_i - sum Psi_k X_{i-k} = eps_i + sum Phi_k eps_{i-k}``."""

    ar: Sequence = ()
    ma: Sequence = ()
    law: InnovationLaw = field(default_factory=gaussian)
    burn_in: int = 1024

    kind = "varma"

    def __post_init__(self):
        d = self.law.dim
        object.__setattr__(self, "ar", _as_mats(self.ar, d))
        object.__setattr__(self, "ma", _as_mats(self.ma, d))

    @property
    def dim(self):
        return self.law.dim

    @property
    def lead(self):
        return self.burn_in

    @property
    def linear(self):
        return True

    def companion_radius(self) -> float:
        a, d = len(self.ar), self.dim
        if a == 0:
            return 0.0
        comp = np.zeros((a * d, a * d))
        comp[:d, :] = np.hstack(self.ar)
        comp[d:, : (a - 1) * d] = np.eye((a - 1) * d)
        return float(np.abs(np.linalg.eigvals(comp)).max())

    def check(self):
        rho = self.companion_radius()
        if not rho < 1:
            raise InstabilityError(f"VARMA companion spectral radius {rho:.6g} >= 1")

    def ma_coefficients(self, tol=1e-12, max_lag=100_000):
        """MA coefficients up to the first lag where ``|B_j| < tol |B_0|`` for
        as many consecutive lags as the AR order (at least one)."""
        self.check()
        a = max(len(self.ar), 1)
        d = self.dim
        out = [np.eye(d)]
        quiet = 0
        j = 0
        while j < max_lag:
            j += 1
            b = self.ma[j - 1].copy() if j <= len(self.ma) else np.zeros((d, d))
            for k, psi in enumerate(self.ar, start=1):
                if j - k >= 0:
                    b += psi @ out[j - k]
            out.append(b)
            if j > len(self.ma):
                quiet = quiet + 1 if np.linalg.norm(b) < tol * math.sqrt(d) else 0
                if quiet >= a:
                    break
        return np.array(out)

    def filter(self, eps, times, n):
        if self.dim == 1:
            b = np.r_[1.0, [m[0, 0] for m in self.ma]]
            a = np.r_[1.0, [-m[0, 0] for m in self.ar]]
            return lfilter(b, a, eps, axis=-2)
        T = eps.shape[-2]
        x = np.zeros_like(eps)
        for t in range(T):
            acc = eps[..., t, :].copy()
            for k, phi in enumerate(self.ma, start=1):
                if t - k >= 0:
                    acc += eps[..., t - k, :] @ phi.T
            for k, psi in enumerate(self.ar, start=1):
                if t - k >= 0:
                    acc += x[..., t - k, :] @ psi.T
            x[..., t, :] = acc
        return x


def ar1(phi: float, law: InnovationLaw | None = None, burn_in: int = 1024) -> Varma:
    law = law or gaussian()
    return Varma(ar=(np.eye(law.dim) * phi,), law=law, burn_in=burn_in)


@dataclass(frozen=True)
class Polynomial:
    """Coefficient curve ``u -> sum_k c_k u**k`` on ``[0, 1]``."""

    coefs: tuple

    def __call__(self, u):
        return np.polynomial.polynomial.polyval(u, np.asarray(self.coefs, dtype=float))


def _curve_sup(curve1, curve2, grid=1024):
    u = np.linspace(0.0, 1.0, grid)
    s = np.abs(curve1(u)) + np.abs(curve2(u))
    return float(np.max(s))


@dataclass(frozen=True, eq=False)
class TvTar(ProcessSpec):
    """Time-varying threshold AR(1):
    ``Y_i = theta1(i/n) Y_{i-1}^+ + theta2(i/n) Y_{i-1}^- + e_i`` with
    ``y^- = -min(y, 0)``.  Burn-in steps use ``u = 0``."""

    theta1: Callable
    theta2: Callable
    law: InnovationLaw = field(default_factory=gaussian)
    burn_in: int = 1024

    kind = "tvtar"

    def __post_init__(self):
        if self.law.dim != 1:
            raise DomainError("threshold AR is scalar")

    @property
    def dim(self):
        return 1

    @property
    def lead(self):
        return self.burn_in

    def sup_coefficient(self) -> float:
        """``sup_u |theta1(u)| + |theta2(u)|`` on a 1024-point grid including both
        endpoints; exact for affine curves (the sum is convex)."""
        return _curve_sup(self.theta1, self.theta2)

    def check(self):
        s = self.sup_coefficient()
        if not s < 1:
            raise ContractionError(f"sup_u |theta1(u)| + |theta2(u)| = {s:.6g} is not < 1")

    def coefficients_at(self, times, n):
        u = np.clip(np.asarray(times, dtype=float) / n, 0.0, 1.0)
        return (np.broadcast_to(self.theta1(u), u.shape).astype(float),
                np.broadcast_to(self.theta2(u), u.shape).astype(float))

    @staticmethod
    def step(y, e, th1, th2):
        return th1 * np.maximum(y, 0.0) + th2 * np.maximum(-y, 0.0) + e

    def filter(self, eps, times, n):
        th1, th2 = self.coefficients_at(times, n)
        e = eps[..., 0]
        out = np.empty_like(e)
        y = np.zeros(e.shape[:-1])
        for t in range(e.shape[-1]):
            y = self.step(y, e[..., t], th1[t], th2[t])
            out[..., t] = y
        return out[..., None]


def quadratic_map(x) -> np.ndarray:
    """``(x_r x_s)_{r <= s}`` in lexicographic order along the last axis."""
    d = x.shape[-1]
    rows, cols = np.triu_indices(d)
    return x[..., rows] * x[..., cols]


@dataclass(frozen=True, eq=False)
class CovarianceOf(ProcessSpec):
    """The covariance process ``W_i = (X_ir X_is)_{r <= s}`` of ``base``."""

    base: ProcessSpec

    kind = "covariance_of"

    @property
    def law(self):
        return self.base.law

    @property
    def dim(self):
        d = self.base.dim
        return d * (d + 1) // 2

    @property
    def lead(self):
        return self.base.lead

    @property
    def memory(self):
        return getattr(self.base, "memory", None)

    def check(self):
        self.base.check()

    def filter(self, eps, times, n):
        return quadratic_map(self.base.filter(eps, times, n))

    def terminal(self, eps, times, n):
        return quadratic_map(self.base.terminal(eps, times, n))


def innovations(spec: ProcessSpec, n: int, rng, lead: int | None = None, batch=()) -> np.ndarray:
    lead = spec.lead if lead is None else lead
    return spec.law.draw(rng, tuple(batch) + (lead + n,))


def simulate(spec: ProcessSpec, n: int, seed) -> SamplePath:
    """Simulate ``n`` observations; deterministic given ``(spec, n, seed)``."""
    spec.check()
    rng = np.random.default_rng(seed)
    eps = innovations(spec, n, rng)
    times = np.arange(1 - spec.lead, n + 1)
    return SamplePath(spec.filter(eps, times, n)[spec.lead:])


def simulate_batch(spec: ProcessSpec, n: int, reps: int, rng) -> np.ndarray:
    """``(reps, n, d)`` independent paths from one generator."""
    eps = innovations(spec, n, rng, batch=(reps,))
    times = np.arange(1 - spec.lead, n + 1)
    return spec.filter(eps, times, n)[:, spec.lead:, :]


def varma_to_ma(spec: Varma, lag_cutoff: int) -> np.ndarray:
    """``B_0 .. B_{lag_cutoff}`` of the pure MA representation."""
    spec.check()
    d = spec.dim
    out = [np.eye(d)]
    for j in range(1, lag_cutoff + 1):
        b = spec.ma[j - 1].copy() if j <= len(spec.ma) else np.zeros((d, d))
        for k, psi in enumerate(spec.ar, start=1):
            if j - k >= 0:
                b += psi @ out[j - k]
        out.append(b)
    out = np.array(out)
    tail = np.linalg.norm(out[-1])
    if len(spec.ar) and tail >= 1e-12 * np.linalg.norm(out[0]):
        warnings.warn(
            f"|B_{lag_cutoff}| = {tail:.3e}; a longer cutoff is advised",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def longrun_cov_varma(spec: Varma) -> np.ndarray:
    """``Psi_*^{-1} Phi_* Sigma_e Phi_*^T Psi_*^{-T}``."""
    d = spec.dim
    psi_star = np.eye(d) - sum(spec.ar, np.zeros((d, d)))
    phi_star = np.eye(d) + sum(spec.ma, np.zeros((d, d)))
    for name, mat in (("Psi_*", psi_star), ("Phi_*", phi_star), ("Sigma_e", spec.law.cov)):
        if np.linalg.cond(mat) > 1e12:
            raise SingularityError(f"{name} is singular")
    left = np.linalg.solve(psi_star, phi_star)
    out = left @ spec.law.cov @ left.T
    return 0.5 * (out + out.T)


def stationary_covariance(spec) -> np.ndarray:
    """``Var(X_i) = sum_j B_j Sigma_e B_j^T`` of a stationary linear process."""
    b = spec.ma_coefficients()
    return np.einsum("jab,bc,jdc->ad", b, spec.law.cov, b)


def covariance_process(path: SamplePath) -> SamplePath:
    return SamplePath(quadratic_map(path.values))


def contraction_coefficient(spec: TvTar, probe_count: int = 10_000, seed=0):
    """Grid supremum ``s`` of ``|theta1| + |theta2|`` and the largest observed
    Lipschitz ratio of the one-step map over random probe pairs.

    Returns ``(s, probe_max)``; ``probe_max <= s`` always holds.
    """
    if not isinstance(spec, TvTar):
        raise DomainError("contraction coefficient is implemented for TvTar only")
    s = spec.sup_coefficient()
    if not s < 1:
        raise ContractionError(f"contraction coefficient s = {s:.6g} is not < 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(probe_count) * 3
    xp = rng.standard_normal(probe_count) * 3
    u = rng.uniform(0, 1, probe_count)
    e = rng.standard_normal(probe_count)
    th1, th2 = spec.theta1(u), spec.theta2(u)
    diff = spec.step(x, e, th1, th2) - spec.step(xp, e, th1, th2)
    ratio = np.abs(diff) / np.abs(x - xp)
    return s, float(ratio.max())
