"""Closed-form Gaussian approximation rates and regime dispatch.

All functions are pure and operate on floats.  The quantities follow the
moment order ``p``, the polynomial decay exponent ``chi`` and the logarithmic
decay exponent ``a_log`` of the tail cumulative dependence measure
``Theta_i = O(i**-chi * log(i)**-a_log)``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import AConditionWarning, DomainError

#: relative tolerance used to decide ``chi == chi0``
TIE_RTOL = 1e-9


class Regime(str, enum.Enum):
    SUB_CRITICAL = "SubCritical"
    CRITICAL_SMALL_P = "CriticalSmallP"
    CRITICAL_LARGE_P = "CriticalLargeP"
    SUPER_CRITICAL = "SuperCritical"


@dataclass(frozen=True)
class MomentDecay:
    p: float
    chi: float
    a_log: float

    def __post_init__(self):
        if not self.p > 2:
            raise DomainError(f"moment order p must exceed 2, got {self.p}")
        if not self.chi > 0:
            raise DomainError(f"decay exponent chi must be positive, got {self.chi}")
        if not self.a_log > 0:
            raise DomainError(f"log exponent A must be positive, got {self.a_log}")


class FValues(NamedTuple):
    f1: float
    f2: float
    f3: float
    f4: float
    f5: float


@dataclass(frozen=True)
class RatePlan:
    inputs: MomentDecay
    chi0: float
    f: FValues
    r: float
    gamma: float
    cap_l: float
    k_max: float
    regime: Regime
    tau_exponent: float
    log_factor: bool
    a_bound: float | None
    a_condition_ok: bool

    @property
    def k(self) -> float:
        """Interior choice of the exponent of ``t_n`` in the block length."""
        return self.k_max / 2.0


def _check_p(p):
    if not p > 2:
        raise DomainError(f"moment order p must exceed 2, got {p}")


def _sqrt_nonneg(x, what):
    # tiny negative values are rounding noise from algebraically nonnegative terms
    assert x >= -1e-9 * max(1.0, abs(x)), f"negative radicand in {what}: {x}"
    return math.sqrt(max(x, 0.0))


def chi0(p: float) -> float:
    """Critical decay exponent separating the sub-optimal and optimal regimes."""
    _check_p(p)
    root = _sqrt_nonneg(p * p + 20 * p + 4, "chi0")
    return (p * p - 4 + (p - 2) * root) / (8 * p)


def f_values(p: float, chi: float) -> FValues:
    _check_p(p)
    if not chi > 0:
        raise DomainError(f"chi must be positive, got {chi}")
    f1 = p * p * chi * chi + p * p * chi
    f2 = 2 * p * chi * chi + 3 * p * chi - 2 * chi
    f3 = p ** 3 * (1 + chi) ** 2 + 6 * f1 + 4 * p * chi - 2
    f4 = 2 * p * (2 * p * chi * chi + 3 * p * chi + p - 2)
    f5 = (
        p * p * (p * p + 4 * p - 12) * chi * chi
        + 2 * p * (p ** 3 + p * p - 4 * p - 4) * chi
        + (p * p - p - 2) ** 2
    )
    return FValues(f1, f2, f3, f4, f5)


def is_critical(p: float, chi: float) -> bool:
    c0 = chi0(p)
    return abs(chi - c0) <= TIE_RTOL * max(1.0, c0)


def _inverse_r(p, chi, f):
    root = _sqrt_nonneg((p - 2) * (f.f3 - 3 * p), "(p-2)(f3-3p)")
    return (f.f1 + p * p * chi + p * p - 2 * p + f.f2 - chi * root) / f.f4


def _gamma_l(p, chi, f):
    root5 = _sqrt_nonneg(f.f5, "f5")
    gamma = ((2 * p + p * p) * chi + p * p + 3 * p + 2 + root5) / (2 + 2 * p + 4 * chi)
    root = _sqrt_nonneg((p - 2) * (f.f3 - 3 * p), "(p-2)(f3-3p)")
    cap_l = (f.f1 - f.f2 + chi * root) / (chi * f.f4)
    return gamma, cap_l


def _check_sub(p, chi):
    _check_p(p)
    if not chi > 0:
        raise DomainError(f"chi must be positive, got {chi}")
    c0 = chi0(p)
    if chi >= c0:
        raise DomainError(f"chi={chi} is not below chi0(p)={c0}; use plan()")


def rate_r(p: float, chi: float) -> float:
    """Approximation exponent ``r`` (rate ``n**(1/r)``) for ``0 < chi < chi0(p)``."""
    _check_sub(p, chi)
    return 1.0 / _inverse_r(p, chi, f_values(p, chi))


def gamma_and_L(p: float, chi: float) -> tuple[float, float]:
    """Moment power ``gamma`` and block exponent ``L`` for ``0 < chi < chi0(p)``."""
    _check_sub(p, chi)
    return _gamma_l(p, chi, f_values(p, chi))


def critical_a_bound(p: float) -> float:
    """Simplified lower bound for A at ``chi == chi0(p)``."""
    _check_p(p)
    root = _sqrt_nonneg(p * p + 20 * p + 4, "critical A bound")
    return (p * p + 8 * p + 4 + (p - 2) * root) / (6 * p)


def a_lower_bound(p: float, chi: float) -> float:
    """Lower bound that A must exceed, valid for ``0 < chi <= chi0(p)``."""
    _check_p(p)
    if not chi > 0:
        raise DomainError(f"chi must be positive, got {chi}")
    c0 = chi0(p)
    tie = is_critical(p, chi)
    if chi > c0 and not tie:
        raise DomainError(f"chi={chi} exceeds chi0(p)={c0}")
    f = f_values(p, chi)
    bound = ((2 * p + p * p) * chi + p * p + 3 * p + 2 + _sqrt_nonneg(f.f5, "f5")) / (
        p * (1 + p + 2 * chi)
    )
    if tie:
        simple = critical_a_bound(p)
        assert abs(bound - simple) <= 1e-9 * simple, (bound, simple)
    return bound


def system_residuals(p, chi, r, gamma, L):
    """Residuals of the three equations that determine ``(1/r, gamma, L)``."""
    return (
        0.5 - 1.0 / r - chi * L,
        1.0 - gamma / r + L * (gamma / 2.0 - 1.0),
        1.0 / p - 1.0 / gamma + (1.0 - (chi + 1.0) * p / gamma) * L,
    )


def plan(md: MomentDecay) -> RatePlan:
    """Dispatch the regime for ``md`` and fill every derived rate quantity.

    For ``chi >= chi0`` the block exponents are taken at ``chi0`` (the limit
    of the closed forms from below).  A violated A-condition is reported with
    :class:`AConditionWarning` and ``a_condition_ok=False``.
    """
    p, chi = md.p, md.chi
    c0 = chi0(p)
    if is_critical(p, chi):
        regime = Regime.CRITICAL_SMALL_P if p < 4 else Regime.CRITICAL_LARGE_P
    elif chi < c0:
        regime = Regime.SUB_CRITICAL
    else:
        regime = Regime.SUPER_CRITICAL

    chi_eff = chi if regime is Regime.SUB_CRITICAL else c0
    f_eff = f_values(p, chi_eff)
    gamma, cap_l = _gamma_l(p, chi_eff, f_eff)
    if regime is Regime.SUB_CRITICAL:
        r = 1.0 / _inverse_r(p, chi, f_eff)
        tau = 1.0 / r
    else:
        r = float(p)
        tau = 1.0 / p

    a_bound = None
    a_ok = True
    if regime is not Regime.SUPER_CRITICAL:
        a_bound = a_lower_bound(p, chi_eff)
        a_ok = md.a_log > a_bound
        if not a_ok:
            warnings.warn(
                f"A={md.a_log} does not exceed its lower bound {a_bound:.6g} "
                f"(p={p}, chi={chi}); the rate is not guaranteed",
                AConditionWarning,
                stacklevel=2,
            )
    return RatePlan(
        inputs=md,
        chi0=c0,
        f=f_values(p, chi) if math.isfinite(chi) else f_eff,
        r=r,
        gamma=gamma,
        cap_l=cap_l,
        k_max=(gamma - p) / (gamma / 2.0 - 1.0),
        regime=regime,
        tau_exponent=tau,
        log_factor=regime is Regime.CRITICAL_LARGE_P,
        a_bound=a_bound,
        a_condition_ok=a_ok,
    )


@dataclass(frozen=True)
class RateRow:
    chi: float
    exponent: float
    gamma: float
    L: float
    regime: Regime


def emit_rate_tables(p: float, chi_grid: Iterable[float]) -> list[RateRow]:
    """Rows ``(chi, max(1/r, 1/p), gamma, L, regime)``; gamma and L are NaN
    outside the sub-critical range."""
    _check_p(p)
    rows = []
    for chi in chi_grid:
        if not chi > 0:
            raise DomainError(f"chi grid values must be positive, got {chi}")
        rp = plan(MomentDecay(p, chi, a_log=math.inf))
        if rp.regime is Regime.SUB_CRITICAL:
            rows.append(RateRow(chi, max(1.0 / rp.r, 1.0 / p), rp.gamma, rp.cap_l, rp.regime))
        else:
            rows.append(RateRow(chi, 1.0 / p, math.nan, math.nan, rp.regime))
    return rows


RATE_HEADER = ("chi", "exponent", "gamma", "L", "regime")


def rate_table_csv(rows: Iterable[RateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_HEADER)
    for row in rows:
        w.writerow([repr(float(row.chi)), repr(float(row.exponent)), repr(float(row.gamma)),
                    repr(float(row.L)), row.regime.value])
    return buf.getvalue()
