"""Executable truncation / m-dependence / blocking construction and the
block Gaussian surrogate.

All stages of a :class:`CouplingReport` are computed from one innovation
stream, so the stage errors are genuine pathwise couplings.  The last step
of the theory (the distribution-equal Gaussian coupling) is an existence
result; it is checked distributionally by :func:`distributional_gap`.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import rates
from .errors import BudgetError, DegenerateSchemeError, DomainError, EigenvalueWarning
from .linalg import positive_definitize, psd_sqrt
from .processes import (
    CovarianceOf,
    ProcessSpec,
    TvTar,
    linear_filter,
    quadratic_map,
    simulate_batch,
)
from .seeds import rng_for, seed_stream

__all__ = [
    "BlockingScheme", "BlockCovariances", "CouplingReport", "GapResult",
    "truncate", "make_scheme", "m_dependent_path", "block_sums",
    "lambda_star_estimate", "positive_definitize", "psd_sqrt",
    "estimate_block_covariances", "gaussian_surrogate", "surrogate_block_paths",
    "coupling_report", "distributional_gap", "truncated_delta_bound",
    "mc_truncated_delta", "truncation_slack",
]

DEFAULT_RESAMPLES = 64
DEFAULT_BUDGET = 2e9


def truncate(v, b: float) -> np.ndarray:
    """Coordinatewise clamp to ``[-b, b]``."""
    if not b > 0:
        raise DomainError(f"truncation level must be positive, got {b}")
    return np.clip(v, -b, b)


def truncation_slack(n: int) -> float:
    """``t_n = (log log max(n, 16))**-1/2``."""
    return math.log(math.log(max(n, 16))) ** -0.5


@dataclass(frozen=True)
class BlockingScheme:
    n: int
    p: float
    t_n: float
    trunc_level: float
    m: int
    k0: int
    block_len: int
    q: int
    L: float
    gamma: float
    k: float
    regime: str
    theta02: float
    lambda_star_hat: float

    def q_map(self, i):
        """Number of completed blocks at time ``i``."""
        return np.asarray(i) // self.block_len

    def manifest(self) -> dict:
        return asdict(self)


def dependence_window(n: int, plan: rates.RatePlan) -> float:
    """Unfloored ``m = n^L t_n^k``, times ``log(n)^{2 gamma/(gamma-2)}`` in the
    critical regime with ``p >= 4``."""
    m = n ** plan.cap_l * truncation_slack(n) ** plan.k
    if plan.log_factor:
        m *= math.log(n) ** (2 * plan.gamma / (plan.gamma - 2))
    return m


def make_scheme(n: int, p: float, chi: float, A: float, theta02: float,
                lambda_star_hat: float) -> BlockingScheme:
    if n < 256:
        raise DomainError(f"blocking needs n >= 256, got {n}")
    if not lambda_star_hat > 0:
        raise DomainError("lambda_star_hat must be positive")
    plan = rates.plan(rates.MomentDecay(p, chi, A))
    t_n = truncation_slack(n)
    m_real = dependence_window(n, plan)
    m = int(math.floor(m_real))
    k0 = int(math.floor(theta02 ** 2 / lambda_star_hat)) + 2
    if m < 1:
        raise DegenerateSchemeError(f"m = floor({m_real:.3g}) is zero at n={n}")
    block_len = 2 * k0 * m
    q = n // block_len
    if q < 8:
        raise DegenerateSchemeError(f"only {q} blocks of length {block_len} fit in n={n}")
    return BlockingScheme(
        n=n, p=p, t_n=t_n, trunc_level=t_n * n ** (1.0 / p), m=m, k0=k0,
        block_len=block_len, q=q, L=plan.cap_l, gamma=plan.gamma, k=plan.k,
        regime=plan.regime.value, theta02=float(theta02),
        lambda_star_hat=float(lambda_star_hat),
    )


# -- conditional expectations given the last m+1 innovations ----------------

def _base(spec):
    return spec.base if isinstance(spec, CovarianceOf) else spec


def _transform(spec):
    return quadratic_map if isinstance(spec, CovarianceOf) else (lambda x: x)


def construction_lead(spec: ProcessSpec) -> int:
    base = _base(spec)
    if base.linear:
        return base.ma_coefficients().shape[0] - 1
    return base.lead


def _work(spec, n, m, resamples):
    base = _base(spec)
    if base.linear:
        tail = max(base.ma_coefficients().shape[0] - 1 - m, 0)
        return resamples * n * (tail + 1) * base.dim ** 2
    return resamples * n * (m + 2)


def _values(spec, eps, times, n):
    base = _base(spec)
    g = _transform(spec)
    if base.linear:
        return g(linear_filter(base.ma_coefficients(), eps))
    return g(base.filter(eps, times, n))


def _conditional(spec, eps, times, n, m, resamples, rng, b):
    """``E(T_b(X_t) | eps_t..eps_{t-m})`` for every time of the stream, plus
    the centering ``E T_b(X_t)``.

    Innovations older than the window are resampled ``resamples`` times.
    Returns ``(conditional, centering, mean)`` where ``mean`` estimates the
    untruncated ``E X_t``.  Both centerings are the scalar 0.0 when they
    vanish by symmetry (linear process, symmetric innovations, odd clamp).
    """
    base = _base(spec)
    g = _transform(spec)
    T = eps.shape[-2]
    symmetric = base.linear and not isinstance(spec, CovarianceOf)
    center = 0.0 if symmetric else np.zeros(eps.shape[:-1] + (spec.dim,))
    mean = 0.0 if symmetric else np.zeros(eps.shape[:-1] + (spec.dim,))
    if base.linear:
        coeffs = base.ma_coefficients()
        H = coeffs.shape[0] - 1
        u = linear_filter(coeffs, eps, 0, m)
        if m >= H and symmetric:
            return truncate(u, b), center, mean
        acc = np.zeros(eps.shape[:-1] + (spec.dim,))
        for _ in range(resamples):
            eps_r = base.law.draw(rng, eps.shape[:-1])
            if m < H:
                acc += truncate(g(u + linear_filter(coeffs, eps_r, m + 1, H)), b)
            else:
                acc += truncate(g(u), b)
            if not symmetric:
                full = g(linear_filter(coeffs, eps_r))
                center += truncate(full, b)
                mean += full
        if symmetric:
            return acc / resamples, center, mean
        return acc / resamples, center / resamples, mean / resamples

    if not isinstance(base, TvTar):
        raise DomainError(f"no conditional sampler for process kind {base.kind!r}")
    th1, th2 = base.coefficients_at(times, n)
    e = eps[..., 0]
    acc = np.zeros(eps.shape[:-1] + (1,))
    idx = np.arange(T)
    exact = m + 1 >= T
    for _ in range(1 if exact else resamples):
        eps_r = base.law.draw(rng, eps.shape[:-1])
        y_rep = base.filter(eps_r, times, n)[..., 0]
        start = idx - m - 1
        y = np.where(start >= 0, y_rep[..., np.clip(start, 0, None)], 0.0)
        for k in range(m + 1):
            t = idx - m + k
            tc = np.clip(t, 0, None)
            stepped = base.step(y, e[..., tc], th1[tc], th2[tc])
            y = np.where(t >= 0, stepped, y)
        acc += truncate(g(y[..., None]), b)
        full = g(y_rep[..., None])
        center += truncate(full, b)
        mean += full
    r = 1 if exact else resamples
    return acc / r, center / r, mean / r


def _stream(spec, n, rng):
    lead = construction_lead(spec)
    eps = _base(spec).law.draw(rng, (lead + n,))
    times = np.arange(1 - lead, n + 1)
    return eps, times, lead


def _stages(spec, eps, times, lead, scheme, resamples, rng):
    n = scheme.n
    b = scheme.trunc_level
    x = _values(spec, eps, times, n)[lead:]
    cond, center, mean = _conditional(spec, eps, times, n, scheme.m, resamples, rng, b)
    if not np.isscalar(center):
        center, mean = center[lead:], mean[lead:]
    x_plus = truncate(x, b) - center
    x_tilde = cond[lead:] - center
    return x - mean, x_plus, x_tilde


def _check_budget(spec, scheme, resamples, budget):
    work = _work(spec, scheme.n, scheme.m, resamples)
    if work > budget:
        raise BudgetError(f"conditional resampling needs ~{work:.3g} operations "
                          f"(budget {budget:.3g})")


def m_dependent_path(spec: ProcessSpec, eps, scheme: BlockingScheme,
                     resamples: int = DEFAULT_RESAMPLES, seed=0,
                     budget: float = DEFAULT_BUDGET):
    """Truncated m-dependent approximation ``X~_j`` from an innovation stream
    of length ``construction_lead(spec) + n``."""
    from .processes import SamplePath

    _check_budget(spec, scheme, resamples, budget)
    lead = construction_lead(spec)
    if eps.shape[-2] != lead + scheme.n:
        raise DomainError(f"stream must have {lead + scheme.n} innovations")
    times = np.arange(1 - lead, scheme.n + 1)
    _, _, x_tilde = _stages(spec, eps, times, lead, scheme, resamples,
                            np.random.default_rng(seed))
    return SamplePath(x_tilde)


def _partial(x):
    out = np.zeros((x.shape[0] + 1, x.shape[1]))
    np.cumsum(x, axis=0, out=out[1:])
    return out


def block_sums(values, scheme: BlockingScheme):
    """Block sums ``A_j`` and the blocked partial sums ``S_i`` (i = 0..n).

    Times after the last complete block keep the last block total.
    """
    x = np.asarray(getattr(values, "values", values), dtype=float)
    bl, q = scheme.block_len, scheme.q
    a = x[: q * bl].reshape(q, bl, x.shape[1]).sum(axis=1)
    cum = _partial(a)
    s = cum[scheme.q_map(np.arange(x.shape[0] + 1))]
    return a, s


def lambda_star_estimate(spec: ProcessSpec, l: int, reps: int = 1000, seed=0,
                         n: int | None = None, probes: int = 8) -> float:
    """Smallest eigenvalue of ``Var(S_{t+l} - S_t) / l`` minimized over probe
    times ``t`` (Monte Carlo over ``reps`` paths of length ``n``)."""
    if l < 32:
        raise DomainError("window l must be at least 32")
    n = 2 * l if n is None else n
    paths = simulate_batch(spec, n, reps, np.random.default_rng(seed))
    s = np.concatenate([np.zeros((reps, 1, spec.dim)), np.cumsum(paths, axis=1)], axis=1)
    best = math.inf
    top = 0.0
    for t in np.unique(np.linspace(0, n - l, probes).astype(int)):
        inc = s[:, t + l] - s[:, t]
        cov = np.atleast_2d(np.cov(inc, rowvar=False))
        lam = np.linalg.eigvalsh(cov)
        best = min(best, lam[0] / l)
        top = max(top, lam[-1] / l)
    if best <= 1e-10 * max(top, 1e-300):
        warnings.warn(
            f"estimated lambda_* = {best:.3g}: the increment covariance lower bound "
            "fails and the blocking construction cannot proceed",
            EigenvalueWarning, stacklevel=2,
        )
    return float(best)


@dataclass(frozen=True, eq=False)
class BlockCovariances:
    matrices: np.ndarray
    replaced: np.ndarray
    raw: np.ndarray
    delta_star: float
    lambda_star_hat: float

    @property
    def roots(self) -> np.ndarray:
        return psd_sqrt(self.matrices)


def definitize_all(raw, m, delta_star, lambda_star_hat) -> BlockCovariances:
    mats, flags = [], []
    for v in raw:
        out, flag = positive_definitize(0.5 * (v + v.T), m, delta_star)
        mats.append(out)
        flags.append(flag)
    return BlockCovariances(np.array(mats), np.array(flags), np.asarray(raw),
                            delta_star, lambda_star_hat)


def estimate_block_covariances(spec: ProcessSpec, scheme: BlockingScheme, reps: int = 256,
                               seed=0, resamples: int = DEFAULT_RESAMPLES,
                               budget: float = DEFAULT_BUDGET) -> BlockCovariances:
    """Monte-Carlo covariances of the block sums ``A_j`` over ``reps``
    independent runs of the construction, positive-definitized with
    ``delta_* = lambda_star_hat / 2``."""
    _check_budget(spec, scheme, resamples, budget)
    sums = []
    for k in range(reps):
        rng = rng_for(seed, k)
        eps, times, lead = _stream(spec, scheme.n, rng)
        _, _, x_tilde = _stages(spec, eps, times, lead, scheme, resamples, rng)
        sums.append(block_sums(x_tilde, scheme)[0])
    sums = np.array(sums)
    dev = sums - sums.mean(axis=0)
    raw = np.einsum("rja,rjb->jab", dev, dev) / (reps - 1)
    delta_star = scheme.lambda_star_hat / 2.0
    return definitize_all(raw, scheme.m, delta_star, scheme.lambda_star_hat)


def surrogate_block_paths(block_covs: BlockCovariances, reps: int, rng) -> np.ndarray:
    """``(reps, q+1, d)`` Gaussian partial sums at block ends (row 0 is zero)."""
    roots = block_covs.roots
    q, d, _ = roots.shape
    z = rng.standard_normal((reps, q, d))
    inc = np.einsum("jab,rjb->rja", roots, z)
    out = np.zeros((reps, q + 1, d))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def gaussian_surrogate(block_covs: BlockCovariances, scheme: BlockingScheme, seed):
    """Block Gaussian path: increments ``V_j^{1/2} Z_j`` placed at the last
    time of each block.  Returns a :class:`SamplePath` of increments, so
    ``partial_sums`` is the surrogate ``G``."""
    from .processes import SamplePath

    g = surrogate_block_paths(block_covs, 1, np.random.default_rng(seed))[0]
    inc = np.diff(g, axis=0)
    out = np.zeros((scheme.n, inc.shape[1]))
    out[np.arange(1, scheme.q + 1) * scheme.block_len - 1] = inc
    return SamplePath(out)


@dataclass(frozen=True)
class CouplingReport:
    n: int
    seed: int
    stage1: float
    stage2: float
    stage3: float
    total: float

    HEADER = ("n", "seed", "stage1", "stage2", "stage3", "total")

    def row(self):
        return [self.n, self.seed] + [repr(float(x)) for x in
                                      (self.stage1, self.stage2, self.stage3, self.total)]


def _maxnorm(diff):
    return float(np.linalg.norm(diff, axis=-1).max())


def coupling_report(spec: ProcessSpec, scheme: BlockingScheme, seed,
                    resamples: int = DEFAULT_RESAMPLES,
                    budget: float = DEFAULT_BUDGET) -> CouplingReport:
    """Stage-wise maxima ``max_i |S - S+|``, ``max_i |S+ - S~|``,
    ``max_i |S~ - S<>|`` and the total ``max_i |S - S<>|`` on one stream.

    ``S`` is centered by a Monte-Carlo estimate of ``E S_i`` when the mean does
    not vanish by symmetry.
    """
    _check_budget(spec, scheme, resamples, budget)
    rng = np.random.default_rng(seed)
    eps, times, lead = _stream(spec, scheme.n, rng)
    x, x_plus, x_tilde = _stages(spec, eps, times, lead, scheme, resamples, rng)
    s, s_plus, s_tilde = _partial(x), _partial(x_plus), _partial(x_tilde)
    _, s_diamond = block_sums(x_tilde, scheme)
    st1, st2, st3 = _maxnorm(s - s_plus), _maxnorm(s_plus - s_tilde), _maxnorm(s_tilde - s_diamond)
    total = _maxnorm(s - s_diamond)
    assert total <= (st1 + st2 + st3) * (1 + 1e-12) + 1e-12
    return CouplingReport(scheme.n, int(seed), st1, st2, st3, total)


def write_coupling_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CouplingReport.HEADER)
        for r in reports:
            w.writerow(r.row())


@dataclass(frozen=True)
class GapResult:
    ks: float
    critical: float
    pvalue: float
    reps: int
    functional: str
    seed_s: int
    seed_g: int


def ks_critical(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-math.log(alpha / 2) / 2)
    return c * math.sqrt((n1 + n2) / (n1 * n2))


FUNCTIONALS = ("MaxNorm", "EndpointNorm")


def distributional_gap(spec: ProcessSpec, scheme: BlockingScheme,
                       block_covs: BlockCovariances, functional: str = "MaxNorm",
                       reps: int = 500, seed=0, batch: int = 100) -> GapResult:
    """Two-sample KS distance between ``functional(S)/sqrt(n)`` over fresh
    process paths and ``functional(G)/sqrt(n)`` over surrogate paths."""
    if reps < 500:
        raise DomainError("distributional gap needs reps >= 500")
    if functional not in FUNCTIONALS:
        raise DomainError(f"functional must be one of {FUNCTIONALS}")
    seed_s, seed_g = seed_stream(seed, 0), seed_stream(seed, 1)
    assert seed_s != seed_g
    n = scheme.n
    a = []
    for k in range(0, reps, batch):
        paths = simulate_batch(spec, n, min(batch, reps - k), rng_for(seed_s, k))
        s = np.cumsum(paths, axis=1)
        norms = np.linalg.norm(s, axis=-1)
        a.append(norms.max(axis=1) if functional == "MaxNorm" else norms[:, -1])
    a = np.concatenate(a) / math.sqrt(n)
    g = surrogate_block_paths(block_covs, reps, np.random.default_rng(seed_g))
    gn = np.linalg.norm(g, axis=-1)
    b = (gn.max(axis=1) if functional == "MaxNorm" else gn[:, -1]) / math.sqrt(n)
    res = stats.ks_2samp(a, b)
    return GapResult(float(res.statistic), ks_critical(reps, reps), float(res.pvalue),
                     reps, functional, seed_s, seed_g)


def truncated_delta_bound(delta_jp: float, n: int, p: float, gamma: float, t_n: float) -> float:
    """``2 n^{1/p - 1/gamma} t_n^{1 - p/gamma} delta_{j,p}^{p/gamma}``."""
    if not gamma > p:
        raise DomainError(f"gamma must exceed p, got gamma={gamma}, p={p}")
    return 2.0 * n ** (1 / p - 1 / gamma) * t_n ** (1 - p / gamma) * delta_jp ** (p / gamma)


def mc_truncated_delta(spec: ProcessSpec, scheme: BlockingScheme, j: int, gamma: float,
                       reps: int = 4000, seed=0, resamples: int = DEFAULT_RESAMPLES,
                       probes: int = 4):
    """Monte-Carlo ``sup_i || X~_i - X~_{i,(i-j)} ||_gamma`` for the truncated
    m-dependent process.  Both members of each coupled pair use the same
    resampled remote past.  Returns ``(estimate, se)``."""
    from .dependence import _moment_stats

    lead = construction_lead(spec)
    T = lead + 1
    best = (0.0, 0.0)
    for k, i in enumerate(np.unique(np.linspace(1, scheme.n, probes).astype(int))):
        rng = rng_for(seed, k)
        eps = _base(spec).law.draw(rng, (reps, T))
        times = np.arange(i - lead, i + 1)
        sub = seed_stream(seed, probes + k)
        x, _, _ = _conditional(spec, eps, times, scheme.n, scheme.m, resamples,
                            np.random.default_rng(sub), scheme.trunc_level)
        pos = T - 1 - j
        if pos < 0:
            continue
        eps[:, pos] = _base(spec).law.draw(rng, (reps,))
        y, _, _ = _conditional(spec, eps, times, scheme.n, scheme.m, resamples,
                            np.random.default_rng(sub), scheme.trunc_level)
        est = _moment_stats(np.linalg.norm(x[:, -1] - y[:, -1], axis=-1), gamma)
        if est[0] > best[0]:
            best = est
    return best
