import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nsgauss import construction as C
from nsgauss import processes as P
from nsgauss.errors import (
    AsymmetryError,
    BudgetError,
    DegenerateSchemeError,
    DomainError,
    EigenvalueWarning,
    NotPSDError,
)


def scheme(n, m, block_len, trunc_level, p=8.0):
    return C.BlockingScheme(n=n, p=p, t_n=C.truncation_slack(n), trunc_level=trunc_level, m=m,
                            k0=max(block_len // max(2 * m, 1), 2), block_len=block_len,
                            q=n // block_len, L=0.2, gamma=10.0, k=0.5, regime="SuperCritical",
                            theta02=1.0, lambda_star_hat=1.0)


# -- truncation ------------------------------------------------------------

def test_truncate_examples():
    np.testing.assert_array_equal(C.truncate(np.array([3.0, -1.0, -5.0]), 2), [2, -1, -2])
    v = np.array([0.5, -1.5])
    np.testing.assert_array_equal(C.truncate(v, 2), v)
    with pytest.raises(DomainError):
        C.truncate(v, 0)


@settings(max_examples=300, deadline=None)
@given(u=st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       v=st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       b=st.floats(1e-3, 1e2))
def test_truncate_is_lipschitz(u, v, b):
    u, v = np.array(u), np.array(v)
    assert np.linalg.norm(C.truncate(u, b) - C.truncate(v, b)) <= np.linalg.norm(u - v) + 1e-12


# -- scheme ----------------------------------------------------------------

def test_make_scheme_formulas():
    s = C.make_scheme(4096, 4, 0.5, 100, theta02=1.5, lambda_star_hat=1.0)
    assert s.k0 == 4
    assert s.block_len == 2 * s.k0 * s.m and s.q == 4096 // s.block_len
    assert s.trunc_level == pytest.approx(s.t_n * 4096 ** 0.25)
    assert int(s.q_map(s.block_len * 3)) == 3
    assert int(s.q_map(s.n)) == s.q
    assert np.all(np.diff(s.q_map(np.arange(s.n + 1))) >= 0)


def test_m_grows_like_n_to_the_l():
    a = C.make_scheme(2 ** 12, 4, 0.5, 100, 1.0, 4.0)
    b = C.make_scheme(2 ** 13, 4, 0.5, 100, 1.0, 4.0)
    assert b.m / a.m == pytest.approx(2 ** a.L, rel=0.1)


def test_critical_large_p_adds_log_factor():
    from nsgauss.rates import MomentDecay, plan

    crit = plan(MomentDecay(4, 1.0, 100))
    n = 2 ** 14
    base = n ** crit.cap_l * C.truncation_slack(n) ** crit.k
    factor = math.log(n) ** (2 * crit.gamma / (crit.gamma - 2))
    assert C.dependence_window(n, crit) == pytest.approx(base * factor)
    with pytest.raises(DegenerateSchemeError):
        C.make_scheme(n, 4, 1.0, 100, 1.0, 4.0)


def test_degenerate_scheme():
    with pytest.raises(DegenerateSchemeError):
        C.make_scheme(300, 3, 0.05, 100, 10.0, 0.1)
    with pytest.raises(DomainError):
        C.make_scheme(100, 8, 1.0, 1.0, 1.0, 1.0)


# -- m-dependent approximation ----------------------------------------------

def test_finite_ma_is_reproduced_exactly():
    spec = P.VectorLinear(np.array([1.0, 0.5, -0.3]))
    sc = scheme(512, 2, 16, 1e6)
    eps = spec.law.draw(np.random.default_rng(0), (C.construction_lead(spec) + 512,))
    xt = C.m_dependent_path(spec, eps, sc)
    x = P.linear_filter(spec.coeffs, eps)[2:]
    np.testing.assert_array_equal(xt.values, x)


def test_iid_with_m_zero_is_centered_truncation():
    spec = P.VectorLinear(np.eye(1)[None])
    sc = scheme(256, 0, 16, 1.0)
    eps = spec.law.draw(np.random.default_rng(1), (256,))
    xt = C.m_dependent_path(spec, eps, sc)
    # E T(X) = 0 for symmetric innovations and an odd clamp
    np.testing.assert_array_equal(xt.values, np.clip(eps, -1, 1))


def test_ar1_conditional_error_is_geometric():
    phi, m = 0.5, 20
    spec = P.ar1(phi)
    sc = scheme(2048, m, 64, 1e6)
    eps = spec.law.draw(np.random.default_rng(2), (C.construction_lead(spec) + 2048,))
    xt = C.m_dependent_path(spec, eps, sc, resamples=16)
    x = P.linear_filter(spec.ma_coefficients(), eps)[C.construction_lead(spec):]
    sd = 1 / math.sqrt(1 - phi ** 2)
    assert np.mean(np.abs(x - xt.values)) <= 2 * phi ** m * sd / (1 - phi)


def test_tvtar_with_full_window_matches_path():
    spec = P.TvTar(P.Polynomial([0.3, 0.2]), P.Polynomial([-0.2]), burn_in=16)
    n = 64
    sc = scheme(n, 16 + n, 8, 1e6)
    rep = C.coupling_report(spec, sc, seed=3)
    assert rep.stage1 == 0.0 and rep.stage2 == 0.0


def test_tvtar_long_window_is_close_to_path():
    spec = P.TvTar(P.Polynomial([0.3, 0.2]), P.Polynomial([-0.2]), burn_in=64)
    sc = scheme(256, 40, 80, 1e6)
    rep = C.coupling_report(spec, sc, seed=4, resamples=8)
    # contraction s = 0.5 forgets the pre-window state at rate s^41
    assert rep.stage2 < 1e-6


def test_budget_error():
    spec = P.ar1(0.5)
    sc = scheme(4096, 2, 16, 2.0)
    with pytest.raises(BudgetError):
        C.coupling_report(spec, sc, seed=0, budget=1e3)


# -- blocking ---------------------------------------------------------------

def test_block_sums_telescoping():
    rng = np.random.default_rng(5)
    sc = scheme(1000, 3, 24, 1.0)
    x = rng.standard_normal((1000, 2))
    a, s = C.block_sums(x, sc)
    partial = np.vstack([np.zeros(2), np.cumsum(x, axis=0)])
    ends = np.arange(sc.q + 1) * sc.block_len
    np.testing.assert_allclose(s[ends], partial[ends], atol=1e-10)
    np.testing.assert_allclose(a.sum(axis=0), partial[sc.q * sc.block_len], atol=1e-10)
    assert np.all(s[sc.q * sc.block_len:] == s[-1])
    assert s.shape == (1001, 2)


def test_block_sums_edge_cases():
    sc = scheme(48, 3, 48, 1.0)
    x = np.random.default_rng(6).standard_normal((48, 1))
    a, _ = C.block_sums(x, sc)
    assert a.shape == (1, 1) and a[0, 0] == pytest.approx(x.sum())
    a, s = C.block_sums(np.zeros((96, 1)), scheme(96, 3, 24, 1.0))
    assert not np.any(a) and not np.any(s)


# -- lambda_* -----------------------------------------------------------------

def test_lambda_star_estimates():
    iid = P.VectorLinear(np.eye(2)[None], P.gaussian(2))
    assert C.lambda_star_estimate(iid, 256, reps=1000, seed=1) == pytest.approx(1.0, rel=0.1)
    assert C.lambda_star_estimate(P.ar1(0.5), 1024, reps=1000, seed=2) == pytest.approx(4.0, rel=0.15)
    degenerate = P.VectorLinear(np.diag([1.0, 0.0])[None], P.gaussian(2))
    with pytest.warns(EigenvalueWarning):
        lam = C.lambda_star_estimate(degenerate, 64, reps=200, seed=3)
    assert abs(lam) < 1e-12


# -- matrices -----------------------------------------------------------------

def test_positive_definitize():
    m, d = 5, 1.0
    v, flag = C.positive_definitize(10 * m * np.eye(2), m, d)
    assert not flag and np.all(v == 10 * m * np.eye(2))
    v, flag = C.positive_definitize(np.diag([1.0, -0.5]), m, d)
    assert flag and np.all(v == m * d * np.eye(2))
    v, flag = C.positive_definitize(m * d * np.eye(2), m, d)
    assert not flag


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.floats(0.01, 10))
def test_positive_definitize_floor(seed, d, delta):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    v, _ = C.positive_definitize(a + a.T, 3, delta)
    assert np.linalg.eigvalsh(v)[0] >= delta * 3 * (1 - 1e-9)


def test_psd_sqrt_examples():
    np.testing.assert_array_equal(C.psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(C.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    with pytest.raises(NotPSDError):
        C.psd_sqrt(np.diag([1.0, -0.1]))
    with pytest.raises(AsymmetryError):
        C.psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_psd_sqrt_round_trip(seed, d):
    m = np.random.default_rng(seed).standard_normal((d, d))
    a = m.T @ m
    r = C.psd_sqrt(a)
    assert np.abs(r - r.T).max() <= 1e-12 * max(1.0, np.abs(r).max())
    assert np.linalg.norm(r @ r - a) <= 1e-8 * max(np.linalg.norm(a), 1e-300)


# -- surrogate --------------------------------------------------------------

def _covs(mats, m, delta=1.0):
    return C.definitize_all(np.asarray(mats, float), m, delta, 2 * delta)


def test_surrogate_endpoint_is_standard_normal():
    sc = scheme(640, 4, 40, 1.0)
    covs = _covs([4.0 * np.eye(1)] * sc.q, 4)
    g = C.surrogate_block_paths(covs, 2000, np.random.default_rng(7))
    z = g[:, -1, 0] / math.sqrt(sc.q * sc.m)
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_surrogate_path_layout_and_determinism():
    sc = scheme(640, 4, 40, 1.0)
    covs = _covs([4.0 * np.eye(2)] * sc.q, 4)
    a, b = C.gaussian_surrogate(covs, sc, 9), C.gaussian_surrogate(covs, sc, 9)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.n == 640
    nonzero = np.flatnonzero(np.any(a.values != 0, axis=1))
    np.testing.assert_array_equal(nonzero, np.arange(1, sc.q + 1) * sc.block_len - 1)


def test_zero_covariances_give_zero_path():
    sc = scheme(640, 4, 40, 1.0)
    covs = C.BlockCovariances(np.zeros((sc.q, 1, 1)), np.zeros(sc.q, bool),
                              np.zeros((sc.q, 1, 1)), 1.0, 2.0)
    assert not np.any(C.gaussian_surrogate(covs, sc, 1).values)


def test_surrogate_increment_covariance():
    v = np.array([[2.0, 0.6], [0.6, 1.0]])
    covs = _covs([v, 3 * v], 1, delta=0.1)
    g = C.surrogate_block_paths(covs, 5000, np.random.default_rng(8))
    inc = np.diff(g, axis=1)
    for j, target in enumerate((v, 3 * v)):
        np.testing.assert_allclose(np.cov(inc[:, j].T), target, rtol=0.1, atol=0.05)


def test_estimated_block_covariances_are_definitized():
    spec = P.ar1(0.5)
    sc = C.make_scheme(1024, 8, 50.0, 10.0, 2 * math.sqrt(2), 4.0)
    covs = C.estimate_block_covariances(spec, sc, reps=64, seed=1, resamples=8)
    assert covs.matrices.shape == (sc.q, 1, 1)
    lam = np.linalg.eigvalsh(covs.matrices)[:, 0]
    assert np.all(lam >= covs.delta_star * sc.m * (1 - 1e-9))
    assert covs.delta_star == pytest.approx(2.0)


# -- coupling and gap -------------------------------------------------------

def test_coupling_report_on_finite_ma():
    spec = P.VectorLinear(np.array([1.0, 0.5, -0.3]))
    sc = scheme(1024, 2, 16, 1e6)
    rep = C.coupling_report(spec, sc, seed=1)
    assert rep.stage1 == 0.0 and rep.stage2 == 0.0
    assert rep.stage3 > 0 and rep.total == pytest.approx(rep.stage3)


def test_stage1_zero_without_active_truncation():
    spec = P.ar1(0.5)
    sc = scheme(512, 3, 24, 50.0)
    rep = C.coupling_report(spec, sc, seed=2)
    assert rep.stage1 == 0.0


def test_coupling_triangle_inequality():
    for seed in range(5):
        rep = C.coupling_report(P.ar1(0.5), scheme(1024, 2, 16, 1.5), seed=seed)
        assert rep.total <= rep.stage1 + rep.stage2 + rep.stage3 + 1e-9
        assert min(rep.stage1, rep.stage2, rep.stage3) >= 0


def test_coupling_csv(tmp_path):
    reps = [C.coupling_report(P.ar1(0.5), scheme(512, 2, 16, 1.5), seed=s) for s in range(2)]
    C.write_coupling_csv(reps, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "n,seed,stage1,stage2,stage3,total" and len(lines) == 3


def test_distributional_gap_iid_null():
    spec = P.VectorLinear(np.eye(1)[None])
    sc = C.make_scheme(1024, 8, 50.0, 10.0, math.sqrt(2), 1.0)
    covs = C.estimate_block_covariances(spec, sc, reps=128, seed=3)
    gap = C.distributional_gap(spec, sc, covs, "EndpointNorm", reps=500, seed=4)
    assert gap.seed_s != gap.seed_g
    assert 0 < gap.ks < 2 * gap.critical
    with pytest.raises(DomainError):
        C.distributional_gap(spec, sc, covs, reps=499)
    with pytest.raises(DomainError):
        C.distributional_gap(spec, sc, covs, functional="Median")


def test_ks_critical_value():
    assert C.ks_critical(500, 500) == pytest.approx(1.6276 * math.sqrt(2 / 500), rel=1e-4)


def test_truncated_delta_bound():
    assert C.truncated_delta_bound(0.0, 4096, 4, 6, 0.7) == 0.0
    assert C.truncated_delta_bound(0.3, 4096, 4, 4 * (1 + 1e-12), 0.7) == pytest.approx(0.6, rel=1e-9)
    with pytest.raises(DomainError):
        C.truncated_delta_bound(0.3, 4096, 4, 4, 0.7)


def test_mc_truncated_delta_beyond_window_is_zero():
    spec = P.ar1(0.5)
    sc = scheme(4096, 4, 32, 3.0, p=4)
    est, se = C.mc_truncated_delta(spec, sc, 6, 6.0, reps=200, resamples=4, probes=2)
    assert est == 0.0
