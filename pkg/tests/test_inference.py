import math

import numpy as np
import pytest
from scipy import integrate

from nsgauss import inference as I
from nsgauss import processes as P
from nsgauss.errors import DomainError, NotPSDError, SingularDesignError, WindowError


def tvtar_path(th1, th2, n, seed):
    return P.simulate(P.TvTar(P.Polynomial(th1), P.Polynomial(th2)), n, seed)


def test_kernel_shapes():
    x = np.linspace(-1.5, 1.5, 301)
    for shape in I.KernelShape:
        k = I.KernelSpec(0.1, shape)
        np.testing.assert_allclose(k(x), k(-x))
        assert np.all(k(x[np.abs(x) > 1]) == 0)
        mass = integrate.quad(lambda u: float(k(np.array([u]))[0]), -1, 1)[0]
        assert mass == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        I.KernelSpec(0.5)


def test_fit_is_consistent():
    y = tvtar_path([0.5], [0.4], 100_000, 1)
    fit = I.fit_tvtar(y, I.KernelSpec(0.1), grid=[0.5])
    np.testing.assert_allclose(fit.theta_hat[0], [0.5, 0.4], atol=0.02)


def test_noiseless_fit_is_exact():
    n, eta = 1000, (0.3, 0.6)
    y = np.zeros(n)
    y[0] = 1.0
    for i in range(1, n):
        y[i] = eta[0] * max(y[i - 1], 0) + eta[1] * max(-y[i - 1], 0)
        if i == 449:
            y[i] = -5.0  # the only shock, just outside the window around t = 0.5005
    fit = I.fit_tvtar(y, I.KernelSpec(0.05), grid=[0.5005])
    np.testing.assert_allclose(fit.theta_hat[0], eta, atol=1e-10)


def test_estimate_ignores_data_outside_window():
    y = tvtar_path([0.3], [-0.2], 2000, 2).values[:, 0].copy()
    k = I.KernelSpec(0.05)
    a = I.fit_tvtar(y, k, grid=[0.5]).theta_hat
    y[:800] = np.random.default_rng(0).standard_normal(800)
    y[1200:] = 7.0
    b = I.fit_tvtar(y, k, grid=[0.5]).theta_hat
    np.testing.assert_array_equal(a, b)


def test_threshold_fit_collapses_to_local_ar():
    y = tvtar_path([0.3, 0.2], [-0.2], 3000, 3)
    k = I.KernelSpec(0.08)
    fit = I.fit_tvtar(y, k)
    eta = I.local_ar_fit(y, k)
    yy = y.values[:, 0]
    w = I._weights(k, fit.grid, len(yy))
    a1 = w @ np.maximum(yy[:-1], 0) ** 2
    a2 = w @ np.maximum(-yy[:-1], 0) ** 2
    combo = (a1 * fit.theta_hat[:, 0] - a2 * fit.theta_hat[:, 1]) / (a1 + a2)
    np.testing.assert_allclose(combo, eta, atol=1e-10)


def test_singular_design_names_grid_point():
    y = np.abs(np.random.default_rng(4).standard_normal(500)) + 0.1
    with pytest.raises(SingularDesignError, match="t=0.5"):
        I.fit_tvtar(y, I.KernelSpec(0.1), grid=[0.5])
    with pytest.raises(SingularDesignError, match="observations"):
        I.fit_tvtar(np.random.default_rng(5).standard_normal(40), I.KernelSpec(0.05), grid=[0.5])


def test_bandwidth_check_examples():
    rep = I.bandwidth_check(1000, 8, 0.6, 0.4)
    assert rep.e1 == pytest.approx(-0.075) and rep.e2 == pytest.approx(-0.04) and rep.admissible
    rep = I.bandwidth_check(1000, 8, 1 / 3, 0.4)
    assert rep.e2 == pytest.approx(0.2) and not rep.admissible
    assert I.bandwidth_check(1000, 4, 0.5, 0.4).window_empty
    for bad in ((0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.5)):
        with pytest.raises(DomainError):
            I.bandwidth_check(1000, 8, *bad)


@pytest.mark.parametrize("p,alpha", [(8, 0.4), (8, 1.0), (6, 0.7), (12, 0.3), (4, 0.4), (5, 0.2)])
def test_feasibility_window_matches_scan(p, alpha):
    rep = I.bandwidth_check(10, p, 0.5, alpha)
    betas = I.feasible_betas(p, alpha, 1e-3)
    lo, hi = rep.window
    if rep.window_empty:
        assert betas.size == 0
    else:
        assert abs(betas.min() - lo) <= 1e-3 + 1e-12 and abs(betas.max() - hi) <= 1e-3 + 1e-12


def test_admissible_beta():
    assert I.admissible_beta(8, 1.0, 0.6) == 0.6
    assert I.admissible_beta(8, 0.4, 0.3) == pytest.approx(0.5 * (1 / 1.8 + 0.75))
    with pytest.raises(DomainError):
        I.admissible_beta(4, 0.4, 0.5)


@pytest.fixture(scope="module")
def fitted():
    y = tvtar_path([0.3, 0.2], [-0.2], 2000, 6)
    return y, I.fit_tvtar(y, I.KernelSpec(2000 ** -0.6))


def test_band_quantile_properties(fitted):
    y, fit = fitted
    b95 = I.simultaneous_band(fit, y, 0.95, 2000, seed=1)
    b99 = I.simultaneous_band(fit, y, 0.99, 2000, seed=1)
    b100 = I.simultaneous_band(fit, y, 1.0, 2000, seed=1)
    assert 0 < b95.half_width[0] <= b99.half_width[0] <= b100.half_width[0]
    assert np.all(b95.half_width == b95.half_width[0])
    big = I.simultaneous_band(fit, y, 0.95, 4000, seed=2)
    assert big.half_width[0] == pytest.approx(b95.half_width[0], rel=0.05)
    assert np.all((fit.grid > fit.kernel.bandwidth) & (fit.grid < 1 - fit.kernel.bandwidth))


def test_band_csv(fitted, tmp_path):
    y, fit = fitted
    band = I.simultaneous_band(fit, y, 0.9, 200, seed=1)
    band.write_csv(tmp_path / "band.csv")
    lines = (tmp_path / "band.csv").read_text().splitlines()
    assert lines[0] == "t,theta1_hat,theta2_hat,half_width" and len(lines) == 65


def test_band_shrinks_with_n():
    med = []
    for n in (1000, 8000):
        hw = []
        for s in range(50):
            y = tvtar_path([0.3, 0.2], [-0.2], n, 100 + s)
            fit = I.fit_tvtar(y, I.KernelSpec(n ** -0.6), grid=I.default_grid(n ** -0.6, 16))
            hw.append(I.simultaneous_band(fit, y, 0.95, 400, seed=s).half_width[0])
        med.append(np.median(hw))
    assert med[1] <= med[0]


def test_longrun_cov_basics():
    rng = np.random.default_rng(7)
    w = rng.standard_normal((500, 3))
    np.testing.assert_allclose(I.longrun_cov_estimate(w, 0), np.cov(w.T, bias=True), atol=1e-14)
    big = rng.standard_normal((100_000, 2))
    est = I.longrun_cov_estimate(big, 10)
    assert np.linalg.norm(est - np.eye(2)) / np.linalg.norm(np.eye(2)) < 0.1
    with pytest.raises(WindowError):
        I.longrun_cov_estimate(w, 125)


def test_longrun_cov_of_squared_ar1_converges():
    # Sigma_W = 2 sigma_x^4 (1 + phi^2) / (1 - phi^2) for W = X^2, X Gaussian AR(1)
    phi = 0.5
    var_x = 1 / (1 - phi ** 2)
    truth = 2 * var_x ** 2 * (1 + phi ** 2) / (1 - phi ** 2)
    errs = []
    for n in (4_000, 100_000):
        lam = int(n ** (1 / 3))
        e = [abs(I.longrun_cov_estimate(P.simulate(P.ar1(phi), n, s).values ** 2, lam)[0, 0] - truth)
             for s in range(6)]
        errs.append(np.mean(e))
    assert errs[1] < errs[0]
    assert errs[1] / truth < 0.1


def test_cusum_properties(tmp_path):
    w = np.random.default_rng(8).standard_normal((400, 2))
    sig = np.eye(2)
    st = I.cusum_covariance(w, sig, reps=200, grid=100)
    shifted = I.cusum_covariance(w + np.array([3.0, -1.0]), sig, reps=200, grid=100)
    assert st.statistic >= 0
    assert shifted.statistic == pytest.approx(st.statistic, abs=1e-12)
    assert I.cusum_covariance(np.full((50, 2), 1.7), sig, reps=50, grid=20).statistic == 0.0
    with pytest.raises(NotPSDError):
        I.cusum_covariance(w, np.diag([1.0, -1.0]))
    assert st.surrogate_quantiles[0.9] <= st.surrogate_quantiles[0.95] <= st.surrogate_quantiles[0.99]
    st.write_csv(tmp_path / "cusum.csv")
    assert (tmp_path / "cusum.csv").read_text().startswith("i,cusum\n1,")
    assert "reject=" in st.summary()


def test_bridge_maximum_matches_kolmogorov_law():
    # sup |B| of a standard bridge has the Kolmogorov distribution (95% point 1.358)
    st = I.cusum_covariance(np.zeros((10, 1)), np.eye(1), reps=4000, grid=2000, seed=3)
    assert st.surrogate_quantiles[0.95] == pytest.approx(1.358, rel=0.04)
