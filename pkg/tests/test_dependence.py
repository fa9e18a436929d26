import math

import numpy as np
import pytest

from nsgauss import dependence as D
from nsgauss import processes as P
from nsgauss.errors import DomainError, NonconvergenceWarning, UnavailableCoefficientError


def test_analytic_delta_linear():
    b = 0.5 ** np.arange(10)
    law = P.gaussian()
    assert D.analytic_delta_linear(b, law, 2, 3) == pytest.approx(0.125 * math.sqrt(2))
    assert D.analytic_delta_linear(np.zeros((3, 1, 1)), law, 3, 1) == 0.0
    eye = np.stack([np.zeros((2, 2)), np.eye(2)])
    assert D.analytic_delta_linear(eye, P.gaussian(2), 2, 1) == pytest.approx(2.0)
    with pytest.raises(UnavailableCoefficientError):
        D.analytic_delta_linear(b, law, 2, 10)
    assert D.analytic_delta_linear(lambda j: 0.5 ** j, law, 2, 3) == pytest.approx(0.125 * math.sqrt(2))


def test_analytic_delta_matches_monte_carlo_oracle():
    rng = np.random.default_rng(0)
    diff = rng.standard_normal(10 ** 6) - rng.standard_normal(10 ** 6)
    oracle = math.sqrt(np.mean((0.125 * diff) ** 2))
    assert D.analytic_delta_linear(0.5 ** np.arange(5), P.gaussian(), 2, 3) == pytest.approx(oracle, rel=5e-3)
    # r = 4 closed form against the same draws
    oracle4 = np.mean((0.125 * diff) ** 4) ** 0.25
    assert D.analytic_delta_linear(0.5 ** np.arange(5), P.gaussian(), 4, 3) == pytest.approx(oracle4, rel=1e-2)


def test_mc_delta_matches_analytic():
    spec = P.ar1(0.5)
    for j in (1, 4):
        res = D.mc_delta(spec, j, 2, reps=4000, history_len=128, probes=4, seed=j)
        assert abs(res.estimate - math.sqrt(2) * 0.5 ** j) < 3 * res.se


def test_mc_delta_zero_beyond_ma_order():
    spec = P.VectorLinear(np.array([1.0, 0.5, -0.3]))
    res = D.mc_delta(spec, 3, 2, reps=500, history_len=16, probes=2)
    assert res.estimate == 0.0
    res = D.mc_delta(spec, 40, 2, reps=500, history_len=16, probes=2)
    assert res.estimate == 0.0


def test_mc_delta_warns_when_history_too_short():
    # a one-step short window cannot see eps_{i-1}, so the doubled window disagrees
    spec = P.ar1(0.97, burn_in=64)
    with pytest.warns(NonconvergenceWarning):
        res = D.mc_delta(spec, 1, 2, reps=4000, history_len=1, probes=2)
    assert res.short_estimate == 0.0 and res.estimate > 1


def test_tvtar_delta_decays_geometrically():
    spec = P.TvTar(P.Polynomial([0.4]), P.Polynomial([-0.3]))
    s = spec.sup_coefficient()
    lags = np.arange(1, 21)
    est = [D.mc_delta(spec, int(j), 2, reps=1000, history_len=48, probes=4, seed=int(j)).estimate
           for j in lags]
    slope = np.polyfit(lags, np.log(est), 1)[0]
    assert slope <= math.log(s) + 0.1


def test_lyapunov_ordering():
    spec = P.TvTar(P.Polynomial([0.3, 0.2]), P.Polynomial([-0.2]))
    a = D.mc_delta(spec, 2, 2, reps=4000, history_len=32, probes=4, seed=1)
    b = D.mc_delta(spec, 2, 4, reps=4000, history_len=32, probes=4, seed=1)
    assert a.estimate <= b.estimate + 3 * math.hypot(a.se, b.se)


def test_profile_recursion_and_tail():
    prof = D.DependenceProfile.from_deltas(0.5 ** np.arange(30), 2)
    th = prof.theta_tails
    np.testing.assert_allclose(th[:-1], th[1:] + prof.deltas[:-1], rtol=1e-12)
    assert np.all(np.diff(th) <= 0)
    assert D.theta_tail(prof, 0) == pytest.approx(2.0, rel=1e-12)
    zero = D.DependenceProfile.from_deltas(np.zeros(8), 2)
    assert D.theta_tail(zero, 0) == 0.0
    with pytest.raises(DomainError):
        D.DependenceProfile.from_deltas([1.0, -0.1], 2)


def test_theta_tail_of_ar1():
    b = 0.5 ** np.arange(40)
    deltas = [D.analytic_delta_linear(b, P.gaussian(), 2, j) for j in range(40)]
    prof = D.DependenceProfile.from_deltas(deltas, 2)
    # sum_{j >= 2} sqrt(2) 0.5^j = sqrt(2) * 0.5
    assert D.theta_tail(prof, 2) == pytest.approx(0.70711, abs=1e-5)
    for i in (0, 5):
        assert D.theta_tail(prof, i) == pytest.approx(math.sqrt(2) * 0.5 ** i / 0.5, rel=1e-9)


def _profile_from_theta(theta_fn, hi):
    i = np.arange(1, hi + 2)
    theta = theta_fn(np.maximum(i, 2).astype(float))
    deltas = np.r_[0.0, theta[:-1] - theta[1:]]
    return D.DependenceProfile.from_deltas(deltas, 2, tail=theta[-1])


def test_fit_decay_recovers_polylog():
    prof = _profile_from_theta(lambda i: i ** -1.0 * np.log(i) ** -2.0, 200)
    fit = D.fit_decay(prof, (10, 200))
    assert fit.chi_hat == pytest.approx(1.0, abs=0.05)
    assert fit.a_hat == pytest.approx(2.0, abs=0.3)
    prof = _profile_from_theta(lambda i: i ** -2.0, 200)
    fit = D.fit_decay(prof, (10, 200))
    assert fit.chi_hat == pytest.approx(2.0, abs=0.05)
    assert fit.a_hat == pytest.approx(0.0, abs=0.3)
    assert not fit.super_polynomial


def test_fit_decay_flags_geometric():
    prof = D.DependenceProfile.from_deltas(0.7 ** np.arange(60), 2)
    assert D.fit_decay(prof, (3, 50)).super_polynomial


def test_fit_decay_report_keys():
    prof = _profile_from_theta(lambda i: i ** -2.0, 50)
    rep = D.fit_decay(prof, (5, 40)).report()
    assert set(rep) >= {"chi_hat", "a_hat", "rmse", "range"}


def test_covariance_process_delta():
    law = P.gaussian()
    b = 0.5 ** np.arange(60)
    q = 6
    deltas = [D.analytic_delta_linear(b, law, q, j) for j in range(60)]
    prof = D.DependenceProfile.from_deltas(deltas, q)
    sd_x = 1 / math.sqrt(0.75)
    x_norm = sd_x * D.gaussian_abs_moment(q) ** (1 / q)
    bound = D.covariance_process_delta(prof, 2, x_norm)
    assert bound == pytest.approx(2 * x_norm * 0.25 * math.sqrt(2) * D.gaussian_abs_moment(q) ** (1 / q))
    w_spec = P.CovarianceOf(P.ar1(0.5))
    mc = D.mc_delta(w_spec, 2, q / 2, reps=4000, history_len=64, probes=2, seed=3)
    assert mc.estimate <= bound
    assert D.covariance_process_delta(prof, 2, 3 * x_norm) == pytest.approx(3 * bound)
    zero = D.DependenceProfile.from_deltas(np.zeros(4), q)
    assert D.covariance_process_delta(zero, 2, x_norm) == 0.0
    with pytest.raises(DomainError):
        D.covariance_process_delta(D.DependenceProfile.from_deltas(deltas, 4), 2, x_norm)
