"""Experiment runners behind ``nsgauss run``.

Every runner writes CSV files into the output directory and returns a dict
of derived quantities for the manifest.  Replications are independent tasks
seeded by ``seed_stream(master_seed, index)``; results are collected by
index, so the output does not depend on the worker count.
"""
from __future__ import annotations

import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, plotting
from . import construction as C
from . import dependence as D
from . import inference as I
from . import processes as P
from . import rates
from .config import ConfigError, Experiment, ExperimentConfig
from .seeds import seed_stream
from .summaries import loglog_fit, medians_by_n

WORKERS_ENV = "NSGAUSS_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(WORKERS_ENV, f"expected a positive integer, got {raw!r}")
    return value


def pmap(fn, tasks):
    """``[fn(*t) for t in tasks]``, fanned out to the worker pool."""
    tasks = list(tasks)
    workers = worker_count()
    if workers == 1 or len(tasks) < 2:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*tasks), chunksize=max(1, len(tasks) // (4 * workers))))


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    return str(x)


def _write_rows(path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _r(x) -> str:
    return repr(float(x))


# -- RateCurves -------------------------------------------------------------

def run_rate_curves(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.moment.p
    lo = cfg.option("rates.chi_min", 0.01)
    hi = cfg.option("rates.chi_max", 2.0)
    points = cfg.option("rates.points", 200, int)
    if not 0 < lo < hi or points < 2:
        raise ConfigError("rates", "need 0 < chi_min < chi_max and points >= 2")
    rows = rates.emit_rate_tables(p, np.linspace(lo, hi, points))
    (out / "rates.csv").write_text(rates.rate_table_csv(rows))
    plotting.plot_rates(out / "rates.csv", out)
    return {"chi0": rates.chi0(p), "points": points}


# -- DependenceProfile ------------------------------------------------------

def _delta_task(spec, j, r, reps, history_len, seed):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = D.mc_delta(spec, j, r, reps=reps, history_len=history_len, seed=seed)
    return res, [str(w.message) for w in caught]


def run_dependence_profile(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.process
    r = cfg.option("profile.moment", 2.0)
    max_lag = cfg.option("profile.max_lag", 16, int)
    reps = cfg.option("profile.reps", 2000, int)
    history = cfg.option("profile.history_len", 256, int)
    results = pmap(_delta_task, [(spec, j, r, reps, history, seed_stream(cfg.master_seed, j))
                                 for j in range(max_lag + 1)])
    deltas = [res.estimate for res, _ in results]
    base = D.DependenceProfile.from_deltas(deltas, r)
    tail = D.theta_tail(base, max_lag + 1)
    profile = D.DependenceProfile.from_deltas(deltas, r, tail=tail)
    profile.write_csv(out / "profile.csv")
    lo = cfg.option("profile.fit_lo", 3, int)
    hi = cfg.option("profile.fit_hi", max_lag, int)
    fit = D.fit_decay(profile, (lo, hi))
    (out / "profile_fit.json").write_text(fit.to_json() + "\n")
    plotting.plot_profile(out / "profile.csv", out)
    notes = sorted({m for _, msgs in results for m in msgs})
    return {"standard_errors": [res.se for res, _ in results], "tail": tail, "warnings": notes}


# -- construction helpers ---------------------------------------------------

def dependence_constants(cfg: ExperimentConfig) -> tuple[float, float, str]:
    """``(Theta_{0,2}, lambda_*)`` from options, closed forms or Monte Carlo."""
    spec = cfg.process
    theta02 = cfg.option("construction.theta02")
    lam = cfg.option("construction.lambda_star")
    source = "config"
    if spec.linear and (theta02 is None or lam is None):
        b = spec.ma_coefficients()
        if theta02 is None:
            theta02 = sum(D.analytic_delta_linear(b, spec.law, 2, j) for j in range(len(b)))
        if lam is None:
            total = b.sum(axis=0)
            lam = float(np.linalg.eigvalsh(total @ spec.law.cov @ total.T)[0])
        source = "closed form"
    if theta02 is None:
        prof = D.mc_profile(spec, 32, 2.0, reps=2000, history_len=256,
                            seed=seed_stream(cfg.master_seed, 2 ** 63))
        theta02 = prof.theta0 + D.theta_tail(prof, 33)
        source = "monte carlo"
    if lam is None:
        lam = C.lambda_star_estimate(spec, 256, reps=500, seed=seed_stream(cfg.master_seed, 2 ** 63 + 1))
        source = "monte carlo"
    return float(theta02), float(lam), source


def _schemes(cfg):
    theta02, lam, source = dependence_constants(cfg)
    md = cfg.moment
    schemes = []
    for n in cfg.n_grid:
        try:
            schemes.append(C.make_scheme(n, md.p, md.chi, md.a_log, theta02, lam))
        except C.DegenerateSchemeError as exc:
            raise ConfigError("n_grid", f"n={n}: {exc}") from exc
    plan = rates.plan(md)
    derived = {
        "theta02": theta02, "lambda_star_hat": lam, "constants_source": source,
        "r": plan.r, "gamma": plan.gamma, "L": plan.cap_l, "regime": plan.regime.value,
        "schemes": [s.manifest() for s in schemes],
    }
    return schemes, derived


def _coupling_task(spec, scheme, seed, resamples):
    return C.coupling_report(spec, scheme, seed, resamples=resamples)


def run_coupling_rate(cfg: ExperimentConfig, out: Path) -> dict:
    schemes, derived = _schemes(cfg)
    resamples = cfg.option("construction.resamples", C.DEFAULT_RESAMPLES, int)
    tasks = [(cfg.process, s, seed_stream(cfg.master_seed, k * cfg.reps + i), resamples)
             for k, s in enumerate(schemes) for i in range(cfg.reps)]
    reports = pmap(_coupling_task, tasks)
    C.write_coupling_csv(reports, out / "coupling.csv")
    ns, med = medians_by_n([r.n for r in reports], [r.total for r in reports])
    derived["median_total"] = dict(zip(map(int, ns), med.tolist()))
    if len(ns) >= 2:
        fit = loglog_fit(ns, med)
        derived["slope"] = {"estimate": fit.slope, "ci95": [fit.ci_low, fit.ci_high],
                            "reference": 1.0 / cfg.moment.p}
    plotting.plot_coupling(out / "coupling.csv", out)
    return derived


# -- SurrogateGap -----------------------------------------------------------

def _gap_task(spec, scheme, functional, cov_reps, reps, seed, resamples):
    covs = C.estimate_block_covariances(spec, scheme, reps=cov_reps, seed=seed_stream(seed, 0),
                                        resamples=resamples)
    gap = C.distributional_gap(spec, scheme, covs, functional, reps=reps, seed=seed_stream(seed, 1))
    return gap, int(covs.replaced.sum())


def run_surrogate_gap(cfg: ExperimentConfig, out: Path) -> dict:
    schemes, derived = _schemes(cfg)
    functional = cfg.option("gap.functional", "MaxNorm", str)
    if functional not in C.FUNCTIONALS:
        raise ConfigError("gap.functional", f"expected one of {C.FUNCTIONALS}")
    cov_reps = cfg.option("gap.cov_reps", 256, int)
    resamples = cfg.option("construction.resamples", C.DEFAULT_RESAMPLES, int)
    tasks = [(cfg.process, s, functional, cov_reps, cfg.reps, seed_stream(cfg.master_seed, k),
              resamples) for k, s in enumerate(schemes)]
    results = pmap(_gap_task, tasks)
    _write_rows(out / "gap.csv", ("n", "functional", "ks", "critical", "pvalue", "replaced_blocks"),
                [[s.n, functional, _r(g.ks), _r(g.critical), _r(g.pvalue), rep]
                 for s, (g, rep) in zip(schemes, results)])
    plotting.plot_gap(out / "gap.csv", out)
    return derived


# -- BandCoverage -----------------------------------------------------------

def _band_task(spec, n, bandwidth, shape, level, surrogate_reps, seed):
    path = P.simulate(spec, n, seed_stream(seed, 0))
    fit = I.fit_tvtar(path, I.KernelSpec(bandwidth, shape))
    band = I.simultaneous_band(fit, path, level, surrogate_reps, seed=seed_stream(seed, 1))
    return band, I.band_covers(band, spec.theta1, spec.theta2)


def run_band_coverage(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.process
    p = cfg.moment.p if cfg.moment else cfg.option("band.p", 8.0)
    alpha = cfg.option("band.alpha", 1.0)
    beta_req = cfg.option("band.beta", 0.6)
    level = cfg.option("band.level", 0.95)
    surrogate_reps = cfg.option("band.surrogate_reps", 2000, int)
    shape = cfg.option("band.kernel", "Epanechnikov", str)
    try:
        beta = I.admissible_beta(p, alpha, beta_req)
        I.KernelShape(shape)
    except ValueError as exc:
        raise ConfigError("band", str(exc)) from exc
    rows, first_band = [], None
    for k, n in enumerate(cfg.n_grid):
        b = n ** -beta
        tasks = [(spec, n, b, shape, level, surrogate_reps,
                  seed_stream(cfg.master_seed, k * cfg.reps + i)) for i in range(cfg.reps)]
        res = pmap(_band_task, tasks)
        cover = float(np.mean([c for _, c in res]))
        rows.append([n, _r(beta), _r(b), cfg.reps, _r(cover),
                     _r(np.median([band.half_width[0] for band, _ in res]))])
        first_band = res[0][0]
    _write_rows(out / "coverage.csv",
                ("n", "beta", "bandwidth", "reps", "coverage", "median_half_width"), rows)
    first_band.write_csv(out / "band.csv")
    plotting.plot_band(out / "band.csv", out)
    return {"beta_requested": beta_req, "beta": beta, "alpha": alpha, "p": p, "level": level}


# -- ChangePoint ------------------------------------------------------------

def _changepoint_task(spec, n, scale, lag_window, bridge_reps, bridge_grid, covariance, seed,
                      bridge_seed):
    x = P.simulate(spec, n, seed).values.copy()
    x[n // 2:] *= scale
    w = P.quadratic_map(x) if covariance else x
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", I.EigenvalueWarning)
        sigma = I.longrun_cov_estimate(w, lag_window)
    return I.cusum_covariance(w, sigma, reps=bridge_reps, grid=bridge_grid, seed=bridge_seed)


def run_change_point(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.process
    covariance = isinstance(spec, P.CovarianceOf)
    base = spec.base if covariance else spec
    scale = cfg.option("changepoint.scale_after_midpoint", 1.0)
    level = cfg.option("changepoint.level", 0.95)
    bridge_reps = cfg.option("changepoint.bridge_reps", 1000, int)
    bridge_grid = cfg.option("changepoint.bridge_grid", 500, int)
    rows, derived, first = [], {}, None
    for k, n in enumerate(cfg.n_grid):
        lag_window = cfg.option("changepoint.lag_window", int(n ** (1 / 3)), int)
        tasks = [(base, n, scale, lag_window, bridge_reps, bridge_grid, covariance,
                  seed_stream(cfg.master_seed, k * cfg.reps + i), cfg.master_seed)
                 for i in range(cfg.reps)]
        # the standard bridges are shared by all replications of a run
        res = pmap(_changepoint_task, tasks)
        rate = float(np.mean([st.statistic > np.quantile(st.surrogate_maxima, level) for st in res]))
        rows.append([n, cfg.reps, lag_window, _r(scale), _r(level), _r(rate)])
        first = res[0]
    _write_rows(out / "changepoint.csv",
                ("n", "reps", "lag_window", "scale_after_midpoint", "level", "rejection_rate"), rows)
    first.write_csv(out / "cusum.csv")
    q = float(np.quantile(first.surrogate_maxima, level))
    summary = (f"statistic={first.statistic!r} quantile={q!r} level={level!r} "
               f"reject={first.statistic > q}\n")
    (out / "cusum_summary.txt").write_text(summary)
    plotting.plot_changepoint(out / "cusum.csv", out, quantile=q)
    derived["summary"] = summary.strip()
    return derived


RUNNERS = {
    Experiment.RATE_CURVES: run_rate_curves,
    Experiment.DEPENDENCE_PROFILE: run_dependence_profile,
    Experiment.COUPLING_RATE: run_coupling_rate,
    Experiment.SURROGATE_GAP: run_surrogate_gap,
    Experiment.BAND_COVERAGE: run_band_coverage,
    Experiment.CHANGE_POINT: run_change_point,
}


def scheme_summary(cfg: ExperimentConfig) -> dict | None:
    """Per-n ``t_n`` and the rate exponents of the moment plan, for the manifest."""
    if cfg.moment is None:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", rates.AConditionWarning)
        plan = rates.plan(cfg.moment)
    return {
        "regime": plan.regime.value, "r": plan.r, "gamma": plan.gamma, "L": plan.cap_l,
        "k": plan.k, "per_n": {int(n): {"t_n": C.truncation_slack(n),
                                         "m_before_log_factor": n ** plan.cap_l
                                         * C.truncation_slack(n) ** plan.k}
                               for n in cfg.n_grid},
    }


def run(cfg: ExperimentConfig) -> dict:
    """Run one experiment; writes CSV/SVG artifacts plus ``manifest.json``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    derived = RUNNERS[cfg.experiment](cfg, out)
    manifest = {
        "config": dict(sorted(cfg.raw.items())),
        "experiment": cfg.experiment.value,
        "tool_version": __version__,
        "plan": scheme_summary(cfg),
        "derived": derived,
        "workers": worker_count(),
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
    }
    _write_json(out / "manifest.json", manifest)
    return manifest
