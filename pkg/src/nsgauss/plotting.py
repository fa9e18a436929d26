"""SVG figures rendered from the experiment CSV files.

Plots are a pure view: every function reads only the CSV it is given, so a
figure can be regenerated from stored output alone.  SVG output carries no
date and uses a fixed hash salt, so identical CSVs give identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .summaries import column, loglog_fit, medians_by_n  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "nsgauss"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def plot_rates(csv_path, out_dir):
    """Exponent curve, plus gamma and L on the sub-critical range."""
    chi = column(csv_path, "chi")
    exponent = column(csv_path, "exponent")
    gamma = column(csv_path, "gamma")
    cap_l = column(csv_path, "L")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(chi, exponent, color="k")
    ax.set_xlabel("chi")
    ax.set_ylabel("rate exponent max(1/r, 1/p)")
    _save(fig, Path(out_dir) / "rate_exponent.svg")

    sub = np.isfinite(gamma)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    a1.plot(chi[sub], gamma[sub], color="C0")
    a1.set_xlabel("chi")
    a1.set_ylabel("gamma")
    a2.plot(chi[sub], cap_l[sub], color="C1")
    a2.set_xlabel("chi")
    a2.set_ylabel("L")
    return _save(fig, Path(out_dir) / "gamma_L.svg")


def plot_profile(csv_path, out_dir):
    lag = column(csv_path, "lag")
    delta = column(csv_path, "delta")
    theta = column(csv_path, "theta_tail")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pos = delta > 0
    ax.semilogy(lag[pos], delta[pos], "o-", label="delta_j")
    ax.semilogy(lag[theta > 0], theta[theta > 0], "s--", label="tail sum")
    ax.set_xlabel("lag")
    ax.legend()
    return _save(fig, Path(out_dir) / "profile.svg")


def plot_coupling(csv_path, out_dir):
    """Log-log medians of the total coupling error with the fitted line."""
    ns, med = medians_by_n(column(csv_path, "n", int), column(csv_path, "total"))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(ns, med, "o", label="median max |S - S<>|")
    if len(ns) >= 2:
        fit = loglog_fit(ns, med)
        xs = np.geomspace(ns[0], ns[-1], 50)
        ax.loglog(xs, np.exp(fit.intercept) * xs ** fit.slope, "-",
                  label=f"slope {fit.slope:.3f} [{fit.ci_low:.3f}, {fit.ci_high:.3f}]")
    ax.set_xlabel("n")
    ax.legend()
    return _save(fig, Path(out_dir) / "coupling.svg")


def plot_gap(csv_path, out_dir):
    ns = column(csv_path, "n", int)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(ns, column(csv_path, "ks"), "o-", label="KS distance")
    ax.semilogx(ns, column(csv_path, "critical"), "k--", label="KS critical (0.01)")
    ax.set_xlabel("n")
    ax.legend()
    return _save(fig, Path(out_dir) / "gap.svg")


def plot_band(csv_path, out_dir):
    t = column(csv_path, "t")
    hw = column(csv_path, "half_width")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, color in (("theta1_hat", "C0"), ("theta2_hat", "C1")):
        est = column(csv_path, name)
        ax.plot(t, est, color=color, label=name)
        ax.fill_between(t, est - hw, est + hw, color=color, alpha=0.2)
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, Path(out_dir) / "band.svg")


def plot_changepoint(csv_path, out_dir, quantile=None):
    i = column(csv_path, "i", int)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(i, column(csv_path, "cusum"), color="k", lw=0.8)
    if quantile is not None:
        ax.axhline(quantile, color="C3", ls="--", label="surrogate quantile")
        ax.legend()
    ax.set_xlabel("i")
    ax.set_ylabel("|C_i| / sqrt(n)")
    return _save(fig, Path(out_dir) / "cusum.svg")
