"""Small pure summaries shared by the experiment runner and the plots."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def column(path, name, kind=float) -> np.ndarray:
    header, rows = read_csv(path)
    i = header.index(name)
    return np.array([kind(r[i]) for r in rows])


def medians_by_n(ns, values):
    ns = np.asarray(ns)
    grid = np.unique(ns)
    return grid, np.array([np.median(np.asarray(values)[ns == n]) for n in grid])


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int


def loglog_fit(ns, medians, level: float = 0.95) -> SlopeFit:
    """Least-squares slope of ``log(median)`` on ``log(n)`` with a
    t-interval (infinite when there are only two points)."""
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(medians, float))
    if len(x) < 2:
        raise ValueError("a slope needs at least two sample sizes")
    res = stats.linregress(x, y)
    df = len(x) - 2
    half = stats.t.ppf(0.5 + level / 2, df) * res.stderr if df > 0 else math.inf
    return SlopeFit(float(res.slope), float(res.intercept),
                    float(res.slope - half), float(res.slope + half), len(x))
