"""Flat ``key = value`` experiment configuration.

Lines hold ``dotted.key = value``; ``#`` starts a comment.  Lists are comma
separated and matrices separate rows with ``;`` (``0.5, 0; 0, 0.2``).

Recognized top-level keys::

    experiment   RateCurves | DependenceProfile | CouplingRate |
                 SurrogateGap | BandCoverage | ChangePoint
    master_seed  integer in [0, 2**64)
    reps         replications per sample size (>= 1)
    n_grid       strictly increasing sample sizes
    output_dir   directory for artifacts (relative to the config file)

``moment.*`` holds ``p``, ``chi`` and ``a_log``; ``process.*`` describes the
process; any other section holds experiment options.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import processes as P
from .errors import ConfigError, NsgaussError
from .rates import MomentDecay

DEFAULT_N_GRID = (2 ** 10, 2 ** 12, 2 ** 14)
DEFAULT_REPS = 200
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)*$")


class Experiment(str, enum.Enum):
    RATE_CURVES = "RateCurves"
    DEPENDENCE_PROFILE = "DependenceProfile"
    COUPLING_RATE = "CouplingRate"
    SURROGATE_GAP = "SurrogateGap"
    BAND_COVERAGE = "BandCoverage"
    CHANGE_POINT = "ChangePoint"


NEEDS_PROCESS = {Experiment.DEPENDENCE_PROFILE, Experiment.COUPLING_RATE,
                 Experiment.SURROGATE_GAP, Experiment.BAND_COVERAGE, Experiment.CHANGE_POINT}
NEEDS_MOMENT = {Experiment.RATE_CURVES, Experiment.COUPLING_RATE, Experiment.SURROGATE_GAP}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: Experiment
    master_seed: int
    reps: int
    n_grid: tuple
    output_dir: Path
    moment: MomentDecay | None
    process: P.ProcessSpec | None
    raw: dict = field(repr=False)

    def option(self, key: str, default=None, kind=float):
        """Typed lookup of an experiment option such as ``coupling.resamples``."""
        if key not in self.raw:
            return default
        return _convert(key, self.raw[key], kind)


def parse_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"line {lineno}", f"invalid key {key!r}")
        if key in raw:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        raw[key] = value
    return raw


def _convert(key, value, kind):
    try:
        if kind is bool:
            low = value.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(value)
            return low in ("true", "yes", "1")
        if kind is int:
            out = int(value, 0)
            return out
        if kind is float:
            out = float(value)
            if math.isnan(out):
                raise ValueError(value)
            return out
        if kind == "floats":
            return tuple(float(v) for v in value.split(",") if v.strip())
        if kind == "ints":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if kind == "matrix":
            rows = [[float(v) for v in r.split(",")] for r in value.split(";")]
            mat = np.array(rows, dtype=float)
            if mat.ndim != 2:
                raise ValueError("ragged matrix")
            return mat
        return value
    except ValueError as exc:
        raise ConfigError(key, f"cannot read {value!r} as {getattr(kind, '__name__', kind)}") from exc


def _require(raw, key, kind):
    if key not in raw:
        raise ConfigError(key, "missing required field")
    return _convert(key, raw[key], kind)


def _indexed(raw, prefix):
    """Values of ``prefix.1``, ``prefix.2``, ... in index order (gaps rejected)."""
    found = {}
    for key in raw:
        if key.startswith(prefix + "."):
            tail = key[len(prefix) + 1:]
            if not tail.isdigit():
                raise ConfigError(key, "expected an integer index")
            found[int(tail)] = key
    if not found:
        return []
    lo = min(found)
    if sorted(found) != list(range(lo, lo + len(found))):
        raise ConfigError(prefix, f"indices must be consecutive, got {sorted(found)}")
    return [found[i] for i in sorted(found)]


def _law(raw, dim=1):
    family = raw.get("process.innovation.family", "gaussian")
    cov = _convert("process.innovation.cov", raw["process.innovation.cov"], "matrix") \
        if "process.innovation.cov" in raw else np.eye(dim)
    dof = _convert("process.innovation.dof", raw["process.innovation.dof"], float) \
        if "process.innovation.dof" in raw else None
    try:
        return P.InnovationLaw(family, cov, dof) if dof is not None else P.InnovationLaw(family, cov)
    except NsgaussError as exc:
        raise ConfigError("process.innovation", str(exc)) from exc


def _dimension(raw) -> int:
    """Process dimension implied by the first coefficient matrix (1 if none)."""
    for prefix in ("process.ar", "process.ma", "process.coeff"):
        keys = _indexed(raw, prefix)
        if keys:
            return _convert(keys[0], raw[keys[0]], "matrix").shape[0]
    return 1


def build_process(raw) -> P.ProcessSpec:
    kind = _require(raw, "process.kind", str)
    law = _law(raw, _dimension(raw))
    burn_in = _convert("process.burn_in", raw.get("process.burn_in", "1024"), int)
    try:
        if kind == "varma":
            ar = [_convert(k, raw[k], "matrix") for k in _indexed(raw, "process.ar")]
            ma = [_convert(k, raw[k], "matrix") for k in _indexed(raw, "process.ma")]
            spec = P.Varma(ar, ma, law, burn_in)
        elif kind == "vector_linear":
            keys = _indexed(raw, "process.coeff")
            if not keys:
                raise ConfigError("process.coeff", "vector_linear needs process.coeff.0, ...")
            spec = P.VectorLinear(np.array([_convert(k, raw[k], "matrix") for k in keys]), law)
        elif kind == "iid":
            spec = P.VectorLinear(np.eye(law.dim)[None], law)
        elif kind == "tvtar":
            th1 = P.Polynomial(_require(raw, "process.theta1", "floats"))
            th2 = P.Polynomial(_require(raw, "process.theta2", "floats"))
            spec = P.TvTar(th1, th2, law, burn_in)
        else:
            raise ConfigError("process.kind", f"unknown kind {kind!r} "
                              "(expected varma, vector_linear, iid or tvtar)")
        spec.check()
    except ConfigError:
        raise
    except NsgaussError as exc:
        raise ConfigError("process", str(exc)) from exc
    if _convert("process.covariance", raw.get("process.covariance", "false"), bool):
        spec = P.CovarianceOf(spec)
    return spec


def build_config(raw: dict, base_dir=".") -> ExperimentConfig:
    name = _require(raw, "experiment", str)
    try:
        experiment = Experiment(name)
    except ValueError:
        raise ConfigError("experiment", f"unknown experiment {name!r}; expected one of "
                          + ", ".join(e.value for e in Experiment)) from None
    seed = _convert("master_seed", raw.get("master_seed", "0"), int)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("master_seed", "must lie in [0, 2**64)")
    reps = _convert("reps", raw.get("reps", str(DEFAULT_REPS)), int)
    if reps < 1:
        raise ConfigError("reps", "must be at least 1")
    n_grid = _convert("n_grid", raw["n_grid"], "ints") if "n_grid" in raw else DEFAULT_N_GRID
    if not n_grid:
        raise ConfigError("n_grid", "must not be empty")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise ConfigError("n_grid", "must be strictly increasing positive counts")
    out = Path(raw.get("output_dir", f"out/{experiment.value}"))
    if not out.is_absolute():
        out = Path(base_dir) / out

    moment = None
    if any(k.startswith("moment.") for k in raw) or experiment in NEEDS_MOMENT:
        p = _require(raw, "moment.p", float)
        chi = _convert("moment.chi", raw.get("moment.chi", "inf"), float)
        a_log = _convert("moment.a_log", raw.get("moment.a_log", "inf"), float)
        try:
            moment = MomentDecay(p, chi, a_log)
        except NsgaussError as exc:
            raise ConfigError("moment", str(exc)) from exc

    process = build_process(raw) if experiment in NEEDS_PROCESS else None
    if experiment is Experiment.BAND_COVERAGE and not isinstance(process, P.TvTar):
        raise ConfigError("process.kind", "BandCoverage needs a tvtar process")
    if experiment is Experiment.SURROGATE_GAP and reps < 500:
        raise ConfigError("reps", "SurrogateGap needs reps >= 500")
    return ExperimentConfig(experiment, seed, reps, tuple(n_grid), out, moment, process, dict(raw))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    return build_config(parse_text(text), base_dir=path.parent)
