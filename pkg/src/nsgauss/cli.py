"""Command line interface.

``nsgauss run <config>``, ``nsgauss validate <config>`` and
``nsgauss rates --p P --chi-max X``.  Exit status is 0 on success, 1 for
configuration errors and 2 for runtime errors.  ``NSGAUSS_WORKERS`` sets the
worker count.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__, rates
from .config import load_config
from .errors import ConfigError, DomainError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("nsgauss")


def _parser():
    ap = argparse.ArgumentParser(prog="nsgauss", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    v = sub.add_parser("validate", help="parse and validate a config without running it")
    v.add_argument("config")
    t = sub.add_parser("rates", help="print the rate table as CSV")
    t.add_argument("--p", type=float, required=True)
    t.add_argument("--chi-max", type=float, required=True)
    t.add_argument("--chi-min", type=float, default=0.01)
    t.add_argument("--points", type=int, default=200)
    t.add_argument("--output", help="write the CSV here instead of stdout")
    return ap


def _rates(args) -> int:
    if not 0 < args.chi_min < args.chi_max or args.points < 2:
        raise ConfigError("--chi-max", "need 0 < chi-min < chi-max and points >= 2")
    try:
        rows = rates.emit_rate_tables(args.p, np.linspace(args.chi_min, args.chi_max, args.points))
    except DomainError as exc:
        raise ConfigError("--p", str(exc)) from exc
    text = rates.rate_table_csv(rows)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "rates":
            return _rates(args)
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"ok: {cfg.experiment.value}, n_grid={list(cfg.n_grid)}, reps={cfg.reps}, "
                  f"output_dir={cfg.output_dir}")
            return EXIT_OK
        from .experiments import run, worker_count

        worker_count()
        log.info("running %s into %s", cfg.experiment.value, cfg.output_dir)
        manifest = run(cfg)
        print(f"{cfg.experiment.value}: wrote {cfg.output_dir} "
              f"({manifest['wall_clock_seconds']} s)")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced with context, never a traceback dump
        context = getattr(getattr(locals().get("cfg"), "experiment", None), "value", args.command)
        print(f"runtime error in {context}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
