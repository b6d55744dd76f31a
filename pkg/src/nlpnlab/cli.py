"""Command-line entry point.

Verbs: ``cov`` (covariance experiment), ``eq`` (equalizer sweep),
``model`` (closed form vs Monte-Carlo oracle, no fiber run), and
``validate`` (config check only).  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, ConfigError,
                      load_config, run_cov_experiment, run_eq_experiment,
                      run_model_only)

_RUNNERS = {
    "cov": run_cov_experiment,
    "eq": run_eq_experiment,
    "model": run_model_only,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlpnlab",
        description="Correlated nonlinear phase noise laboratory for "
                    "multi-subcarrier coherent links.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, doc in (("cov", "run the covariance/correlation experiment"),
                      ("eq", "run the phase-equalizer Q-vs-power sweep"),
                      ("model", "compare analytic model with the MC oracle"),
                      ("validate", "validate a configuration file and exit")):
        p = sub.add_parser(verb, help=doc)
        p.add_argument("--config", default=None,
                       help="YAML configuration file (flat dotted keys)")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace run.seed from the config")
        if verb != "validate":
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--threads", type=int, default=1,
                           help="worker processes for the experiment grid")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed_override)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "validate":
        print(f"config ok (hash {cfg.hash()})")
        return EXIT_OK
    if args.threads < 1:
        print("configuration error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = _RUNNERS[args.verb](cfg, args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, ValueError,
            ZeroDivisionError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
