"""Command-line entry point: ``brakeorb run <config.json>`` and ``brakeorb verify <field.bin>``.

Exit codes: 0 all checks pass, 2 configuration error, 3 convergence failure,
4 failed check (named on stderr).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_ASSERTION = 0, 2, 3, 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _parser():
    ap = argparse.ArgumentParser(prog="brakeorb", description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="artifact directory (overrides the config)")
    ap.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads; 1 is deterministic")
    ap.add_argument("--seed", type=int, help="seed for randomized checks (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configured mode pipeline")
    run.add_argument("config")
    ver = sub.add_parser("verify", help="re-run the residual checks on a stored field")
    ver.add_argument("field")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    # imported late so the thread caps above reach the BLAS runtime
    from . import runner
    from .errors import (ConfigurationError, ConstraintActive, Degenerate, DimensionError, FormatError,
                         NewtonDivergence, NonConvergence, RMaxTooSmall, TailTooShort, TrapViolation)

    try:
        if args.command == "run":
            cfg = runner.load_config(args.config)
        else:
            cfg = runner.RunConfig.from_json({"mode": "verify", "params": {"field": args.field}})
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if args.out is not None:
            cfg.out = args.out
        doc = runner.execute(cfg)
    except (ConfigurationError, FormatError, DimensionError, Degenerate, RMaxTooSmall) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, ConstraintActive, NewtonDivergence, TrapViolation, TailTooShort) as exc:
        print(f"convergence failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except runner.CheckFailed as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except Exception as exc:  # remaining package errors are failed preconditions of a check
        from .errors import BrakeOrbError
        if isinstance(exc, BrakeOrbError):
            print(f"assertion failure ({type(exc).__name__}): {exc}", file=sys.stderr)
            return EXIT_ASSERTION
        raise
    print(f"{cfg.mode}: {doc['status']} ({len(doc['checks'])} checks) -> {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
