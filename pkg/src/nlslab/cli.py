"""Command-line entry point.

Exit codes: 0 success, 1 a checked order or invariant failed, 2 bad
configuration or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .errors import ConfigurationError, FitFailure, NumericalFailure, OrderCheckFailed, PreconditionError, UsageError
from .experiment import Scenario, portrait_command, read_error_table, run_scenario, run_two_potential
from .fitting import fit_order
from .grid import Grid
from .ground_state import save_ground_state, solve_ground_state

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("nlslab")


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlslab", description="Semiclassical coupled NLS soliton experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    gs = sub.add_parser("groundstate", help="solve the elliptic system and save the profiles")
    gs.add_argument("--p", type=float, default=1.0)
    gs.add_argument("--beta", type=float, default=2.0)
    gs.add_argument("--L", type=float, default=20.0)
    gs.add_argument("--n", type=int, default=2048)
    gs.add_argument("--tol", type=float, default=1e-10)
    gs.add_argument("--init", choices=("symmetric", "semitrivial"), default="symmetric")
    gs.add_argument("--out", required=True, help="CSV path; a .json sidecar is written next to it")

    for name, text in (("run", "eps-ladder convergence run"), ("two-potential", "general two-potential run")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--output", help="override the scenario output directory")

    po = sub.add_parser("portrait", help="Lissajous trajectory of the 2D harmonic oscillator")
    po.add_argument("--w1", type=float, required=True)
    po.add_argument("--w2", type=float, required=True)
    po.add_argument("--x0", type=_pair, default=(1.0, 0.0), help="initial position 'x,y'")
    po.add_argument("--v0", type=_pair, default=(0.0, 1.0), help="initial velocity 'vx,vy'")
    po.add_argument("--T", type=float, default=2 * math.pi)
    po.add_argument("--dt", type=float, default=1e-4)
    po.add_argument("--out", required=True)

    fi = sub.add_parser("fit", help="least-squares log-log slope of an (eps, error) table")
    fi.add_argument("--input", required=True)
    return ap


def _cmd_groundstate(a) -> int:
    R = solve_ground_state(a.p, a.beta, Grid(a.L, a.n), init=a.init, tol=a.tol)
    save_ground_state(R, a.out)
    print(json.dumps(R.metadata(), indent=2))
    return EXIT_OK


def _cmd_run(a, general: bool) -> int:
    s = Scenario.from_json(a.config)
    if a.output:
        s.output = a.output
    if general:
        s.mode = "general"
        s.validate()
        report = run_two_potential(s)
    else:
        report = run_scenario(s)
    sys.stdout.write(report.summary_text())
    return EXIT_OK if report.passed else EXIT_ASSERT


def _cmd_portrait(a) -> int:
    meta = portrait_command(a.w1, a.w2, a.x0, a.v0, a.T, a.dt, a.out)
    print(json.dumps(meta, indent=2))
    return EXIT_OK


def _cmd_fit(a) -> int:
    fit = fit_order(read_error_table(a.input))
    print(json.dumps(fit.as_dict(), indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "groundstate":
            return _cmd_groundstate(args)
        if args.command in ("run", "two-potential"):
            return _cmd_run(args, args.command == "two-potential")
        if args.command == "portrait":
            return _cmd_portrait(args)
        return _cmd_fit(args)
    except OrderCheckFailed as exc:
        log.error("%s", exc)
        return EXIT_ASSERT
    except (ConfigurationError, FitFailure, UsageError, PreconditionError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
