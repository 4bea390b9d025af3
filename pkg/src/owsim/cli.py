"""Command-line driver: parse a deck, run the schedule horizon, write the
delimited reports, the summary and the report figures.

Exit status: 0 on success, 1 on simulation failure, 2 on usage errors.
"""

import argparse
import logging
import sys
from dataclasses import replace

from .deck import DeckError, load_deck
from .plotting import render_report_figures
from .report import write_outputs
from .simulator import config_from_deck, run_simulation


def build_parser():
    parser = argparse.ArgumentParser(
        prog="owsim",
        description="Fully implicit two-phase (oil-water) reservoir "
                    "simulator")
    parser.add_argument("--deck", required=True, help="input deck file")
    parser.add_argument("--workers", type=int, default=1,
                        help="number of partition workers (default 1)")
    parser.add_argument("--solver", choices=["bicgstab", "gmres"],
                        default=None, help="Krylov solver (default bicgstab)")
    parser.add_argument("--restart", type=int, default=None,
                        help="GMRES restart length (default 50)")
    parser.add_argument("--precond", choices=["none", "ras", "cpr-fpf"],
                        default=None,
                        help="preconditioner (default cpr-fpf)")
    parser.add_argument("--overlap", type=int, default=None,
                        help="Schwarz overlap layers (default 1)")
    parser.add_argument("--decoupling", choices=["none", "qi", "abf"],
                        default=None,
                        help="Jacobian decoupling (default qi)")
    parser.add_argument("--reorder", choices=["on", "off"], default=None,
                        help="potential reordering (default on)")
    parser.add_argument("--newton", choices=["standard", "inexact"],
                        default=None, help="Newton mode (default inexact)")
    parser.add_argument("--nltol", type=float, default=None,
                        help="nonlinear tolerance (scaled max-norm)")
    parser.add_argument("--mbtol", type=float, default=None,
                        help="per-step material balance tolerance")
    parser.add_argument("--lintol", type=float, default=None,
                        help="fixed linear tolerance for standard Newton")
    parser.add_argument("--max-lin-iters", type=int, default=None,
                        help="linear iteration cap (default 300 "
                             "bicgstab, 100 gmres)")
    parser.add_argument("--max-dt", type=float, default=None,
                        help="maximum time step in days (default 100)")
    parser.add_argument("--dt-init", type=float, default=None,
                        help="initial time step in days (default 1)")
    parser.add_argument("--end-time", type=float, default=None,
                        help="override the deck horizon (days)")
    parser.add_argument("--out", default="owsim-out",
                        help="output directory (default ./owsim-out)")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering")
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="progress logging to stderr")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        deck = load_deck(args.deck)
    except OSError as exc:
        parser.error(f"cannot read deck: {exc}")
    except DeckError as exc:
        print(f"deck error: {exc}", file=sys.stderr)
        return 2

    overrides = {
        "solver": args.solver,
        "restart": args.restart,
        "precond": args.precond,
        "overlap": args.overlap,
        "decoupling": args.decoupling,
        "reorder": args.reorder,
        "newton": args.newton,
        "nltol": args.nltol,
        "mbtol": args.mbtol,
        "lintol": args.lintol,
        "maxliniters": args.max_lin_iters,
        "maxdt": args.max_dt,
        "dtinit": args.dt_init,
    }
    try:
        config = config_from_deck(deck, overrides)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.end_time is not None:
        deck = replace(deck, end_time=args.end_time)

    result = run_simulation(deck, num_workers=args.workers, config=config)

    config_echo = {
        "deck": args.deck,
        "workers": args.workers,
        "newton": config.newton.mode,
        "nltol": config.newton.epsilon,
        "mbtol": config.newton.mb_tol,
        "linear solver": config.linear_solver,
        "restart": config.restart,
        "linear cap": config.linear_cap(),
        "preconditioner": config.precond,
        "overlap": config.overlap,
        "decoupling": config.decoupling,
        "reorder": "on" if config.reorder else "off",
        "max dt (days)": config.controller.dt_max,
        "end time (days)": deck.end_time,
    }
    write_outputs(result, args.out, config_echo)
    if not args.no_plots:
        render_report_figures(result.report_rows, args.out)

    for warning in result.warnings:
        print(f"deck note: {warning}", file=sys.stderr)
    if result.status != 0:
        print(f"simulation FAILED: {result.summary['failure']}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
