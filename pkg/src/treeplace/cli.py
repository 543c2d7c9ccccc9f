"""Command-line interface.

Three subcommands: ``simulate`` runs the synthetic experiment matrix and
writes a CSV; ``place`` maps one application graph onto a physical graph
(exact line solver or the online engine); ``verify`` runs a verification
suite.  Exit codes: 0 success, 2 configuration error, 3 infeasible input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .io import load_app_graph, load_phys_graph
from .line_dp import Infeasible, place_line
from .online import OnlineConfig, run_online
from .sim import SimConfig, emit_per_seed, rows_to_csv, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeplace",
        description="Placement of tree application graphs onto tree physical topologies.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the synthetic experiment sweep")
    sim.add_argument("--variant", choices=["pinned", "unpinned"], default="pinned")
    sim.add_argument("--sweep", choices=["phys-size", "max-cost"], default="phys-size")
    sim.add_argument("--sweep-values", type=float, nargs="+", default=None,
                     help="sweep points (physical sizes or maximum costs)")
    sim.add_argument("--apps", type=int, default=100)
    sim.add_argument("--seeds", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0, help="master seed")
    sim.add_argument("--gamma", type=float, default=2.0)
    sim.add_argument("--max-cost", type=float, default=0.015)
    sim.add_argument("--capacity", type=float, default=None,
                     help="per-element admission limit (default: none)")
    sim.add_argument("--algorithms", default="proposed,greedy")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--emit-per-seed", metavar="DIR", default=None)

    place = sub.add_parser("place", help="place one application graph")
    place.add_argument("--graph", required=True, help="application JSON file")
    place.add_argument("--phys", required=True, help="physical JSON file")
    place.add_argument("--mode", choices=["exact-line", "online"], default="exact-line")
    place.add_argument("--gamma", type=float, default=2.0)
    place.add_argument("--j-hat-0", type=float, default=None)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("--suite", choices=["bounds", "appendixA", "oracle"],
                        required=True)
    return parser


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        values = args.sweep_values
        if values is None:
            values = (2, 10, 20, 30, 40, 50) if args.sweep == "phys-size" else \
                (0.005, 0.01, 0.015, 0.02, 0.03)
        if args.sweep == "phys-size":
            values = tuple(int(v) for v in values)
        config = SimConfig(
            seed=args.seed,
            num_apps=args.apps,
            num_seeds=args.seeds,
            max_cost=args.max_cost,
            gamma=args.gamma,
            variant=args.variant,
            sweep=args.sweep,
            sweep_values=tuple(values),
            algorithms=tuple(args.algorithms.split(",")),
            capacity=args.capacity,
        )
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_experiment(config)
    with open(args.out, "w") as fh:
        fh.write(rows_to_csv(rows))
    if args.emit_per_seed:
        emit_per_seed(rows, args.emit_per_seed)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _cmd_place(args: argparse.Namespace) -> int:
    try:
        app, model = load_app_graph(args.graph)
        phys = load_phys_graph(args.phys)
    except (ValueError, KeyError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if model is None:
        print("configuration error: the application file carries no cost blocks",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.mode == "exact-line":
        try:
            result = place_line(app, phys, model)
        except (Infeasible, ValueError) as exc:
            if isinstance(exc, Infeasible):
                print(f"infeasible: {exc}", file=sys.stderr)
                return EXIT_INFEASIBLE
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps({"mapping": result.mapping.as_dict(), "cost": result.cost}))
        return EXIT_OK
    config = OnlineConfig(gamma=args.gamma, j_hat_0=args.j_hat_0)
    log, _state = run_online([(app, model)], config, phys=phys)
    print(log.to_json())
    if log.records and log.records[0].outcome != "placed":
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    from .verification import SUITES

    description, runner = SUITES[args.suite]
    print(f"suite {args.suite}: {description}")
    results = runner()
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "place":
        return _cmd_place(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
