"""Command-line interface: ``maisac run`` and ``maisac inspect``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .baselines import ALL_SCHEMES, SCHEME_PROPOSED
from .errors import InvalidParameterError
from .experiments import ExperimentSpec, inspect_scene, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maisac",
        description="Movable-antenna ISAC beamforming simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment spec (JSON)")
    run_p.add_argument("spec", help="experiment spec JSON file")
    run_p.add_argument("--out-dir", default="results", help="output directory")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the spec's seed list with one seed")
    run_p.add_argument("--tol", type=float, default=None,
                       help="override the outer convergence tolerance")
    run_p.add_argument("--max-iter", type=int, default=None,
                       help="override the outer iteration cap")
    run_p.add_argument("--scheme", action="append", choices=ALL_SCHEMES,
                       help="restrict to these schemes (repeatable)")
    run_p.add_argument("--jobs", type=int, default=1, help="worker processes")
    run_p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    ins_p = sub.add_parser("inspect", help="run one scene and audit it")
    ins_p.add_argument("scene", help="scene JSON file (angles in degrees)")
    ins_p.add_argument("--seed", type=int, default=0)
    ins_p.add_argument("--tol", type=float, default=1e-3)
    ins_p.add_argument("--max-iter", type=int, default=30)
    ins_p.add_argument("--scheme", default=SCHEME_PROPOSED, choices=ALL_SCHEMES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            spec = ExperimentSpec.from_json(args.spec)
            if args.seed is not None:
                spec = replace(spec, seeds=(args.seed,))
            if args.tol is not None:
                spec = replace(spec, tol=args.tol)
            if args.max_iter is not None:
                spec = replace(spec, max_outer=args.max_iter)
            if args.scheme:
                spec = replace(spec, schemes=tuple(args.scheme))
        except InvalidParameterError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        table = run_experiment(
            spec, out_dir=args.out_dir, jobs=args.jobs,
            figures=not args.no_figures,
        )
        bad = [row for row in table.rows if row.status not in ("converged", "max-iter")]
        for row in bad:
            print(f"cell {row.key()} ended with status {row.status}", file=sys.stderr)
        print(f"wrote {len(table.rows)} rows to {args.out_dir}")
        return 0 if not bad else 2

    text, code = inspect_scene(
        args.scene, seed=args.seed, tol=args.tol,
        max_outer=args.max_iter, scheme=args.scheme,
    )
    stream = sys.stdout if code == 0 else sys.stderr
    print(text, file=stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
