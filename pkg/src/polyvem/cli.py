"""Command-line interface: ``polyvem study`` and ``polyvem verify``."""

from __future__ import annotations

import argparse
import logging
import sys

from .mesh import MESH_KINDS, MeshError
from .postprocess import StudyConfig, run_convergence_study
from .verification import run_all

EXIT_OK = 0
EXIT_ACCEPTANCE_FAILURE = 2

KIND_CHOICES = {"triangles": "triangles", "quads": "distorted-quads",
                "hexagons": "distorted-hexagons"}
KIND_CHOICES.update({kind: kind for kind in MESH_KINDS})


def _degrees(text: str) -> tuple[int, ...]:
    try:
        degrees = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid degree list {text!r}") from exc
    if not degrees or min(degrees) < 0:
        raise argparse.ArgumentTypeError("degrees must be a non-empty list of integers >= 0")
    return degrees


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyvem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    study = sub.add_parser("study", help="Kovasznay convergence study")
    study.add_argument("--kind", choices=sorted(KIND_CHOICES), default="triangles")
    study.add_argument("--degrees", type=_degrees, default=(0, 1, 2))
    study.add_argument("--levels", type=int, default=3)
    study.add_argument("--h0", type=float, default=0.25, help="target size of the coarsest mesh")
    study.add_argument("--refine", type=float, default=2.0, help="h ratio between levels")
    study.add_argument("--mu", type=float, default=0.1)
    study.add_argument("--kappa1", type=float, default=0.1)
    study.add_argument("--kappa2", type=float, default=0.1)
    study.add_argument("--kappa3", type=float, default=0.1)
    study.add_argument("--tol", type=float, default=1e-6)
    study.add_argument("--maxit", type=int, default=20)
    study.add_argument("--seed", type=int, default=0)
    study.add_argument("--out", default="report.csv")
    study.add_argument("--export-fields", metavar="DIR", default=None)
    study.add_argument("--mesh", metavar="FILE", default=None,
                       help="use this mesh instead of generated levels")

    verify = sub.add_parser("verify", help="run the randomized property checks")
    verify.add_argument("--quick", action="store_true", help="smaller random sweeps")
    return parser


def _study(args) -> int:
    try:
        config = StudyConfig(
            kind=KIND_CHOICES[args.kind], degrees=args.degrees, levels=args.levels, h0=args.h0,
            refinement=args.refine, mu=args.mu, kappa1=args.kappa1, kappa2=args.kappa2,
            kappa3=args.kappa3, tol=args.tol, maxit=args.maxit, seed=args.seed, out=args.out,
            export_fields=args.export_fields, mesh_file=args.mesh)
        report = run_convergence_study(config)
    except (ValueError, MeshError, OSError) as exc:
        print(f"polyvem: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.to_csv())
    return EXIT_ACCEPTANCE_FAILURE if report.failed else EXIT_OK


def _verify(args) -> int:
    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_ACCEPTANCE_FAILURE if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "study":
        return _study(args)
    return _verify(args)


if __name__ == "__main__":
    sys.exit(main())
