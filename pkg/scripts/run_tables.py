"""Convergence tables for the Kovasznay flow on all three mesh families.

    python scripts/run_tables.py --levels 3 --outdir results

Writes one CSV per mesh kind and prints a short summary.  The default levels
are the ones used by the acceptance suite; ``--levels`` extends them.
"""

from __future__ import annotations

import argparse
import logging
import os
import time

from polyvem.mesh import MESH_KINDS
from polyvem.postprocess import StudyConfig, StudyReport, run_convergence_study

COARSEST_H = {0: 0.125, 1: 0.25, 2: 0.25}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kinds", nargs="+", default=list(MESH_KINDS), choices=MESH_KINDS)
    parser.add_argument("--degrees", nargs="+", type=int, default=[0, 1, 2])
    parser.add_argument("--levels", type=int, default=3)
    parser.add_argument("--outdir", default="results")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    os.makedirs(args.outdir, exist_ok=True)

    for kind in args.kinds:
        records = []
        for k in args.degrees:
            start = time.perf_counter()
            cfg = StudyConfig(kind=kind, degrees=(k,), levels=args.levels, h0=COARSEST_H[k])
            records += run_convergence_study(cfg).records
            print(f"{kind} k={k}: {time.perf_counter() - start:.0f} s")
        report = StudyReport(StudyConfig(kind=kind, degrees=tuple(args.degrees)), records)
        path = os.path.join(args.outdir, f"{kind}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(report.to_csv())


if __name__ == "__main__":
    main()
