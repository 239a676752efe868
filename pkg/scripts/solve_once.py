"""Solve the Kovasznay problem on one mesh and report errors and Newton history.

    python scripts/solve_once.py --kind distorted-hexagons --k 1 --h 0.1
    python scripts/solve_once.py --mesh my_mesh.txt --k 2 --export fields/
"""

from __future__ import annotations

import argparse
import time

from polyvem import Discretization, generate_mesh, kovasznay_data, load_mesh, newton_solve
from polyvem.postprocess import compute_errors, export_fields, postprocess


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", default="triangles")
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--h", type=float, default=0.125)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mesh", default=None)
    parser.add_argument("--mu", type=float, default=0.1)
    parser.add_argument("--export", default=None, metavar="DIR")
    args = parser.parse_args()

    exact = kovasznay_data(args.mu)
    mesh = load_mesh(args.mesh) if args.mesh else generate_mesh(args.kind, target_h=args.h,
                                                                 seed=args.seed)
    start = time.perf_counter()
    disc = Discretization(mesh, args.k, exact.params())
    state = newton_solve(disc)
    sol = postprocess(disc, state.x)
    row = compute_errors(sol, exact)
    print(f"elements {mesh.n_elements}, h {mesh.h:.4f}, N {disc.n_dofs}, "
          f"{time.perf_counter() - start:.1f} s")
    for it, (dx, r) in enumerate(zip(state.increment_norms, state.residual_norms), 1):
        print(f"  newton {it}: |residual| {r:.3e}  |increment| {dx:.3e}")
    for name, value in row.errors.items():
        print(f"  e({name}) = {value:.3e}")
    print(f"  mean(p - p_h) = {row.pressure_error_mean:.2e}")
    if args.export:
        for path in export_fields(sol, args.export, f"k{args.k}"):
            print("wrote", path)


if __name__ == "__main__":
    main()
