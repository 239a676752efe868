"""Randomized property checks of the element constructions and small end-to-end checks.

Each check returns a :class:`CheckResult`; ``polyvem verify`` runs them all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import Discretization, build_dof_map, global_dof_count, newton_solve
from .mesh import PolygonalMesh, generate_mesh, polygon_geometry
from .nonlinear import build_convection, build_weighted_mass, velocity_coefficients
from .postprocess import ExactSolution, compute_errors, postprocess
from .projectors import build_projectors, build_workspace, dofs_H_row, dofs_V, triple_product_tensor


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}) {self.detail}".rstrip()


def random_polygon(rng: np.random.Generator, n_vertices: int | None = None,
                   scale: float | None = None) -> np.ndarray:
    """Counterclockwise star-shaped polygon with random vertex angles and radii."""
    d = int(rng.integers(3, 9)) if n_vertices is None else n_vertices
    while True:
        gaps = rng.uniform(0.3, 1.0, d)
        ang = np.cumsum(gaps) / gaps.sum() * 2 * np.pi + rng.uniform(0, 2 * np.pi)
        r = rng.uniform(0.6, 1.0, d)
        s = rng.uniform(0.05, 2.0) if scale is None else scale
        pts = s * np.column_stack([r * np.cos(ang), r * np.sin(ang)]) + rng.uniform(-2, 2, 2)
        w = np.roll(pts, -1, axis=0)
        if 0.5 * np.sum(pts[:, 0] * w[:, 1] - w[:, 0] * pts[:, 1]) > 0:
            return pts


def random_element(rng: np.random.Generator, k: int, n_vertices: int | None = None):
    """Workspace and projectors on a random polygon with random edge orientations."""
    verts = random_polygon(rng, n_vertices)
    d = len(verts)
    geom = polygon_geometry(verts, rng.choice([-1.0, 1.0], d), rng.random(d) < 0.3)
    ws = build_workspace(geom, k)
    return ws, build_projectors(ws)


def _rel(residual, reference) -> float:
    return float(np.linalg.norm(residual) / max(np.linalg.norm(reference), 1e-300))


def _poly_field(ws, coeffs, degree):
    def field(points):
        return ws.monomials(points, degree) @ coeffs
    return field


def projector_residuals(ws, ps, rng, n_polys: int = 20) -> dict:
    """Worst relative residuals of every projection applied to random polynomials.

    Also returns the stabilization kernels applied to the same polynomials.
    """
    k = ws.dims.k
    m, m1 = ws.dims.m, ws.dims.m1
    out = dict.fromkeys(("Pb", "Rb", "PU", "PGU", "Ha", "Hd"), 0.0)
    pts, wq = ws.quadrature(2 * k + 4)
    phi = ws.monomials(pts)
    for _ in range(n_polys):
        c = rng.normal(size=2 * m)
        dofs = dofs_H_row(ws, lambda p: np.column_stack([ws.monomials(p) @ c[:m],
                                                         ws.monomials(p) @ c[m:]]))
        out["Pb"] = max(out["Pb"], _rel(ps.stress_row @ dofs - c, c))
        out["Ha"] = max(out["Ha"], _rel(ps.stress_stab @ dofs, dofs))
        cv = rng.normal(size=(2, m1))
        dv = np.concatenate([dofs_V(ws, _poly_field(ws, cv[0], k + 1)),
                             dofs_V(ws, _poly_field(ws, cv[1], k + 1))])
        n_v = ws.dims.n_V
        rb = np.concatenate([ps.energy @ dv[:n_v], ps.energy @ dv[n_v:]])
        out["Rb"] = max(out["Rb"], _rel(rb - cv.ravel(), cv))
        hd = np.concatenate([ps.velocity_stab @ dv[:n_v], ps.velocity_stab @ dv[n_v:]])
        out["Hd"] = max(out["Hd"], _rel(hd, dv))
        # L2 projection of u and of grad u onto P_k, computed by quadrature
        vals = np.stack([ws.monomials(pts, k + 1) @ cv[c_] for c_ in range(2)], axis=1)
        exact_pu = ws.solve_mass((wq[:, None] * phi).T @ vals).T.ravel()
        pu = np.concatenate([ps.velocity @ dv[:n_v], ps.velocity @ dv[n_v:]])
        out["PU"] = max(out["PU"], _rel(pu - exact_pu, exact_pu))
        grads = np.einsum("qic,li->qlc", ws.monomial_gradients(pts, k + 1), cv).reshape(-1, 4)
        exact_pgu = ws.solve_mass((wq[:, None] * phi).T @ grads).T.ravel()
        out["PGU"] = max(out["PGU"], _rel(ps.velocity_grad @ dv - exact_pgu, exact_pgu))
    return out


def check_projector_consistency(degrees=(0, 1, 2), n_polygons: int = 20, n_polys: int = 20,
                                seed: int = 0, tol: float = 1e-9) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst: dict = {}
    sta_min = {"A_sta": math.inf, "D_sta": math.inf}
    null_ratio = 0.0
    for k in degrees:
        for _ in range(n_polygons):
            ws, ps = random_element(rng, k)
            for name, v in projector_residuals(ws, ps, rng, n_polys).items():
                worst[name] = max(worst.get(name, 0.0), v)
            a_sta = ps.stress_stab.T @ ps.stress_stab
            d_sta = ps.velocity_stab.T @ ps.velocity_stab
            for name, mat in (("A_sta", a_sta), ("D_sta", d_sta)):
                eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
                sta_min[name] = min(sta_min[name], eig.min() / max(eig.max(), 1e-300))
            if ws.dims.m0:
                null_ratio = max(null_ratio, np.linalg.norm(ws.grad_moments @ ws.rot_basis)
                                 / np.linalg.norm(ws.grad_moments))
    results = [CheckResult(f"consistency {name}", v <= tol, v, tol)
               for name, v in worst.items() if name in ("Pb", "Rb", "PU", "PGU")]
    results += [CheckResult(f"stabilization kernel {name}", worst[name] <= tol, worst[name], tol)
                for name in ("Ha", "Hd")]
    results += [CheckResult(f"{name} positive semidefinite", v >= -1e-12, v, -1e-12,
                            "(smallest relative eigenvalue)") for name, v in sta_min.items()]
    results.append(CheckResult("rot-moment nullspace", null_ratio <= 1e-11, null_ratio, 1e-11))
    return results


def convection_residual(ps, ws, beta, kappa2, triple=None):
    """Local convection contribution ``[G1; G2](beta) beta`` and its Jacobian."""
    triple = triple_product_tensor(ws) if triple is None else triple
    gamma = velocity_coefficients(ps, beta)
    cb = build_convection(ps, ws, build_weighted_mass(ws, gamma, triple), kappa2)
    value = np.concatenate([cb.G1 @ beta, cb.G2 @ beta])
    return value, np.vstack([cb.DG1, cb.DG2])


def gateaux_slopes(ws, ps, rng, kappa2: float = 0.1, eps=(1e-4, 1e-5, 1e-6)) -> float:
    """Log-log slope of the first-order Taylor remainder of the convection form."""
    n = 2 * ws.dims.n_V
    beta = rng.normal(size=n)
    direction = rng.normal(size=n)
    triple = triple_product_tensor(ws)
    f0, jac = convection_residual(ps, ws, beta, kappa2, triple)
    errs = []
    for e in eps:
        fe, _ = convection_residual(ps, ws, beta + e * direction, kappa2, triple)
        errs.append(np.linalg.norm((fe - f0) / e - jac @ direction))
    return float(np.polyfit(np.log(eps), np.log(errs), 1)[0])


def check_gateaux(degrees=(0, 1, 2), n_states: int = 10, seed: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for k in degrees:
        slopes = []
        for _ in range(n_states):
            ws, ps = random_element(rng, k)
            slopes.append(gateaux_slopes(ws, ps, rng))
        dev = max(abs(s - 1.0) for s in slopes)
        results.append(CheckResult(f"Gateaux slope k={k}", dev <= 0.1, dev, 0.1,
                                   f"(slopes {min(slopes):.3f}..{max(slopes):.3f})"))
    return results


# -- end-to-end checks ---------------------------------------------------------

PATCH_NODES = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.4, 0.6]])
PATCH_ELEMENTS = [[0, 1, 2, 4], [0, 4, 2, 3]]


def patch_mesh() -> PolygonalMesh:
    """Unit square split into two quadrilaterals through an off-center interior node."""
    return PolygonalMesh(PATCH_NODES, PATCH_ELEMENTS)


def patch_solution(k: int, mu: float = 0.1) -> ExactSolution:
    """Polynomial Navier-Stokes solution that lies in the discrete spaces of degree ``k``.

    ``k = 1`` uses a constant velocity and linear pressure; ``k >= 2`` a linear
    divergence-free velocity and quadratic pressure.  The source follows from
    the momentum equation.
    """
    if k < 1:
        raise ValueError("the patch solution needs k >= 1")
    if k == 1:
        grad = np.zeros((2, 2))
        u0 = np.array([1.0, -0.5])

        def pressure(p):
            return (p[:, 0] - 0.5) + 2.0 * (p[:, 1] - 0.5)

        def grad_p(p):
            return np.tile([1.0, 2.0], (len(p), 1))
    else:
        grad = np.array([[0.5, -0.3], [0.2, -0.5]])
        u0 = np.array([1.0, -0.4])

        def pressure(p):
            return p[:, 0] ** 2 - p[:, 1] ** 2 + p[:, 0] - 0.5

        def grad_p(p):
            return np.column_stack([2 * p[:, 0] + 1.0, -2 * p[:, 1]])

    def velocity(p):
        p = np.atleast_2d(p)
        return u0 + p @ grad.T

    def velocity_gradient(p):
        return np.broadcast_to(grad, (len(np.atleast_2d(p)), 2, 2)).copy()

    def force(p):
        p = np.atleast_2d(p)
        return velocity(p) @ grad.T + grad_p(p)

    return ExactSolution(mu, velocity, velocity_gradient, pressure, force,
                         domain=((0.0, 1.0), (0.0, 1.0)))


def run_patch_test(k: int, mesh: PolygonalMesh | None = None, tol: float = 1e-10):
    """Solve the polynomial patch problem; returns relative errors and the Newton state."""
    exact = patch_solution(k)
    mesh = patch_mesh() if mesh is None else mesh
    disc = Discretization(mesh, k, exact.params())
    state = newton_solve(disc, tol=tol)
    sol = postprocess(disc, state.x)
    row = compute_errors(sol, exact)
    # norms of the exact fields are the errors of the zero approximation
    norms = compute_errors(postprocess(disc, np.zeros_like(state.x)), exact).errors
    return {name: row.errors[name] / norms[name] for name in row.errors}, state, sol


def check_patch(degrees=(1, 2), tol: float = 1e-7) -> list[CheckResult]:
    results = []
    for k in degrees:
        rel, _, _ = run_patch_test(k)
        worst = max(rel.values())
        results.append(CheckResult(f"patch test k={k}", worst <= tol, worst, tol))
    return results


def independent_dof_count(mesh: PolygonalMesh, k: int) -> int:
    """DOF count from an edge census that does not use the mesh edge table."""
    edges = set()
    for el in mesh.elements:
        for a, b in zip(el, np.roll(el, -1)):
            edges.add((min(a, b), max(a, b)))
    used = set(int(v) for el in mesh.elements for v in el)
    return global_dof_count(k, len(used), len(edges), len(mesh.elements))


def check_dof_counts(degrees=(0, 1, 2), h: float = 0.5, seed: int = 0) -> list[CheckResult]:
    worst = 0
    for kind in ("triangles", "distorted-quads", "distorted-hexagons"):
        mesh = generate_mesh(kind, target_h=h, seed=seed)
        for k in degrees:
            dm = build_dof_map(mesh, k)
            used = np.unique(np.concatenate(dm.stress + dm.velocity))
            mismatch = abs(dm.n_dofs - independent_dof_count(mesh, k))
            # every index except the multiplier is referenced by some element
            mismatch += abs(len(used) - (dm.n_dofs - 1))
            worst = max(worst, mismatch)
    square = PolygonalMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    n_square = build_dof_map(square, 0).n_dofs
    return [CheckResult("DOF count formula", worst == 0, float(worst), 0.5),
            CheckResult("single square k=0 has 17 DOFs", n_square == 17, float(n_square), 17)]


def run_all(quick: bool = False) -> list[CheckResult]:
    n = 5 if quick else 20
    results = check_projector_consistency(n_polygons=n, n_polys=n)
    results += check_gateaux(n_states=3 if quick else 10)
    results += check_patch()
    results += check_dof_counts()
    return results
