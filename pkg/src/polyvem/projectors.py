"""Per-element auxiliary matrices and polynomial projections of the virtual spaces.

Local degrees of freedom
------------------------
Stress (one tensor row, ``n_H`` entries): edge normal moments against the
edge monomials (``k+1`` per edge, using the globally oriented normal), then
moments against the gradients of non-constant monomials (``m-1``), then
moments against an orthonormal basis of the complement of gradients
(``m0``).  The two tensor rows are stacked.

Velocity (one component, ``n_V`` entries): vertex values, ``k`` interior
point values per edge in local counterclockwise order, then the moments
against the monomials of degree ``<= k-1``.  The two components are stacked.

The tensor polynomial basis is ordered by entry ``(1,1), (1,2), (2,1), (2,2)``,
each block holding the ``m`` monomials of degree ``<= k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .mesh import ElementGeometry
from .quadrature import (
    dim_poly,
    edge_monomials,
    element_quadrature,
    eval_monomial_gradients,
    eval_monomials,
    gauss_legendre_01,
    lagrange_basis,
    moment_table,
    monomial_exponents,
)


class ElementConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpaceDims:
    k: int
    n_edges: int

    @property
    def m(self) -> int:
        return dim_poly(self.k)

    @property
    def m1(self) -> int:
        return dim_poly(self.k + 1)

    @property
    def m0(self) -> int:
        return dim_poly(self.k - 1)

    @property
    def n_H(self) -> int:
        return (self.k + 1) * (self.n_edges + self.k + 1) - 1

    @property
    def n_V(self) -> int:
        return (self.k + 1) * self.n_edges + self.m0

    @property
    def n_edge_H(self) -> int:
        """Edge moments of one stress row."""
        return (self.k + 1) * self.n_edges


@dataclass
class EdgeData:
    """Matrices attached to local edge ``l`` of an element.

    The edge parameter ``t`` runs from the endpoint with the lower global
    node index to the other one.  Lagrange functions are numbered along the
    local counterclockwise traversal.
    """

    sign: float
    length: float
    normal: np.ndarray
    start: np.ndarray
    end: np.ndarray
    boundary: bool
    t: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    edge_basis: np.ndarray
    lagrange: np.ndarray
    edge_mass: np.ndarray
    edge_mass_inv: np.ndarray
    edge_cell: np.ndarray
    flux_map: np.ndarray
    lagrange_flux: np.ndarray
    lagrange_to_edge: np.ndarray
    lagrange_mass: np.ndarray
    cell_lagrange: np.ndarray
    lagrange_mean: np.ndarray
    trace_gather: np.ndarray


@dataclass
class ElementWorkspace:
    geom: ElementGeometry
    dims: SpaceDims
    moments: np.ndarray
    mass_full: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    grad_moments: np.ndarray
    rot_basis: np.ndarray
    laplace_moments: np.ndarray
    gradient_coefficients: np.ndarray
    edges: list[EdgeData]
    node_points: np.ndarray
    point_values: np.ndarray
    element_id: int | None = None
    _mass_chol: tuple = field(default=None, repr=False)
    _stiff_chol: tuple = field(default=None, repr=False)

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._mass_chol, rhs)

    def solve_stiffness(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._stiff_chol, rhs)

    def monomials(self, points, degree: int | None = None) -> np.ndarray:
        deg = self.dims.k if degree is None else degree
        return eval_monomials(deg, points, self.geom.centroid, self.geom.diameter)

    def monomial_gradients(self, points, degree: int | None = None) -> np.ndarray:
        deg = self.dims.k if degree is None else degree
        return eval_monomial_gradients(deg, points, self.geom.centroid, self.geom.diameter)

    def quadrature(self, order: int):
        return element_quadrature(self.geom, order)


def _entries(table: np.ndarray, a, b) -> np.ndarray:
    """``table[a, b]`` with zero wherever an exponent is negative."""
    a = np.asarray(a)
    b = np.asarray(b)
    ok = (a >= 0) & (b >= 0)
    return np.where(ok, table[np.maximum(a, 0), np.maximum(b, 0)], 0.0)


def poly_product_matrix(table, exps_i, exps_j, extra=(0, 0)) -> np.ndarray:
    """``[integral of X^(e_i + e_j + extra)]`` by exponent addition."""
    a = exps_i[:, None, 0] + exps_j[None, :, 0] + extra[0]
    b = exps_i[:, None, 1] + exps_j[None, :, 1] + extra[1]
    return _entries(table, a, b)


def triple_product_tensor(ws: ElementWorkspace) -> np.ndarray:
    """``T[r, i, j] = integral of phi_r phi_i phi_j`` for monomials of degree <= k."""
    e = monomial_exponents(ws.dims.k)
    a = e[:, None, None, 0] + e[None, :, None, 0] + e[None, None, :, 0]
    b = e[:, None, None, 1] + e[None, :, None, 1] + e[None, None, :, 1]
    return _entries(ws.moments, a, b)


def _cholesky(matrix, what, element_id):
    try:
        return sla.cho_factor(matrix)
    except np.linalg.LinAlgError as exc:
        where = "" if element_id is None else f" on element {element_id}"
        raise ElementConstructionError(f"{what} is not positive definite{where}") from exc


def build_workspace(geom: ElementGeometry, k: int, element_id: int | None = None,
                    edge_points: int | None = None) -> ElementWorkspace:
    """All geometry-dependent matrices of one element for degree ``k``."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    dims = SpaceDims(k, geom.n_edges)
    m, m1, m0, d = dims.m, dims.m1, dims.m0, dims.n_edges
    h = geom.diameter
    if not (geom.area > 0 and h > 0):
        raise ElementConstructionError(f"degenerate element {element_id}")

    table = moment_table(geom, max(2 * k + 2, 3 * k))
    e1 = monomial_exponents(k + 1)
    e0 = monomial_exponents(k)
    mass_full = poly_product_matrix(table, e1, e1)
    mass = mass_full[:m, :m].copy()

    # derivatives of X^a Y^b are (a/h) X^(a-1) Y^b and (b/h) X^a Y^(b-1)
    nc = e1[1:]
    ax, bx = nc[:, 0].astype(float), nc[:, 1].astype(float)
    stiffness = (np.outer(ax, ax) * poly_product_matrix(table, nc, nc, (-2, 0))
                 + np.outer(bx, bx) * poly_product_matrix(table, nc, nc, (0, -2))) / h**2
    dx_block = ax[:, None] * poly_product_matrix(table, nc, e0, (-1, 0)) / h
    dy_block = bx[:, None] * poly_product_matrix(table, nc, e0, (0, -1)) / h
    grad_moments = np.hstack([dx_block, dy_block])
    em = monomial_exponents(k - 1) if k >= 1 else np.zeros((0, 2), dtype=np.int64)
    laplace_moments = ((ax * (ax - 1))[:, None] * poly_product_matrix(table, nc, em, (-2, 0))
                       + (bx * (bx - 1))[:, None] * poly_product_matrix(table, nc, em, (0, -2))) / h**2

    q, _ = np.linalg.qr(grad_moments.T, mode="complete")
    rot_basis = q[:, m1 - 1:].copy()

    mass_chol = _cholesky(mass, "element mass matrix", element_id)
    stiff_chol = _cholesky(stiffness, "gradient matrix", element_id)
    gradient_coefficients = sla.cho_solve(stiff_chol, grad_moments).T

    n_pts = edge_points if edge_points is not None else k + 3
    t, w = gauss_legendre_01(n_pts)
    verts = geom.vertices
    edges = []
    for l in range(d):
        a, b = verts[l], verts[(l + 1) % d]
        s = float(geom.edge_signs[l])
        start, end = (a, b) if s > 0 else (b, a)
        he = float(geom.edge_lengths[l])
        nrm = geom.normals[l]
        pts = start + t[:, None] * (end - start)
        phi_e = edge_monomials(k, t)
        lag = lagrange_basis(k, t, positive=s > 0)
        phi_k = eval_monomials(k + 1, pts, geom.centroid, h)
        grad_k = eval_monomial_gradients(k + 1, pts, geom.centroid, h)
        edge_mass = he * (phi_e.T * w) @ phi_e
        edge_mass_inv = np.linalg.inv(edge_mass)
        edge_cell = he * (phi_e.T * w) @ phi_k
        normal_deriv = grad_k[:, 1:, :] @ nrm
        gather = np.zeros((k + 2, dims.n_V))
        gather[0, l] = 1.0
        gather[k + 1, (l + 1) % d] = 1.0
        for r in range(k):
            gather[1 + r, d + l * k + r] = 1.0
        edges.append(EdgeData(
            sign=s, length=he, normal=nrm.copy(), start=start.copy(), end=end.copy(),
            boundary=bool(geom.boundary[l]), t=t, weights=w, points=pts,
            edge_basis=phi_e, lagrange=lag,
            edge_mass=edge_mass, edge_mass_inv=edge_mass_inv, edge_cell=edge_cell,
            flux_map=s * edge_cell.T @ edge_mass_inv,
            lagrange_flux=he * (normal_deriv.T * w) @ lag,
            lagrange_to_edge=he * (lag.T * w) @ phi_e,
            lagrange_mass=(lag.T * w) @ lag,
            cell_lagrange=he * (phi_k[:, :m].T * w) @ lag,
            lagrange_mean=w @ lag,
            trace_gather=gather,
        ))

    node_points = np.vstack([verts] + [
        verts[l] + (j / (k + 1)) * (verts[(l + 1) % d] - verts[l])[None, :]
        for l in range(d) for j in range(1, k + 1)
    ]) if k > 0 else verts.copy()
    point_values = eval_monomials(k + 1, node_points, geom.centroid, h)

    return ElementWorkspace(
        geom=geom, dims=dims, moments=table, mass_full=mass_full, mass=mass,
        stiffness=stiffness, grad_moments=grad_moments, rot_basis=rot_basis,
        laplace_moments=laplace_moments, gradient_coefficients=gradient_coefficients,
        edges=edges, node_points=node_points, point_values=point_values,
        element_id=element_id, _mass_chol=mass_chol, _stiff_chol=stiff_chol,
    )


# -- projections ----------------------------------------------------------------

def build_div_matrix(ws: ElementWorkspace) -> np.ndarray:
    """Monomial coefficients of the divergence of each stress basis function (one row)."""
    dims = ws.dims
    m = dims.m
    rhs = np.zeros((m, dims.n_H))
    for l, ed in enumerate(ws.edges):
        rhs[:, l * (dims.k + 1):(l + 1) * (dims.k + 1)] = ed.flux_map[:m]
    off = dims.n_edge_H
    rhs[1:, off:off + m - 1] = -np.eye(m - 1)
    return ws.solve_mass(rhs)


def build_Pb(ws: ElementWorkspace, div_matrix: np.ndarray | None = None):
    """L2 projection of the stress basis: ``(row_projection, tensor_projection)``.

    ``row_projection`` (``2m x n_H``) gives vector monomial coefficients for one
    tensor row; ``tensor_projection`` lifts it to both rows.
    """
    dims = ws.dims
    m, m1, m0, nH = dims.m, dims.m1, dims.m0, dims.n_H
    D = build_div_matrix(ws) if div_matrix is None else div_matrix
    Z = ws.gradient_coefficients
    rhs = -Z @ ws.mass_full[1:, :m] @ D
    boundary = np.zeros((m1 - 1, nH))
    for l, ed in enumerate(ws.edges):
        boundary[:, l * (dims.k + 1):(l + 1) * (dims.k + 1)] = ed.flux_map[1:]
    rhs += Z @ boundary
    if m0 > 0:
        Ao = ws.rot_basis
        mass2 = np.kron(np.eye(2), ws.mass)
        gram = Ao.T @ mass2 @ Ao
        try:
            rot = np.linalg.solve(gram.T, ((mass2 - Z @ ws.grad_moments) @ Ao).T).T
        except np.linalg.LinAlgError as exc:
            raise ElementConstructionError(
                f"rot-moment Gram matrix is singular on element {ws.element_id}") from exc
        rhs[:, nH - m0:] += rot
    row = np.vstack([ws.solve_mass(rhs[:m]), ws.solve_mass(rhs[m:])])
    return row, np.kron(np.eye(2), row)


def build_Rb(ws: ElementWorkspace):
    """Energy projection onto degree ``k+1``: ``(gradient_part, mean_row, full)``."""
    dims = ws.dims
    k, m0, nV = dims.k, dims.m0, dims.n_V
    rhs = np.zeros((dims.m1 - 1, nV))
    if m0 > 0:
        low_mass = ws.mass_full[:m0, :m0]
        rhs[:, nV - m0:] = -np.linalg.solve(low_mass, ws.laplace_moments.T).T
    for ed in ws.edges:
        rhs += ed.lagrange_flux @ ed.trace_gather
    grad_part = ws.solve_stiffness(rhs)
    if k == 0:
        total = sum(ed.length for ed in ws.edges)
        mean = np.zeros(nV)
        for ed in ws.edges:
            mean += ed.length * ed.lagrange_mean @ ed.trace_gather - ed.edge_cell[0, 1:] @ grad_part
        mean /= total
    else:
        mean = -ws.mass_full[0, 1:] @ grad_part
        mean[(k + 1) * dims.n_edges] += 1.0
        mean /= ws.geom.area
    return grad_part, mean, np.vstack([mean[None, :], grad_part])


def build_PU_PGU(ws: ElementWorkspace, Rb: np.ndarray):
    """L2 projections of the velocity basis and of its gradient."""
    dims = ws.dims
    m, m0, nV = dims.m, dims.m0, dims.n_V
    rhs = np.zeros((m, nV))
    rhs[:m0, nV - m0:] = np.eye(m0)
    rhs[m0:] = ws.mass_full[m0:m, :] @ Rb
    PU = ws.solve_mass(rhs)

    div_moments = np.zeros((2 * m, m))
    div_moments[1:m] = ws.grad_moments[:m - 1, :m]
    div_moments[m + 1:] = ws.grad_moments[:m - 1, m:]
    grad_rhs = -div_moments @ PU
    for ed in ws.edges:
        grad_rhs += np.kron(ed.normal[:, None], ed.cell_lagrange @ ed.trace_gather)
    row = np.vstack([ws.solve_mass(grad_rhs[:m]), ws.solve_mass(grad_rhs[m:])])
    return PU, np.kron(np.eye(2), row)


def build_stress_stabilization(ws: ElementWorkspace, row_projection: np.ndarray) -> np.ndarray:
    """DOF residual of the stress basis minus its projection (edge moments only)."""
    dims = ws.dims
    k1 = dims.k + 1
    out = np.zeros((dims.n_H, dims.n_H))
    for l, ed in enumerate(ws.edges):
        rows = slice(l * k1, (l + 1) * k1)
        out[rows, rows] = ed.sign * np.eye(k1)
        out[rows] -= np.kron(ed.normal[None, :], ed.edge_cell[:, :dims.m]) @ row_projection
    return out


def build_velocity_stabilization(ws: ElementWorkspace, Rb: np.ndarray) -> np.ndarray:
    dims = ws.dims
    dofs_of_monomials = np.vstack([ws.point_values, ws.mass_full[:dims.m0, :]])
    return np.eye(dims.n_V) - dofs_of_monomials @ Rb


@dataclass
class ProjectorSet:
    div: np.ndarray
    stress_row: np.ndarray
    stress: np.ndarray
    energy_grad: np.ndarray
    energy_mean: np.ndarray
    energy: np.ndarray
    velocity: np.ndarray
    velocity_grad: np.ndarray
    stress_stab: np.ndarray
    velocity_stab: np.ndarray


def build_projectors(ws: ElementWorkspace) -> ProjectorSet:
    D = build_div_matrix(ws)
    row, full = build_Pb(ws, D)
    grad_part, mean, Rb = build_Rb(ws)
    PU, PGU = build_PU_PGU(ws, Rb)
    return ProjectorSet(
        div=D, stress_row=row, stress=full,
        energy_grad=grad_part, energy_mean=mean, energy=Rb,
        velocity=PU, velocity_grad=PGU,
        stress_stab=build_stress_stabilization(ws, row),
        velocity_stab=build_velocity_stabilization(ws, Rb),
    )


# -- degrees of freedom of analytic fields ----------------------------------------

def _default_order(ws: ElementWorkspace) -> int:
    return 2 * ws.dims.k + 6


def dofs_H_row(ws: ElementWorkspace, field, order: int | None = None) -> np.ndarray:
    """DOFs of a vector field ``field(points) -> (n, 2)`` in one stress row."""
    dims = ws.dims
    order = _default_order(ws) if order is None else order
    out = np.zeros(dims.n_H)
    n_edge_pts = max(dims.k + 3, -(-(order + 1) // 2))
    t, w = gauss_legendre_01(n_edge_pts)
    k1 = dims.k + 1
    for l, ed in enumerate(ws.edges):
        pts = ed.start + t[:, None] * (ed.end - ed.start)
        flux = np.asarray(field(pts)) @ (ed.sign * ed.normal)
        out[l * k1:(l + 1) * k1] = ed.length * (edge_monomials(dims.k, t).T * w) @ flux
    pts, wq = ws.quadrature(order)
    vals = np.asarray(field(pts))
    grads = ws.monomial_gradients(pts)[:, 1:, :]
    off = dims.n_edge_H
    out[off:off + dims.m - 1] = np.einsum("q,qc,qic->i", wq, vals, grads)
    if dims.m0:
        phi = ws.monomials(pts)
        vec_basis = np.hstack([vals[:, :1] * phi, vals[:, 1:] * phi])
        out[dims.n_H - dims.m0:] = (wq @ vec_basis) @ ws.rot_basis
    return out


def dofs_H(ws: ElementWorkspace, tensor, order: int | None = None) -> np.ndarray:
    """DOFs of a tensor field ``tensor(points) -> (n, 2, 2)``, rows stacked."""
    rows = [dofs_H_row(ws, (lambda p, r=r: np.asarray(tensor(p))[:, r, :]), order) for r in range(2)]
    return np.concatenate(rows)


def dofs_V_scalar(ws: ElementWorkspace, fn, order: int | None = None) -> np.ndarray:
    dims = ws.dims
    order = _default_order(ws) if order is None else order
    vals = np.asarray(fn(ws.node_points), dtype=float)
    if dims.m0 == 0:
        return vals
    pts, wq = ws.quadrature(order)
    mom = (wq * np.asarray(fn(pts), dtype=float)) @ ws.monomials(pts, dims.k - 1)
    return np.concatenate([vals, mom])


def dofs_V(ws: ElementWorkspace, field, order: int | None = None) -> np.ndarray:
    """DOFs of ``field(points)``: scalar output gives ``n_V`` entries, vector output ``2 n_V``."""
    probe = np.asarray(field(ws.geom.centroid[None, :]))
    if probe.ndim == 1:
        return dofs_V_scalar(ws, field, order)
    return np.concatenate([dofs_V_scalar(ws, (lambda p, c=c: np.asarray(field(p))[:, c]), order)
                           for c in range(2)])
