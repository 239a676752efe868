"""Local matrices and load vectors of the augmented pseudostress-velocity scheme."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .projectors import ElementWorkspace, ProjectorSet
from .quadrature import edge_monomials, gauss_legendre_01

VectorField = Callable[[np.ndarray], np.ndarray]

# Frobenius product of deviatoric parts in the (11, 12, 21, 22) entry ordering.
M_DEV = np.array([
    [0.5, 0.0, 0.0, -0.5],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [-0.5, 0.0, 0.0, 0.5],
])
M_TRACE = np.array([
    [1.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 1.0],
])
TRACE_PATTERN = np.array([1.0, 0.0, 0.0, 1.0])


def _zero_field(points):
    return np.zeros((len(points), 2))


@dataclass
class ProblemParams:
    """Viscosity, augmentation weights and data of the Dirichlet problem.

    ``force`` and ``dirichlet`` map an ``(n, 2)`` array of points to ``(n, 2)`` values.
    """

    mu: float = 0.1
    kappa1: float = 0.1
    kappa2: float = 0.1
    kappa3: float = 0.1
    force: VectorField = _zero_field
    dirichlet: VectorField = _zero_field
    check: bool = True

    def __post_init__(self):
        if not self.check:
            return
        if not self.mu > 0:
            raise ValueError("viscosity must be positive")
        if not (self.kappa1 > 0 and self.kappa3 > 0 and 0 < self.kappa2 < 2 * self.mu):
            raise ValueError("augmentation weights need kappa1, kappa3 > 0 and 0 < kappa2 < 2 mu")


@dataclass
class LocalOperators:
    A_dev: np.ndarray
    A_tr: np.ndarray
    A_div: np.ndarray
    A_sta: np.ndarray
    a_tra: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D_gra: np.ndarray
    D_sta: np.ndarray
    D_bou: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray


def build_H_operators(ps: ProjectorSet, ws: ElementWorkspace):
    P = ps.stress
    mass = ws.mass
    A_dev = P.T @ np.kron(M_DEV, mass) @ P
    A_tr = P.T @ np.kron(M_TRACE, mass) @ P
    A_div = np.kron(np.eye(2), ps.div.T @ mass @ ps.div)
    A_sta = np.kron(np.eye(2), ps.stress_stab.T @ ps.stress_stab)
    a_tra = P.T @ np.kron(TRACE_PATTERN, mass[:, 0])
    return A_dev, A_tr, A_div, A_sta, a_tra


def build_V_operators(ps: ProjectorSet, ws: ElementWorkspace):
    D_gra = np.kron(np.eye(2), ps.energy_grad.T @ ws.stiffness @ ps.energy_grad)
    D_sta = np.kron(np.eye(2), ps.velocity_stab.T @ ps.velocity_stab)
    n_V = ws.dims.n_V
    bou = np.zeros((n_V, n_V))
    for ed in ws.edges:
        if ed.boundary:
            bou += ed.length * ed.trace_gather.T @ ed.lagrange_mass @ ed.trace_gather
    return D_gra, D_sta, np.kron(np.eye(2), bou)


def build_coupling(ps: ProjectorSet, ws: ElementWorkspace):
    B = np.kron(np.eye(2), ps.div.T @ ws.mass @ ps.velocity)
    C = ps.velocity_grad.T @ np.kron(M_DEV, ws.mass) @ ps.stress
    return B, C


def edge_data_projection(ws: ElementWorkspace, ed, fn: VectorField, order: int | None = None):
    """Coefficients of the L2(e) projection of ``fn`` onto the edge monomials, ``(k+1, 2)``."""
    k = ws.dims.k
    order = 2 * k + 3 if order is None else order
    t, w = gauss_legendre_01(max(k + 3, -(-(order + 1) // 2)))
    pts = ed.start + t[:, None] * (ed.end - ed.start)
    moments = ed.length * (edge_monomials(k, t).T * w) @ np.asarray(fn(pts), dtype=float)
    return ed.edge_mass_inv @ moments


def force_moments(ws: ElementWorkspace, fn: VectorField, order: int | None = None):
    """``[integral of phi_i f_l]``, shape ``(m, 2)``."""
    order = 2 * ws.dims.k + 2 if order is None else order
    pts, w = ws.quadrature(order)
    return (ws.monomials(pts).T * w) @ np.asarray(fn(pts), dtype=float)


def build_rhs(ps: ProjectorSet, ws: ElementWorkspace, params: ProblemParams,
              data_order: int | None = None):
    dims = ws.dims
    k1 = dims.k + 1
    b1 = np.zeros((dims.n_H, 2))
    b3 = np.zeros((dims.n_V, 2))
    for l, ed in enumerate(ws.edges):
        if not ed.boundary:
            continue
        pg = edge_data_projection(ws, ed, params.dirichlet, data_order)
        b1[l * k1:(l + 1) * k1] = ed.sign * pg
        b3 += ed.trace_gather.T @ ed.lagrange_to_edge @ pg
    fm = force_moments(ws, params.force, data_order)
    b2 = ps.div.T @ fm
    b4 = ps.velocity.T @ fm
    return (b1.T.ravel(), b2.T.ravel(), b3.T.ravel(), b4.T.ravel())


def build_local_operators(ps: ProjectorSet, ws: ElementWorkspace, params: ProblemParams,
                          data_order: int | None = None) -> LocalOperators:
    A_dev, A_tr, A_div, A_sta, a_tra = build_H_operators(ps, ws)
    D_gra, D_sta, D_bou = build_V_operators(ps, ws)
    B, C = build_coupling(ps, ws)
    b1, b2, b3, b4 = build_rhs(ps, ws, params, data_order)
    return LocalOperators(A_dev, A_tr, A_div, A_sta, a_tra, B, C, D_gra, D_sta, D_bou,
                          b1, b2, b3, b4)
