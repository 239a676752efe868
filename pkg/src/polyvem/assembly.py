"""Global numbering, sparse assembly of the Newton systems and the Newton loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .local_operators import LocalOperators, ProblemParams, build_local_operators
from .mesh import PolygonalMesh, element_geometry
from .nonlinear import build_convection, build_weighted_mass, velocity_coefficients
from .projectors import (
    ElementConstructionError,
    ElementWorkspace,
    ProjectorSet,
    SpaceDims,
    build_projectors,
    build_workspace,
    triple_product_tensor,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NewtonDivergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def global_dof_count(k: int, n_nodes: int, n_edges: int, n_elements: int) -> int:
    m = (k + 1) * (k + 2) // 2
    m0 = k * (k + 1) // 2
    return (2 * (k + 1) * n_edges + 2 * (m - 1 + m0) * n_elements + 2 * n_nodes
            + 2 * k * n_edges + 2 * m0 * n_elements + 1)


@dataclass
class DofMap:
    """Global indices (0-based) of the local stress and velocity DOFs of every element.

    The last global index ``n_dofs - 1`` is the trace multiplier.
    """

    k: int
    n_dofs: int
    stress: list[np.ndarray]
    velocity: list[np.ndarray]
    velocity_offset: int

    @property
    def multiplier(self) -> int:
        return self.n_dofs - 1

    def element_indices(self, K: int) -> np.ndarray:
        return np.concatenate([self.stress[K], self.velocity[K], [self.multiplier]])


def build_dof_map(mesh: PolygonalMesh, k: int) -> DofMap:
    m = (k + 1) * (k + 2) // 2
    m0 = k * (k + 1) // 2
    mH = m - 1 + m0
    mV = m0
    nE, nN, nK = mesh.n_edges, mesh.n_nodes, mesh.n_elements
    w0 = nE * 2 * (k + 1) + nK * 2 * mH
    edge_v0 = w0 + 2 * nN
    cell_v0 = edge_v0 + 2 * k * nE
    stress, velocity = [], []
    r_k1 = np.arange(k + 1)
    r_k = np.arange(k)
    for K in range(nK):
        edges = mesh.element_edges[K]
        nodes = mesh.elements[K]
        orient = mesh.element_orientation[K]
        wH = (edges[:, None] * 2 * (k + 1) + r_k1[None, :])
        cH = nE * 2 * (k + 1) + K * 2 * mH + np.arange(mH)
        pH = np.concatenate([wH.ravel(), cH])
        qH = np.concatenate([(wH + k + 1).ravel(), cH + mH])
        w = edge_v0 + edges[:, None] * 2 * k
        local = np.where(orient[:, None], r_k[None, :], k - 1 - r_k[None, :])
        cV = cell_v0 + K * 2 * mV + np.arange(mV)
        pV = np.concatenate([w0 + 2 * nodes, (w + local).ravel(), cV])
        qV = np.concatenate([w0 + 2 * nodes + 1, (w + k + local).ravel(), cV + mV])
        stress.append(np.concatenate([pH, qH]).astype(np.int64))
        velocity.append(np.concatenate([pV, qV]).astype(np.int64))
    n_dofs = global_dof_count(k, nN, nE, nK)
    return DofMap(k, n_dofs, stress, velocity, w0)


@dataclass
class ElementData:
    ws: ElementWorkspace
    ps: ProjectorSet
    ops: LocalOperators
    triple: np.ndarray


def local_constant_matrix(ops: LocalOperators, params: ProblemParams) -> np.ndarray:
    """Iterate-independent part of the local Newton/residual matrix."""
    nH2 = ops.A_dev.shape[0]
    nV2 = ops.D_gra.shape[0]
    n = nH2 + nV2 + 1
    out = np.zeros((n, n))
    H = slice(0, nH2)
    V = slice(nH2, nH2 + nV2)
    out[H, H] = ops.A_dev + ops.A_sta + params.kappa1 * ops.A_div
    out[H, V] = params.mu * ops.B
    out[H, -1] = ops.a_tra
    out[V, H] = -params.mu * ops.B.T - params.kappa2 * ops.C
    out[V, V] = (params.kappa2 * params.mu * ops.D_gra + ops.D_sta
                 + params.kappa3 * ops.D_bou)
    out[-1, H] = ops.a_tra
    return out


def local_load(ops: LocalOperators, params: ProblemParams) -> np.ndarray:
    return np.concatenate([params.mu * ops.b1 - params.kappa1 * ops.b2,
                           params.kappa3 * ops.b3 + params.mu * ops.b4, [0.0]])


def _scatter(blocks, index_sets, n):
    rows, cols, vals = [], [], []
    for B, (ri, ci) in zip(blocks, index_sets):
        rows.append(np.repeat(ri, len(ci)))
        cols.append(np.tile(ci, len(ri)))
        vals.append(np.asarray(B).ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


@dataclass
class GlobalSystem:
    newton_matrix: sp.csr_matrix
    residual_matrix: sp.csr_matrix
    rhs: np.ndarray


class Discretization:
    """Mesh, degree and problem data with all iterate-independent element data cached."""

    def __init__(self, mesh: PolygonalMesh, k: int, params: ProblemParams,
                 data_order: int | None = None):
        self.mesh = mesh
        self.k = k
        self.params = params
        self.dofmap = build_dof_map(mesh, k)
        self.elements: list[ElementData] = []
        n = self.dofmap.n_dofs
        const_blocks, const_index = [], []
        rhs = np.zeros(n)
        for K in range(mesh.n_elements):
            try:
                ws = build_workspace(element_geometry(mesh, K), k, element_id=K)
                ps = build_projectors(ws)
                ops = build_local_operators(ps, ws, params, data_order)
            except (ElementConstructionError, np.linalg.LinAlgError) as exc:
                raise ElementConstructionError(f"element {K}: {exc}") from exc
            self.elements.append(ElementData(ws, ps, ops, triple_product_tensor(ws)))
            idx = self.dofmap.element_indices(K)
            const_blocks.append(local_constant_matrix(ops, params))
            const_index.append((idx, idx))
            np.add.at(rhs, idx, local_load(ops, params))
        self.constant_matrix = _scatter(const_blocks, const_index, n)
        # keep the multiplier diagonal in the pattern
        self.constant_matrix = (self.constant_matrix
                                + sp.csr_matrix(([0.0], ([n - 1], [n - 1])), shape=(n, n)))
        self.rhs = rhs

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def split(self, x: np.ndarray, K: int):
        """Local stress and velocity DOFs of element ``K``."""
        return x[self.dofmap.stress[K]], x[self.dofmap.velocity[K]]

    def convection(self, x: np.ndarray):
        """Sparse ``(G, DG)`` matrices of the convection term at iterate ``x``."""
        n = self.n_dofs
        g_blocks, dg_blocks, index = [], [], []
        for K, el in enumerate(self.elements):
            beta = x[self.dofmap.velocity[K]]
            if not np.any(beta):
                continue
            gamma = velocity_coefficients(el.ps, beta)
            Mz = build_weighted_mass(el.ws, gamma, el.triple)
            cb = build_convection(el.ps, el.ws, Mz, self.params.kappa2)
            uH = self.dofmap.stress[K]
            uV = self.dofmap.velocity[K]
            g_blocks += [cb.G1, cb.G2]
            dg_blocks += [cb.DG1, cb.DG2]
            index += [(uH, uV), (uV, uV)]
        return _scatter(g_blocks, index, n), _scatter(dg_blocks, index, n)

    def assemble(self, x: np.ndarray | None = None) -> GlobalSystem:
        if x is None or not np.any(x):
            A = self.constant_matrix.copy()
            return GlobalSystem(A, A.copy(), self.rhs.copy())
        G, DG = self.convection(x)
        return GlobalSystem(self.constant_matrix + DG, self.constant_matrix + G, self.rhs.copy())


def assemble(mesh: PolygonalMesh, dofmap: DofMap, params: ProblemParams, iterate=None,
             discretization: Discretization | None = None) -> GlobalSystem:
    disc = discretization or Discretization(mesh, dofmap.k, params)
    return disc.assemble(iterate)


# (ordering, pivot threshold) pairs tried in turn.  Ordering on the symmetrized
# pattern with diagonal pivoting keeps fill low on these structurally symmetric
# matrices; the backward-error check sends a bad factorization to the next one.
LU_STRATEGIES = (("MMD_AT_PLUS_A", 0.0), ("MMD_AT_PLUS_A", 0.1), ("COLAMD", 1.0))


def solve_linear(matrix, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve with a backward-error check.

    Raises :class:`SolverError` when every ordering fails the check
    ``|Ax - b| <= rtol (|A| |x| + |b|)``.
    """
    A = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    norm_A = spla.norm(A)
    messages = []
    for ordering, threshold in LU_STRATEGIES:
        try:
            lu = spla.splu(A, permc_spec=ordering, diag_pivot_thresh=threshold)
            x = lu.solve(b)
        except RuntimeError as exc:
            messages.append(f"{ordering}: {exc}")
            continue
        if not np.all(np.isfinite(x)):
            messages.append(f"{ordering}: non-finite solution")
            continue
        resid = np.linalg.norm(A @ x - b)
        scale = norm_A * np.linalg.norm(x) + np.linalg.norm(b)
        if resid <= rtol * scale:
            return x
        diag = np.abs(lu.U.diagonal())
        ratio = diag.max() / max(diag.min(), np.finfo(float).tiny)
        messages.append(f"{ordering}: residual {resid:.3e} exceeds {rtol:.0e} x {scale:.3e}, "
                        f"pivot ratio {ratio:.3e}")
    raise SolverError("linear solve failed (singular or ill-conditioned matrix): "
                      + "; ".join(messages))


@dataclass
class NewtonState:
    """Converged (or last) iterate and the iteration history."""

    x: np.ndarray
    dofmap: DofMap
    iterations: int
    increment_norms: list[float] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def stress(self) -> np.ndarray:
        return self.x[: self.dofmap.velocity_offset]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[self.dofmap.velocity_offset: self.dofmap.n_dofs - 1]

    @property
    def multiplier(self) -> float:
        return float(self.x[-1])

    @property
    def increment_norm(self) -> float:
        return self.increment_norms[-1] if self.increment_norms else float("nan")

    @property
    def residual_norm(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else float("nan")


def newton_solve(disc: Discretization, tol: float = 1e-6, maxit: int = 20,
                 initial: np.ndarray | None = None) -> NewtonState:
    """Newton iteration started from the linear Stokes solution.

    Stops when the Euclidean norm of the full increment is at most ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if initial is None:
        stokes = disc.assemble(None)
        x = solve_linear(stokes.newton_matrix, stokes.rhs)
    else:
        x = np.array(initial, dtype=float)
    state = NewtonState(x=x, dofmap=disc.dofmap, iterations=0)
    for it in range(1, maxit + 1):
        system = disc.assemble(x)
        residual = system.rhs - system.residual_matrix @ x
        state.residual_norms.append(float(np.linalg.norm(residual)))
        step = solve_linear(system.newton_matrix, residual)
        x = x + step
        state.x = x
        state.iterations = it
        state.increment_norms.append(float(np.linalg.norm(step)))
        log.debug("newton %d: |dx| = %.3e, |r| = %.3e", it, state.increment_norms[-1],
                  state.residual_norms[-1])
        if state.increment_norms[-1] <= tol:
            state.converged = True
            return state
    raise NewtonDivergence(
        f"Newton did not converge in {maxit} iterations "
        f"(last increment {state.increment_norm:.3e})", state)
