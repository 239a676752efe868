from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from polyvem import (
    Discretization,
    NewtonDivergence,
    PolygonalMesh,
    ProblemParams,
    SolverError,
    build_dof_map,
    generate_mesh,
    global_dof_count,
    newton_solve,
    solve_linear,
)
from polyvem.verification import independent_dof_count, patch_mesh, run_patch_test

UNIT = ((0.0, 1.0), (0.0, 1.0))
KINDS = ("triangles", "distorted-quads", "distorted-hexagons")


def test_single_square_has_17_unknowns():
    square = PolygonalMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    assert build_dof_map(square, 0).n_dofs == 17
    assert global_dof_count(0, 4, 4, 1) == 17


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("k", [0, 1, 2])
def test_dof_map_covers_every_index(kind, k):
    mesh = generate_mesh(kind, UNIT, 0.3, seed=2)
    dm = build_dof_map(mesh, k)
    assert dm.n_dofs == independent_dof_count(mesh, k)
    used = np.unique(np.concatenate(dm.stress + dm.velocity))
    np.testing.assert_array_equal(used, np.arange(dm.n_dofs - 1))
    for K in range(mesh.n_elements):
        idx = dm.element_indices(K)
        assert len(np.unique(idx)) == len(idx)
        assert idx[-1] == dm.multiplier


@pytest.mark.parametrize("k", [1, 2])
def test_shared_vertex_and_edge_unknowns(k):
    # neighbors must reference the same global index for the same physical point
    mesh = generate_mesh("distorted-quads", UNIT, 0.34, seed=5)
    disc = Discretization(mesh, k, ProblemParams())
    seen: dict = {}
    for K, el in enumerate(disc.elements):
        n_V = el.ws.dims.n_V
        n_pts = len(el.ws.node_points)
        glob = disc.dofmap.velocity[K]
        for j, pt in enumerate(el.ws.node_points):
            key = tuple(np.round(pt, 10))
            pair = (glob[j], glob[n_V + j])
            assert seen.setdefault(key, pair) == pair
        assert n_pts == len(mesh.elements[K]) * (k + 1)


def test_singular_matrix_raises():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverError):
        solve_linear(A, np.array([1.0, 0.0]))


def test_solve_linear_accuracy(rng):
    A = sp.random(60, 60, density=0.1, random_state=3) + 10 * sp.eye(60)
    x = rng.normal(size=60)
    np.testing.assert_allclose(solve_linear(A, A @ x), x, rtol=1e-10)


def test_zero_data_gives_zero_solution():
    mesh = generate_mesh("triangles", UNIT, 0.5)
    disc = Discretization(mesh, 1, ProblemParams())
    state = newton_solve(disc)
    assert np.abs(state.x).max() == 0.0
    assert state.converged and state.iterations == 1


def test_constant_matrix_is_mostly_symmetric_in_stress_block():
    mesh = generate_mesh("distorted-hexagons", UNIT, 0.4, seed=1)
    disc = Discretization(mesh, 1, ProblemParams())
    A = disc.constant_matrix.tocsr()
    nH = disc.dofmap.velocity_offset
    block = A[:nH, :nH]
    assert abs(block - block.T).max() <= 1e-12 * abs(block).max()
    # multiplier row couples to stress only
    last = A[-1].toarray().ravel()
    assert np.all(last[nH:] == 0.0)


@pytest.mark.parametrize("k", [1, 2])
def test_patch_problem_is_reproduced(k):
    rel, state, _ = run_patch_test(k)
    assert state.converged
    assert max(rel.values()) <= 1e-7


def test_patch_on_a_random_quad_mesh():
    mesh = generate_mesh("distorted-quads", UNIT, 0.5, seed=9)
    rel, _, _ = run_patch_test(2, mesh)
    assert max(rel.values()) <= 1e-7


def test_newton_divergence_carries_history():
    mesh = patch_mesh()
    from polyvem.verification import patch_solution
    disc = Discretization(mesh, 2, patch_solution(2).params())
    with pytest.raises(NewtonDivergence) as info:
        newton_solve(disc, tol=1e-300, maxit=2)
    assert info.value.history.iterations == 2
    assert len(info.value.history.increment_norms) == 2


def test_newton_rejects_bad_tolerance():
    disc = Discretization(patch_mesh(), 1, ProblemParams())
    with pytest.raises(ValueError):
        newton_solve(disc, tol=0.0)


@settings(max_examples=10)
@given(st.integers(0, 2), st.integers(3, 40), st.integers(3, 40), st.integers(1, 20))
def test_global_count_formula_is_linear(k, V, E, K):
    base = global_dof_count(k, V, E, K)
    assert global_dof_count(k, V + 1, E, K) - base == 2
    assert global_dof_count(k, V, E + 1, K) - base == 2 * (k + 1) + 2 * k
    m = (k + 1) * (k + 2) // 2
    m0 = k * (k + 1) // 2
    assert global_dof_count(k, V, E, K + 1) - base == 2 * (m - 1 + m0) + 2 * m0
