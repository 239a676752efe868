from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyvem.mesh import polygon_geometry
from polyvem.projectors import (
    SpaceDims,
    build_projectors,
    build_workspace,
    dofs_H_row,
    dofs_V,
)
from polyvem.verification import projector_residuals, random_element, random_polygon


@pytest.mark.parametrize("k,d,n_H,n_V", [
    (0, 3, 3, 3),     # lowest order on a triangle: one flux per edge, vertex values
    (1, 3, 9, 7),
    (1, 4, 11, 9),
    (2, 6, 26, 21),
])
def test_local_dimensions(k, d, n_H, n_V):
    dims = SpaceDims(k, d)
    assert (dims.n_H, dims.n_V) == (n_H, n_V)
    assert dims.m == (k + 1) * (k + 2) // 2
    assert dims.m0 == k * (k + 1) // 2


elements = st.tuples(st.integers(0, 3), st.integers(0, 10_000), st.integers(3, 9))


@given(elements)
def test_polynomial_consistency(case):
    k, seed, d = case
    rng = np.random.default_rng(seed)
    ws, ps = random_element(rng, k, d)
    res = projector_residuals(ws, ps, rng, n_polys=3)
    for name, tol in (("Pb", 1e-9), ("Rb", 1e-9), ("PU", 1e-9), ("PGU", 1e-9),
                      ("Ha", 1e-9), ("Hd", 1e-9)):
        assert res[name] <= tol, name


@given(elements)
def test_rot_basis_is_orthonormal_complement(case):
    k, seed, d = case
    rng = np.random.default_rng(seed)
    ws, _ = random_element(rng, k, d)
    Ao = ws.rot_basis
    assert Ao.shape == (2 * ws.dims.m, ws.dims.m0)
    np.testing.assert_allclose(Ao.T @ Ao, np.eye(ws.dims.m0), atol=1e-12)
    if ws.dims.m0:
        assert np.linalg.norm(ws.grad_moments @ Ao) <= 1e-11 * np.linalg.norm(ws.grad_moments)


@given(elements)
def test_divergence_matrix(case):
    k, seed, d = case
    rng = np.random.default_rng(seed)
    ws, ps = random_element(rng, k, d)
    m1 = ws.dims.m1
    c = rng.normal(size=(2, m1))
    # a degree k+1 vector field; its divergence has degree k
    def field(p):
        return np.column_stack([ws.monomials(p, k + 1) @ c[0], ws.monomials(p, k + 1) @ c[1]])
    pts, w = ws.quadrature(2 * k + 2)
    grads = ws.monomial_gradients(pts, k + 1)
    div = grads[:, :, 0] @ c[0] + grads[:, :, 1] @ c[1]
    exact = ws.solve_mass((w[:, None] * ws.monomials(pts)).T @ div)
    got = ps.div @ dofs_H_row(ws, field)
    np.testing.assert_allclose(got, exact, atol=1e-9 * max(1.0, np.abs(exact).max()))


@given(elements)
def test_stabilizations_are_psd(case):
    k, seed, d = case
    rng = np.random.default_rng(seed)
    _, ps = random_element(rng, k, d)
    for H in (ps.stress_stab, ps.velocity_stab):
        eig = np.linalg.eigvalsh(H.T @ H)
        assert eig.min() >= -1e-12 * max(eig.max(), 1.0)


def test_edge_moments_follow_global_orientation(rng):
    verts = random_polygon(rng, 5)
    k = 1
    plus = build_workspace(polygon_geometry(verts, np.ones(5)), k)
    signs = np.array([1.0, -1.0, 1.0, -1.0, -1.0])
    mixed = build_workspace(polygon_geometry(verts, signs), k)

    def field(p):
        return np.column_stack([1 + p[:, 0] * p[:, 1], np.sin(p[:, 0])])

    a, b = dofs_H_row(plus, field), dofs_H_row(mixed, field)
    for l, s in enumerate(signs):
        block = slice(2 * l, 2 * l + 2)
        if s > 0:
            np.testing.assert_allclose(b[block], a[block], atol=1e-13)
        else:
            # reversed parameter and flipped normal: t -> 1-t maps (t-1/2)^q to (-1)^q (t-1/2)^q
            np.testing.assert_allclose(b[block], -a[block] * np.array([1.0, -1.0]), atol=1e-13)
    np.testing.assert_allclose(b[10:], a[10:], atol=1e-13)


def test_energy_projection_boundary_mean_k0(rng):
    # for k = 0 the constant of R is fixed by the boundary mean of the trace
    verts = random_polygon(rng, 6)
    ws = build_workspace(polygon_geometry(verts), 0)
    ps = build_projectors(ws)
    vals = rng.normal(size=6)
    coeffs = ps.energy @ vals
    perim = trace_int = poly_int = 0.0
    t, w = np.polynomial.legendre.leggauss(4)
    t, w = 0.5 * (t + 1), 0.5 * w
    for l in range(6):
        a, b = verts[l], verts[(l + 1) % 6]
        length = np.linalg.norm(b - a)
        perim += length
        trace_int += length * 0.5 * (vals[l] + vals[(l + 1) % 6])
        pts = a + t[:, None] * (b - a)
        poly_int += length * w @ (ws.monomials(pts, 1) @ coeffs)
    assert poly_int == pytest.approx(trace_int, rel=1e-12)


def test_dofs_V_of_constant(rng):
    verts = random_polygon(rng, 4)
    ws = build_workspace(polygon_geometry(verts), 2)
    d = dofs_V(ws, lambda p: np.ones(len(p)))
    n_pts = ws.dims.n_V - ws.dims.m0
    np.testing.assert_allclose(d[:n_pts], 1.0)
    # moments against scaled monomials of degree <= 1
    np.testing.assert_allclose(d[n_pts:], ws.mass_full[0, :ws.dims.m0], rtol=1e-12, atol=1e-15)
