from __future__ import annotations

import math
import os

import numpy as np
import pytest
import sympy as sym
from hypothesis import given
from hypothesis import strategies as st

from polyvem import Discretization, generate_mesh
from polyvem.postprocess import (
    CSV_COLUMNS,
    FAILURE_MARKER,
    KOVASZNAY_DOMAIN,
    StudyConfig,
    compute_errors,
    convergence_rate,
    export_fields,
    kovasznay_data,
    kovasznay_lambda,
    poly_product,
    postprocess,
    run_convergence_study,
)
from polyvem.quadrature import monomial_exponents


def test_lambda_value():
    # 5 - sqrt(25 + 4 pi^2) for Re = 10
    assert kovasznay_lambda(0.1) == pytest.approx(-3.0298454284224814, rel=1e-14)


def test_velocity_is_divergence_free(kovasznay, rng):
    pts = rng.uniform([-0.5, 0.0], [1.5, 2.0], size=(50, 2))
    g = kovasznay.velocity_gradient(pts)
    np.testing.assert_allclose(g[:, 0, 0] + g[:, 1, 1], 0.0, atol=1e-12)


def test_pressure_has_zero_mean(kovasznay):
    assert abs(kovasznay.integrate(kovasznay.pressure)) <= 1e-12


def test_source_satisfies_momentum_equation(rng):
    # symbolic oracle for -mu lap u + (grad u) u + grad p
    x, y = sym.symbols("x y")
    mu = sym.Rational(1, 10)
    lam = 1 / (2 * mu) - sym.sqrt(1 / (4 * mu**2) + 4 * sym.pi**2)
    u = sym.Matrix([1 - sym.exp(lam * x) * sym.cos(2 * sym.pi * y),
                    lam / (2 * sym.pi) * sym.exp(lam * x) * sym.sin(2 * sym.pi * y)])
    p = sym.exp(2 * lam * x) / 2
    grad = u.jacobian([x, y])
    f = -mu * sym.Matrix([sym.diff(c, x, 2) + sym.diff(c, y, 2) for c in u]) + grad * u \
        + sym.Matrix([sym.diff(p, x), sym.diff(p, y)])
    f_num = sym.lambdify((x, y), f, "numpy")
    g_num = sym.lambdify((x, y), grad, "numpy")
    exact = kovasznay_data(0.1)
    pts = rng.uniform([-0.5, 0.0], [1.5, 2.0], size=(20, 2))
    for pt in pts:
        np.testing.assert_allclose(exact.force(pt[None])[0],
                                   np.asarray(f_num(*pt), float).ravel(), rtol=1e-11, atol=1e-11)
        np.testing.assert_allclose(exact.velocity_gradient(pt[None])[0],
                                   np.asarray(g_num(*pt), float), rtol=1e-12, atol=1e-12)


def test_pseudostress_trace_has_zero_mean(kovasznay):
    tr = kovasznay.integrate(lambda p: np.einsum("qii->q", kovasznay.pseudostress(p)))
    assert abs(tr) <= 1e-10


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 1000))
def test_poly_product(d1, d2, seed):
    rng = np.random.default_rng(seed)
    e1, e2 = monomial_exponents(d1), monomial_exponents(d2)
    c1, c2 = rng.normal(size=len(e1)), rng.normal(size=len(e2))
    prod = poly_product(c1, d1, c2, d2)
    e = monomial_exponents(d1 + d2)
    pts = rng.uniform(-1, 1, size=(7, 2))

    def ev(c, ex):
        return np.array([np.sum(c * pt[0] ** ex[:, 0] * pt[1] ** ex[:, 1]) for pt in pts])
    np.testing.assert_allclose(ev(prod, e), ev(c1, e1) * ev(c2, e2), atol=1e-12)


@pytest.fixture(scope="module")
def coarse_solution(kovasznay):
    mesh = generate_mesh("distorted-quads", KOVASZNAY_DOMAIN, 0.4, seed=0)
    disc = Discretization(mesh, 1, kovasznay.params())
    from polyvem import newton_solve
    state = newton_solve(disc)
    return disc, state, postprocess(disc, state.x)


def test_zero_state_gives_zero_fields(coarse_solution, kovasznay):
    disc, state, _ = coarse_solution
    sol = postprocess(disc, np.zeros_like(state.x))
    assert all(np.all(c == 0) for c in sol.stress + sol.velocity + sol.pressure)
    row = compute_errors(sol, kovasznay)
    norm_u = math.sqrt(kovasznay.integrate(lambda p: np.sum(kovasznay.velocity(p) ** 2, axis=1)))
    assert row.errors["u"] == pytest.approx(norm_u, rel=1e-8)


def test_pressure_matches_trace_formula(coarse_solution, rng):
    _, _, sol = coarse_solution
    for K in (0, 7, len(sol.stress) - 1):
        pts = sol.disc.elements[K].ws.quadrature(4)[0]
        np.testing.assert_allclose(sol.eval_pressure(K, pts), sol.pressure_from_trace(K, pts),
                                   atol=1e-12)


def test_discrete_trace_constraint(coarse_solution):
    _, _, sol = coarse_solution
    total = 0.0
    for K, el in enumerate(sol.disc.elements):
        pts, w = el.ws.quadrature(2)
        s = sol.eval_stress(K, pts)
        total += w @ (s[:, 0, 0] + s[:, 1, 1])
    assert abs(total) <= 1e-9


def test_convergence_rate():
    assert convergence_rate(4.0, 1.0, 0.2, 0.1) == pytest.approx(2.0)


def test_two_level_study_csv(tmp_path):
    out = tmp_path / "r.csv"
    cfg = StudyConfig(kind="triangles", degrees=(0,), levels=2, h0=0.25, out=str(out))
    report = run_convergence_study(cfg)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    first, second = lines[1].split(","), lines[2].split(",")
    assert all(first[i] == "" for i in (4, 6, 8, 10))
    assert all(second[i] != "" for i in (4, 6, 8, 10))
    assert first[3].count("e") == 1 and len(first[3].split("e")[0]) == 4
    assert not report.failed
    assert report.to_csv() == out.read_text()


def test_failed_level_is_marked(monkeypatch):
    import sys
    pp = sys.modules["polyvem.postprocess"]

    def boom(*a, **kw):
        raise pp.NewtonDivergence("no", None)
    monkeypatch.setattr(pp, "newton_solve", boom)
    report = run_convergence_study(StudyConfig(degrees=(0,), levels=2, h0=0.5))
    assert report.failed
    text = report.to_csv()
    assert text.count(FAILURE_MARKER) == 8


def test_field_export(coarse_solution, tmp_path):
    _, _, sol = coarse_solution
    paths = export_fields(sol, str(tmp_path), "t")
    assert sorted(os.path.basename(p) for p in paths) == ["t_p.txt", "t_sigma.txt", "t_u.txt"]
    lines = (tmp_path / "t_p.txt").read_text().splitlines()
    assert len(lines) == len(sol.pressure)
    K, deg, *coeffs = lines[3].split()
    assert int(K) == 3 and int(deg) == 2
    np.testing.assert_array_equal(np.array(coeffs, float), sol.pressure[3])


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(levels=0)
    with pytest.raises(ValueError):
        StudyConfig(h0=-1)
    with pytest.raises(ValueError):
        StudyConfig(degrees=(-1,))
    with pytest.raises(ValueError):
        StudyConfig(refinement=1.0)
