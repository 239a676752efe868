"""Scaled monomials, Lagrange edge bases and quadrature on polygons and segments.

Monomials on an element are indexed hierarchically: the pair of exponents
``(alpha, beta)`` maps to ``i = (alpha+beta+1)(alpha+beta+2)/2 - beta`` (1-based),
so within each total degree the pure ``y`` power comes first and the pure
``x`` power last.  Internally arrays use the 0-based position ``i - 1``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import ElementGeometry


def dim_poly(degree: int) -> int:
    """Dimension of the bivariate polynomials of total degree <= ``degree``."""
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


def monomial_index(alpha: int, beta: int) -> int:
    if alpha < 0 or beta < 0:
        raise ValueError("exponents must be non-negative")
    n = alpha + beta
    return (n + 1) * (n + 2) // 2 - beta


@lru_cache(maxsize=None)
def _exponent_table(degree: int) -> np.ndarray:
    table = np.zeros((dim_poly(degree), 2), dtype=np.int64)
    for n in range(degree + 1):
        for beta in range(n + 1):
            table[monomial_index(n - beta, beta) - 1] = (n - beta, beta)
    table.setflags(write=False)
    return table


def monomial_exponents(degree: int) -> np.ndarray:
    """``(dim_poly(degree), 2)`` array of exponents in hierarchical order."""
    return _exponent_table(degree)


def monomial_exponent(i: int) -> tuple[int, int]:
    """Inverse of :func:`monomial_index`."""
    if i < 1:
        raise IndexError(f"monomial index {i} out of range")
    n = 0
    while dim_poly(n) < i:
        n += 1
    beta = dim_poly(n) - i
    return n - beta, beta


def _powers(values: np.ndarray, degree: int) -> np.ndarray:
    """Running products ``values**0 .. values**degree`` stacked on the last axis."""
    out = np.empty(values.shape + (degree + 1,))
    out[..., 0] = 1.0
    for p in range(1, degree + 1):
        out[..., p] = out[..., p - 1] * values
    return out


def scaled_coordinates(points, centroid, diameter):
    pts = np.asarray(points, dtype=float)
    return (pts - np.asarray(centroid)) / diameter


def eval_monomials(degree: int, points, centroid, diameter) -> np.ndarray:
    """Values of all scaled monomials of degree <= ``degree``: shape ``(n_points, dim)``."""
    X = np.atleast_2d(scaled_coordinates(points, centroid, diameter))
    exps = monomial_exponents(degree)
    px = _powers(X[:, 0], degree)
    py = _powers(X[:, 1], degree)
    return px[:, exps[:, 0]] * py[:, exps[:, 1]]


def eval_monomial_gradients(degree: int, points, centroid, diameter) -> np.ndarray:
    """Gradients of the scaled monomials: shape ``(n_points, dim, 2)``."""
    X = np.atleast_2d(scaled_coordinates(points, centroid, diameter))
    exps = monomial_exponents(degree)
    px = _powers(X[:, 0], degree)
    py = _powers(X[:, 1], degree)
    a, b = exps[:, 0], exps[:, 1]
    dx = np.where(a > 0, a * px[:, np.maximum(a - 1, 0)], 0.0) * py[:, b]
    dy = px[:, a] * np.where(b > 0, b * py[:, np.maximum(b - 1, 0)], 0.0)
    return np.stack([dx, dy], axis=-1) / diameter


def eval_monomial(geom: ElementGeometry, i: int, point) -> float:
    """Scaled monomial number ``i`` (1-based) of ``geom`` at one point."""
    alpha, beta = monomial_exponent(i)
    X, Y = scaled_coordinates(point, geom.centroid, geom.diameter)
    return float(_powers(np.float64(X), alpha)[-1] * _powers(np.float64(Y), beta)[-1])


# -- one-dimensional rules ----------------------------------------------------

@lru_cache(maxsize=None)
def gauss_legendre_01(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def points_for_exactness(order: int) -> int:
    return max(1, -(-(order + 1) // 2))


def integrate_on_edge(start, end, f, order: int) -> float:
    """Integral of ``f(points)`` along the segment from ``start`` to ``end``.

    ``f`` receives an ``(n, 2)`` array and returns ``n`` values.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    t, w = gauss_legendre_01(points_for_exactness(order))
    pts = start + t[:, None] * (end - start)
    length = float(np.hypot(*(end - start)))
    return length * float(np.dot(w, np.asarray(f(pts), dtype=float)))


def edge_monomials(degree: int, t) -> np.ndarray:
    """Edge basis ``(t - 1/2)**(i-1)``, ``i = 1..degree+1``, in the edge parameter."""
    return _powers(np.asarray(t, dtype=float) - 0.5, degree)


def lagrange_nodes(k: int) -> np.ndarray:
    """The ``k+2`` Lagrange nodes: endpoints first and last, interior nodes between.

    Node ``j`` (0-based) sits at ``j/(k+1)``.
    """
    return np.linspace(0.0, 1.0, k + 2)


def lagrange_basis(k: int, t, positive: bool = True) -> np.ndarray:
    """Degree ``k+1`` Lagrange basis on [0, 1] at parameters ``t``: shape ``(len(t), k+2)``.

    For a negatively oriented edge the nodes are mirrored, ``t_j -> 1 - t_j``.
    """
    nodes = lagrange_nodes(k)
    if not positive:
        nodes = 1.0 - nodes
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.ones((len(t), len(nodes)))
    for j, tj in enumerate(nodes):
        for l, tl in enumerate(nodes):
            if l != j:
                out[:, j] *= (t - tl) / (tj - tl)
    return out


# -- polygons ---------------------------------------------------------------

def triangle_rule(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Returns barycentric-style coordinates ``(lam1, lam2)`` and weights summing to 1/2.
    Exact for polynomials of degree ``2*n_points - 2``.
    """
    t, w = gauss_legendre_01(n_points)
    U, V = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w) * U
    pts = np.column_stack([(U * (1.0 - V)).ravel(), (U * V).ravel()])
    return pts, W.ravel()


def element_quadrature(geom: ElementGeometry, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights of a fan rule from the centroid, exact to ``order``."""
    ref_pts, ref_w = triangle_rule(max(1, -(-(order + 2) // 2)))
    c = geom.centroid
    a = geom.vertices
    b = np.roll(geom.vertices, -1, axis=0)
    e1 = a - c
    e2 = b - c
    jac = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    pts = c + ref_pts[None, :, 0:1] * e1[:, None, :] + ref_pts[None, :, 1:2] * e2[:, None, :]
    weights = jac[:, None] * ref_w[None, :]
    return pts.reshape(-1, 2), weights.ravel()


def integrate_on_element(geom: ElementGeometry, f, order: int) -> float:
    """Integral over the polygon of ``f(points)`` with a fan rule exact to ``order``."""
    pts, w = element_quadrature(geom, order)
    return float(np.dot(w, np.asarray(f(pts), dtype=float)))


def moment_table(geom: ElementGeometry, degree: int) -> np.ndarray:
    """``T[a, b] = integral over K of X**a * Y**b`` for ``a + b <= degree``.

    ``X, Y`` are the scaled coordinates.  Each homogeneous monomial of degree
    ``q`` satisfies ``div(x f) = (q + 2) f``, which moves the area integral
    onto the edges where it is computed by Gauss-Legendre exactly.
    """
    n_pts = points_for_exactness(degree + 1)
    t, w = gauss_legendre_01(n_pts)
    h = geom.diameter
    a = scaled_coordinates(geom.vertices, geom.centroid, h)
    b = np.roll(a, -1, axis=0)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    # (X n1 + Y n2) ds in scaled units: the normal flux of the position vector
    flux = (pts[..., 0] * geom.normals[:, None, 0] + pts[..., 1] * geom.normals[:, None, 1])
    weights = (geom.edge_lengths[:, None] * w[None, :] * flux).ravel()
    px = _powers(pts[..., 0].ravel(), degree)
    py = _powers(pts[..., 1].ravel(), degree)
    table = np.zeros((degree + 1, degree + 1))
    for q in range(degree + 1):
        for alpha in range(q + 1):
            beta = q - alpha
            table[alpha, beta] = h / (q + 2) * np.dot(weights, px[:, alpha] * py[:, beta])
    return table


def integrate_monomial(geom: ElementGeometry, alpha: int, beta: int) -> float:
    if alpha < 0 or beta < 0:
        raise ValueError("exponents must be non-negative")
    return float(moment_table(geom, alpha + beta)[alpha, beta])
