"""Computable fields, error norms, the Kovasznay benchmark and the convergence harness."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import Discretization, NewtonDivergence, SolverError, newton_solve
from .local_operators import ProblemParams
from .mesh import PolygonalMesh, generate_mesh, load_mesh
from .projectors import ElementConstructionError
from .quadrature import gauss_legendre_01, monomial_exponents, monomial_index

log = logging.getLogger(__name__)

KOVASZNAY_DOMAIN = ((-0.5, 1.5), (0.0, 2.0))
CSV_COLUMNS = ("k", "h", "N", "e_sigma", "r_sigma", "e_u", "r_u", "e_uH1", "r_uH1", "e_p", "r_p")
ERROR_NAMES = ("sigma", "u", "uH1", "p")
FAILURE_MARKER = "failed"


# -- exact solution -----------------------------------------------------------------

@dataclass
class ExactSolution:
    """Analytic velocity, its gradient, pressure and source, all vectorized over points."""

    mu: float
    velocity: Callable[[np.ndarray], np.ndarray]
    velocity_gradient: Callable[[np.ndarray], np.ndarray]
    pressure: Callable[[np.ndarray], np.ndarray]
    force: Callable[[np.ndarray], np.ndarray]
    domain: tuple = KOVASZNAY_DOMAIN
    parameter: float = float("nan")
    _shift: float | None = field(default=None, repr=False)

    @property
    def dirichlet(self):
        return self.velocity

    def domain_area(self) -> float:
        (x0, x1), (y0, y1) = self.domain
        return (x1 - x0) * (y1 - y0)

    def integrate(self, fn, n_points: int = 60) -> float:
        """Tensor Gauss-Legendre integral over the rectangular domain."""
        (x0, x1), (y0, y1) = self.domain
        t, w = gauss_legendre_01(n_points)
        X, Y = np.meshgrid(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, indexing="ij")
        W = np.outer(w, w) * (x1 - x0) * (y1 - y0)
        vals = np.asarray(fn(np.column_stack([X.ravel(), Y.ravel()])))
        return float(W.ravel() @ vals)

    @property
    def trace_shift(self) -> float:
        """The constant ``c = -|u|^2 / (2 |domain|)`` of the pseudostress."""
        if self._shift is None:
            sq = self.integrate(lambda p: np.sum(self.velocity(p) ** 2, axis=1))
            self._shift = -sq / (2.0 * self.domain_area())
        return self._shift

    def pseudostress(self, points) -> np.ndarray:
        u = self.velocity(points)
        out = self.mu * self.velocity_gradient(points) - u[:, :, None] * u[:, None, :]
        shift = self.pressure(points) + self.trace_shift
        out[:, 0, 0] -= shift
        out[:, 1, 1] -= shift
        return out

    def params(self, *, kappa1=0.1, kappa2=0.1, kappa3=0.1) -> ProblemParams:
        return ProblemParams(mu=self.mu, kappa1=kappa1, kappa2=kappa2, kappa3=kappa3,
                             force=self.force, dirichlet=self.velocity)


def kovasznay_lambda(mu: float) -> float:
    re = 1.0 / mu
    return re / 2.0 - math.sqrt(re * re / 4.0 + 4.0 * math.pi**2)


def kovasznay_data(mu: float = 0.1) -> ExactSolution:
    """Kovasznay flow on (-0.5, 1.5) x (0, 2) with hand-derived source term."""
    if not mu > 0:
        raise ValueError("viscosity must be positive")
    lam = kovasznay_lambda(mu)
    a = 2.0 * math.pi
    shift = (math.exp(3 * lam) - math.exp(-lam)) / (8 * lam)

    def velocity(p):
        p = np.atleast_2d(p)
        E = np.exp(lam * p[:, 0])
        return np.column_stack([1.0 - E * np.cos(a * p[:, 1]),
                                lam / a * E * np.sin(a * p[:, 1])])

    def velocity_gradient(p):
        p = np.atleast_2d(p)
        E = np.exp(lam * p[:, 0])
        c, s = np.cos(a * p[:, 1]), np.sin(a * p[:, 1])
        out = np.empty((len(p), 2, 2))
        out[:, 0, 0] = -lam * E * c
        out[:, 0, 1] = a * E * s
        out[:, 1, 0] = lam**2 / a * E * s
        out[:, 1, 1] = lam * E * c
        return out

    def pressure(p):
        p = np.atleast_2d(p)
        return 0.5 * np.exp(2 * lam * p[:, 0]) - shift

    def force(p):
        p = np.atleast_2d(p)
        E = np.exp(lam * p[:, 0])
        c, s = np.cos(a * p[:, 1]), np.sin(a * p[:, 1])
        # -mu lap u + (grad u) u + grad p, written out term by term
        f1 = (-mu * (a * a - lam * lam) - lam) * E * c + 2 * lam * E * E
        f2 = (lam / a) * (-mu * (lam * lam - a * a) + lam) * E * s
        return np.column_stack([f1, f2])

    return ExactSolution(mu, velocity, velocity_gradient, pressure, force,
                         KOVASZNAY_DOMAIN, lam)


# -- computable fields --------------------------------------------------------

def poly_product(c1: np.ndarray, deg1: int, c2: np.ndarray, deg2: int) -> np.ndarray:
    """Coefficients of the product of two scaled-monomial expansions on one element."""
    e1, e2 = monomial_exponents(deg1), monomial_exponents(deg2)
    out = np.zeros(len(monomial_exponents(deg1 + deg2)))
    for i, (a1, b1) in enumerate(e1):
        if c1[i] == 0.0:
            continue
        for j, (a2, b2) in enumerate(e2):
            out[monomial_index(int(a1 + a2), int(b1 + b2)) - 1] += c1[i] * c2[j]
    return out


@dataclass
class ComputableSolution:
    """Per-element monomial coefficients of the postprocessed fields.

    ``stress[K]`` holds ``4m`` entries ordered (11, 12, 21, 22); ``velocity[K]``
    holds ``2m``; ``pressure[K]`` holds the degree ``2k`` expansion of the
    pressure.
    """

    disc: Discretization
    stress: list[np.ndarray]
    velocity: list[np.ndarray]
    pressure: list[np.ndarray]
    trace_shift: float

    @property
    def k(self) -> int:
        return self.disc.k

    def _ws(self, K):
        return self.disc.elements[K].ws

    def eval_stress(self, K: int, points) -> np.ndarray:
        phi = self._ws(K).monomials(points)
        m = phi.shape[1]
        return (phi @ self.stress[K].reshape(4, m).T).reshape(-1, 2, 2)

    def eval_velocity(self, K: int, points) -> np.ndarray:
        phi = self._ws(K).monomials(points)
        return phi @ self.velocity[K].reshape(2, -1).T

    def eval_velocity_gradient(self, K: int, points) -> np.ndarray:
        grads = self._ws(K).monomial_gradients(points)
        return np.einsum("qic,li->qlc", grads, self.velocity[K].reshape(2, -1))

    def eval_pressure(self, K: int, points) -> np.ndarray:
        return self._ws(K).monomials(points, 2 * self.k) @ self.pressure[K]

    def pressure_from_trace(self, K: int, points) -> np.ndarray:
        """Direct pointwise evaluation of ``-tr(stress + c I + u (x) u) / 2``."""
        s = self.eval_stress(K, points)
        u = self.eval_velocity(K, points)
        return -0.5 * (s[:, 0, 0] + s[:, 1, 1] + 2 * self.trace_shift + np.sum(u * u, axis=1))


def postprocess(disc: Discretization, x: np.ndarray) -> ComputableSolution:
    x = np.asarray(x, dtype=float)
    k = disc.k
    stress, velocity = [], []
    sq_norm = 0.0
    for K, el in enumerate(disc.elements):
        alpha, beta = disc.split(x, K)
        a = el.ps.stress @ alpha
        b = np.kron(np.eye(2), el.ps.velocity) @ beta
        stress.append(a)
        velocity.append(b)
        m = el.ws.dims.m
        sq_norm += b[:m] @ el.ws.mass @ b[:m] + b[m:] @ el.ws.mass @ b[m:]
    shift = -sq_norm / (2.0 * disc.mesh.domain_area())
    pressure = []
    for K, el in enumerate(disc.elements):
        m = el.ws.dims.m
        a, b = stress[K], velocity[K]
        p = -0.5 * (poly_product(b[:m], k, b[:m], k) + poly_product(b[m:], k, b[m:], k))
        p[:m] -= 0.5 * (a[:m] + a[3 * m:])
        p[0] -= shift
        pressure.append(p)
    return ComputableSolution(disc, stress, velocity, pressure, shift)


@dataclass
class ErrorRow:
    h: float
    n_dofs: int
    errors: dict
    iterations: int = 0
    pressure_mean_ratio: float = float("nan")
    pressure_error_mean: float = float("nan")


def compute_errors(sol: ComputableSolution, exact: ExactSolution, order: int | None = None,
                   stress=None) -> ErrorRow:
    """L2 errors of stress, velocity and pressure and the broken H1 velocity error."""
    order = 2 * sol.k + 6 if order is None else order
    stress_fn = exact.pseudostress if stress is None else stress
    acc = dict.fromkeys(ERROR_NAMES, 0.0)
    p_int = p_sq = diff_int = 0.0
    for K, el in enumerate(sol.disc.elements):
        pts, w = el.ws.quadrature(order)
        ds = stress_fn(pts) - sol.eval_stress(K, pts)
        du = exact.velocity(pts) - sol.eval_velocity(K, pts)
        dg = exact.velocity_gradient(pts) - sol.eval_velocity_gradient(K, pts)
        ph = sol.eval_pressure(K, pts)
        dp = exact.pressure(pts) - ph
        acc["sigma"] += w @ np.sum(ds * ds, axis=(1, 2))
        acc["u"] += w @ np.sum(du * du, axis=1)
        acc["uH1"] += w @ (np.sum(du * du, axis=1) + np.sum(dg * dg, axis=(1, 2)))
        acc["p"] += w @ (dp * dp)
        p_int += w @ ph
        p_sq += w @ (ph * ph)
        diff_int += w @ dp
    errors = {name: math.sqrt(max(v, 0.0)) for name, v in acc.items()}
    ratio = abs(p_int) / math.sqrt(p_sq) if p_sq > 0 else 0.0
    return ErrorRow(sol.disc.mesh.h, sol.disc.n_dofs, errors, pressure_mean_ratio=ratio,
                    pressure_error_mean=diff_int / sol.disc.mesh.domain_area())


def convergence_rate(e: float, e_next: float, h: float, h_next: float) -> float:
    return math.log(e / e_next) / math.log(h / h_next)


# -- convergence harness -----------------------------------------------------------

@dataclass
class StudyConfig:
    kind: str = "triangles"
    degrees: tuple = (0, 1, 2)
    levels: int = 3
    h0: float = 0.25
    mu: float = 0.1
    kappa1: float = 0.1
    kappa2: float = 0.1
    kappa3: float = 0.1
    tol: float = 1e-6
    maxit: int = 20
    seed: int = 0
    out: str | None = None
    export_fields: str | None = None
    mesh_file: str | None = None
    refinement: float = 2.0

    def __post_init__(self):
        self.degrees = tuple(int(d) for d in self.degrees)
        if any(d < 0 for d in self.degrees):
            raise ValueError("degrees must be non-negative")
        if self.levels < 1:
            raise ValueError("need at least one level")
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not self.refinement > 1:
            raise ValueError("refinement factor must exceed 1")
        # validates the weights
        ProblemParams(mu=self.mu, kappa1=self.kappa1, kappa2=self.kappa2, kappa3=self.kappa3)

    def level_h(self, level: int) -> float:
        return self.h0 / self.refinement**level


@dataclass
class StudyRecord:
    kind: str
    k: int
    level: int
    h: float
    n_dofs: int
    errors: dict | None
    rates: dict
    iterations: int | None
    failure: str | None = None
    pressure_mean_ratio: float = float("nan")


@dataclass
class StudyReport:
    config: StudyConfig
    records: list[StudyRecord]

    def for_degree(self, k: int, kind: str | None = None) -> list[StudyRecord]:
        return [r for r in self.records if r.k == k and (kind is None or r.kind == kind)]

    @property
    def failed(self) -> bool:
        return any(r.failure for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            row = [str(r.k), f"{r.h:.4f}", str(r.n_dofs)]
            for name in ERROR_NAMES:
                if r.errors is None:
                    row += [FAILURE_MARKER, ""]
                    continue
                rate = r.rates.get(name)
                row += [f"{r.errors[name]:.2e}", "" if rate is None else f"{rate:.2f}"]
            writer.writerow(row)
        return buf.getvalue()


def export_fields(sol: ComputableSolution, directory: str, tag: str) -> list[str]:
    """Write one text file per field: lines ``elem_id degree c_1 ... c_n``."""
    os.makedirs(directory, exist_ok=True)
    fields = {"sigma": (sol.stress, sol.k), "u": (sol.velocity, sol.k),
              "p": (sol.pressure, 2 * sol.k)}
    paths = []
    for name, (coeffs, degree) in fields.items():
        path = os.path.join(directory, f"{tag}_{name}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            for K, c in enumerate(coeffs):
                fh.write(f"{K} {degree} " + " ".join(f"{v:.16e}" for v in c) + "\n")
        paths.append(path)
    return paths


def _study_meshes(config: StudyConfig) -> list[PolygonalMesh]:
    if config.mesh_file:
        return [load_mesh(config.mesh_file)]
    return [generate_mesh(config.kind, KOVASZNAY_DOMAIN, config.level_h(j), seed=config.seed + j)
            for j in range(config.levels)]


def run_convergence_study(config: StudyConfig, exact: ExactSolution | None = None) -> StudyReport:
    exact = exact or kovasznay_data(config.mu)
    params = exact.params(kappa1=config.kappa1, kappa2=config.kappa2, kappa3=config.kappa3)
    meshes = _study_meshes(config)
    records = []
    for k in config.degrees:
        previous = None
        for level, mesh in enumerate(meshes):
            rec = StudyRecord(config.kind, k, level, mesh.h, 0, None, {}, None)
            try:
                disc = Discretization(mesh, k, params)
                rec.n_dofs = disc.n_dofs
                state = newton_solve(disc, tol=config.tol, maxit=config.maxit)
                sol = postprocess(disc, state.x)
                row = compute_errors(sol, exact)
            except (NewtonDivergence, SolverError, ElementConstructionError) as exc:
                log.warning("k=%d level %d failed: %s", k, level, exc)
                rec.failure = str(exc)
                records.append(rec)
                previous = None
                continue
            rec.errors = row.errors
            rec.iterations = state.iterations
            rec.pressure_mean_ratio = row.pressure_mean_ratio
            if previous is not None:
                rec.rates = {name: convergence_rate(previous.errors[name], row.errors[name],
                                                    previous.h, rec.h)
                             for name in ERROR_NAMES}
            if config.export_fields:
                export_fields(sol, config.export_fields, f"{config.kind}_k{k}_l{level}")
            log.info("k=%d h=%.4f N=%d newton=%d e(sigma)=%.3e", k, rec.h, rec.n_dofs,
                     state.iterations, row.errors["sigma"])
            records.append(rec)
            previous = rec
    report = StudyReport(config, records)
    if config.out:
        with open(config.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    return report
