"""Convection blocks built from the current velocity iterate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projectors import ElementWorkspace, ProjectorSet, triple_product_tensor

# dev(w (x) z) in (11, 12, 21, 22) order, split by which component of z multiplies it;
# columns pick the component of the trial velocity w.
DYAD_PATTERN_Z1 = np.array([[0.5, 0.0], [0.0, 0.0], [0.0, 1.0], [-0.5, 0.0]])
DYAD_PATTERN_Z2 = np.array([[0.0, -0.5], [1.0, 0.0], [0.0, 0.0], [0.0, 0.5]])
# swaps the off-diagonal entries of a 2x2 tensor
TRANSPOSE_PATTERN = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])


@dataclass
class ConvectionBlocks:
    weighted_mass: tuple[np.ndarray, np.ndarray]
    dyad: np.ndarray
    symmetrizer: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    DG1: np.ndarray
    DG2: np.ndarray


def velocity_coefficients(ps: ProjectorSet, beta: np.ndarray) -> np.ndarray:
    """Monomial coefficients (length ``2m``) of the L2 projection of a local velocity."""
    return np.kron(np.eye(2), ps.velocity) @ beta


def build_weighted_mass(ws: ElementWorkspace, gamma: np.ndarray, triple=None):
    """``[integral of z_l phi_i phi_j]`` for both components of ``z = sum gamma phi``."""
    m = ws.dims.m
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2 * m,):
        raise ValueError(f"expected {2 * m} coefficients, got {gamma.shape}")
    T = triple_product_tensor(ws) if triple is None else triple
    return (np.tensordot(gamma[:m], T, axes=1), np.tensordot(gamma[m:], T, axes=1))


def symmetrizer(m: int) -> np.ndarray:
    return np.eye(4 * m) + np.kron(TRANSPOSE_PATTERN, np.eye(m))


def build_convection(ps: ProjectorSet, ws: ElementWorkspace, weighted_mass, kappa2: float):
    Mz1, Mz2 = weighted_mass
    PU = ps.velocity
    dyad = np.kron(DYAD_PATTERN_Z1, Mz1 @ PU) + np.kron(DYAD_PATTERN_Z2, Mz2 @ PU)
    sym = symmetrizer(ws.dims.m)
    sym_dyad = sym @ dyad
    P = ps.stress
    PGU = ps.velocity_grad
    return ConvectionBlocks(
        weighted_mass=(Mz1, Mz2), dyad=dyad, symmetrizer=sym,
        G1=P.T @ dyad, G2=-kappa2 * PGU.T @ dyad,
        DG1=P.T @ sym_dyad, DG2=-kappa2 * PGU.T @ sym_dyad,
    )
