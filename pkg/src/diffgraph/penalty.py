"""Blockwise sparsity penalties: lasso, log-sum and SCAD.

A penalty is applied to the Frobenius norm of each m x m block of the
difference matrix. Besides the penalty value and its scalar derivative, this
module provides the reweighting weights used by the local-linear-approximation
solver and the smooth-remainder gradient used by the redistribution solver.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blockmat import BlockMatrix, block_norms

LASSO = "lasso"
LOGSUM = "logsum"
SCAD = "scad"
KINDS = (LASSO, LOGSUM, SCAD)


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind plus its tuning parameters.

    ``epsilon`` is only meaningful for log-sum (default 0.001) and ``a`` only
    for SCAD (default 3.7).
    """

    kind: str
    lam: float
    epsilon: float = 0.001
    a: float = 3.7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}, expected one of {KINDS}")
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.kind == LOGSUM and not (0 < self.epsilon < 1):
            raise ValueError(f"log-sum requires 0 < epsilon << 1, got {self.epsilon}")
        if self.kind == SCAD and self.a <= 2:
            raise ValueError(f"SCAD requires a > 2, got {self.a}")

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=lam)

    def mu(self) -> float:
        """Weak-convexity constant: rho + (mu/2) u^2 is convex."""
        if self.kind == LASSO:
            return 0.0
        if self.kind == SCAD:
            return 1.0 / (self.a - 1.0)
        return self.lam / self.epsilon


def rho(spec: PenaltySpec, u):
    """Penalty value; symmetric in u with rho(0) = 0. Accepts scalars or arrays."""
    au = np.abs(np.asarray(u, dtype=float))
    lam = spec.lam
    if spec.kind == LASSO:
        out = lam * au
    elif spec.kind == LOGSUM:
        out = lam * spec.epsilon * np.log1p(au / spec.epsilon)
    else:
        a = spec.a
        mid = (2 * a * lam * au - au ** 2 - lam ** 2) / (2 * (a - 1))
        tail = lam ** 2 * (a + 1) / 2
        out = np.where(au <= lam, lam * au, np.where(au <= a * lam, mid, tail))
    return out if out.ndim else float(out)


def rho_prime(spec: PenaltySpec, u0):
    """Derivative of rho at u0 >= 0, with the right limit lambda at u0 = 0.

    SCAD takes the closed-from-the-left branch at its boundaries, i.e. the
    value lambda at u0 = lambda and (a*lam - u0)/(a - 1) at u0 = a*lam.
    """
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0):
        raise ValueError("rho_prime expects u0 >= 0")
    lam = spec.lam
    if spec.kind == LASSO:
        out = np.full_like(u0, lam)
    elif spec.kind == LOGSUM:
        out = lam * spec.epsilon / (u0 + spec.epsilon)
    else:
        a = spec.a
        out = np.where(u0 <= lam, lam,
                       np.where(u0 <= a * lam, (a * lam - u0) / (a - 1), 0.0))
    return out if out.ndim else float(out)


def lla_weights(spec: PenaltySpec, delta_bar: BlockMatrix) -> np.ndarray:
    """Per-block weights rho'(||block||_F) evaluated at the reference iterate.

    For lasso this is the constant matrix lambda; for log-sum and SCAD the
    weights shrink on blocks that are already large, which is what turns one
    weighted group-lasso pass into a local linear approximation of the
    non-convex penalty.
    """
    return np.asarray(rho_prime(spec, block_norms(delta_bar)))


def _redistribution_gradient_arr(spec: PenaltySpec, arr: np.ndarray, m: int) -> np.ndarray:
    p = arr.shape[0] // m
    bv = arr.reshape(p, m, p, m)
    norms = np.sqrt(np.einsum("irjs,irjs->ij", bv, bv))
    factor = np.zeros_like(norms)
    nz = norms > 0
    if np.any(nz):
        factor[nz] = (np.asarray(rho_prime(spec, norms[nz])) - spec.lam) / norms[nz]
    return (bv * factor[:, None, :, None]).reshape(arr.shape)


def redistribution_gradient(spec: PenaltySpec, delta: BlockMatrix) -> BlockMatrix:
    """Blockwise gradient of the smooth remainder rho - lam*|.|.

    Each nonzero block contributes (rho'(n) - lam) * block / n with
    n = ||block||_F; zero blocks contribute zero (the remainder is everywhere
    differentiable with zero derivative at the origin). Identically zero for
    lasso.
    """
    return BlockMatrix(_redistribution_gradient_arr(spec, delta.data, delta.m), delta.m)
