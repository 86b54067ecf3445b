"""D-trace loss, its gradient, step-size constants and the block prox.

The loss is 0.5 * tr(Sx D Sy D^T) - tr(D (Sx - Sy)) for a covariance pair
(Sx, Sy); its population minimizer is the true precision-matrix difference.
All operations here are pure and shape-checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import BlockMatrix, _block_norms_arr, block_norms
from .penalty import PenaltySpec, rho

SYMMETRY_TOL = 1e-10
EIG_FLOOR = -1e-10


@dataclass(frozen=True)
class CovariancePair:
    """Sample covariances of the two groups plus their sample counts."""

    sigma_x: BlockMatrix
    sigma_y: BlockMatrix
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.sigma_x.m != self.sigma_y.m or self.sigma_x.side != self.sigma_y.side:
            raise ValueError("sigma_x and sigma_y must share block size and side")
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("sample counts must be >= 1")
        for name, bm in (("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)):
            a = bm.data
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contains non-finite entries")
            if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
                raise ValueError(f"{name} is not symmetric to {SYMMETRY_TOL}")
            if np.linalg.eigvalsh(a).min() < EIG_FLOOR:
                raise ValueError(f"{name} has eigenvalues below {EIG_FLOOR}")

    @property
    def m(self) -> int:
        return self.sigma_x.m

    @property
    def p(self) -> int:
        return self.sigma_x.p

    @property
    def side(self) -> int:
        return self.sigma_x.side


def sample_covariance(samples: np.ndarray, m: int, center: bool = False) -> BlockMatrix:
    """Second-moment matrix (1/n) sum_t x(t) x(t)^T of the rows of ``samples``.

    The model assumes zero-mean data, so no centering is applied by default;
    set ``center=True`` for ingested real data that is not exactly zero-mean.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValueError("samples must be a nonempty n x (m*p) matrix")
    if center:
        samples = samples - samples.mean(axis=0)
    n = samples.shape[0]
    cov = samples.T @ samples / n
    cov = (cov + cov.T) / 2.0
    return BlockMatrix(cov, m)


def _check_shapes(delta: BlockMatrix, cov: CovariancePair) -> None:
    if delta.side != cov.side or delta.m != cov.m:
        raise ValueError(
            f"delta side/m ({delta.side}, {delta.m}) does not match covariances "
            f"({cov.side}, {cov.m})"
        )


def dtrace_loss(delta: BlockMatrix, cov: CovariancePair) -> float:
    """0.5 * tr(Sx D Sy D^T) - tr(D (Sx - Sy))."""
    _check_shapes(delta, cov)
    d = delta.data
    w = cov.sigma_x.data @ d @ cov.sigma_y.data
    return 0.5 * float(np.vdot(w, d)) - float(np.vdot(cov.sigma_x.data - cov.sigma_y.data, d))


def dtrace_gradient(delta: BlockMatrix, cov: CovariancePair) -> BlockMatrix:
    """Sx D Sy - (Sx - Sy)."""
    _check_shapes(delta, cov)
    g = cov.sigma_x.data @ delta.data @ cov.sigma_y.data - (cov.sigma_x.data - cov.sigma_y.data)
    return BlockMatrix(g, delta.m)


def _largest_eigenvalue(a: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix.

    Full eigendecomposition for small sides, power iteration (relative
    Rayleigh-quotient tolerance) otherwise.
    """
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    n = a.shape[0]
    if n <= 64:
        return float(np.linalg.eigvalsh(a)[-1])
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_lam = float(v @ (a @ v))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-300):
            return new_lam
        lam = new_lam
    return lam


def lipschitz_lla(cov: CovariancePair) -> float:
    """Gradient Lipschitz constant of the plain loss: phi_max(Sx) * phi_max(Sy)."""
    return _largest_eigenvalue(cov.sigma_x.data) * _largest_eigenvalue(cov.sigma_y.data)


def lipschitz_redistributed(cov: CovariancePair, spec: PenaltySpec, m: int | None = None) -> float:
    """Lipschitz constant after moving the smooth penalty remainder into the loss.

    Equals the plain constant for lasso and gains 2*m*lam/eps (log-sum) or
    2*m/(a-1) (SCAD); the log-sum term is typically huge, which is why the
    redistribution solver is not recommended for that penalty.
    """
    m = cov.m if m is None else m
    base = lipschitz_lla(cov)
    if spec.kind == "lasso":
        return base
    if spec.kind == "logsum":
        return base + 2.0 * m * spec.lam / spec.epsilon
    return base + 2.0 * m / (spec.a - 1.0)


def _prox_arr(arr: np.ndarray, thresh: np.ndarray, m: int) -> np.ndarray:
    """Blockwise group soft-threshold: scale block (k,l) by (1 - thresh_kl / norm)_+."""
    p = arr.shape[0] // m
    bv = arr.reshape(p, m, p, m)
    norms = np.sqrt(np.einsum("irjs,irjs->ij", bv, bv))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = 1.0 - thresh / norms
    scale[~np.isfinite(scale)] = 0.0
    np.clip(scale, 0.0, None, out=scale)
    return (bv * scale[:, None, :, None]).reshape(arr.shape)


def prox_block_l2(A: BlockMatrix, weights: np.ndarray, eta: float) -> BlockMatrix:
    """Proximal operator of eta * sum_kl w_kl ||block||_F at A.

    Every block is shrunk toward zero along itself; blocks whose norm is at
    most w_kl * eta become exactly zero, which is what makes edge extraction
    at threshold 0 reliable.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (A.p, A.p):
        raise ValueError(f"weights must be p x p = {(A.p, A.p)}, got {weights.shape}")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    return BlockMatrix(_prox_arr(A.data, weights * eta, A.m), A.m)


def penalized_objective(delta: BlockMatrix, cov: CovariancePair, spec: PenaltySpec) -> float:
    """Loss plus the penalty summed over all blocks, diagonal included."""
    _check_shapes(delta, cov)
    return dtrace_loss(delta, cov) + float(np.sum(rho(spec, block_norms(delta))))


__all__ = [
    "CovariancePair",
    "sample_covariance",
    "dtrace_loss",
    "dtrace_gradient",
    "lipschitz_lla",
    "lipschitz_redistributed",
    "prox_block_l2",
    "penalized_objective",
]
