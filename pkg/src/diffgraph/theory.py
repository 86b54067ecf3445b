"""Numerical evaluation of the estimator's sufficient conditions at small scale.

Everything here works on the materialized Tracy-Singh matrix
Gamma = sigma_y (x) sigma_x (the Hessian of the loss in blockwise-vectorized
coordinates), so operations refuse to run above the materialization cap: these
are verification tools, not estimators.

Support indexing: the estimator does not constrain its iterates to be
symmetric, so each undirected edge {k, l} occupies both block positions (k, l)
and (l, k) of the difference matrix. Support-restricted submatrices of Gamma
therefore use both ordered positions per edge, while the reported support size
``s`` counts undirected edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import (
    BlockMatrix,
    EdgeSet,
    _block_norms_arr,
    bvec,
    tracy_singh,
    DEFAULT_TRACY_SINGH_CAP,
)
from .loss import CovariancePair
from .penalty import PenaltySpec, rho_prime


@dataclass(frozen=True)
class TheoryConstants:
    M: float
    M_sigma: float
    kappa_gamma: float
    alpha: float
    sigma_bar_xy: float
    C0: float
    irrepresentable: bool
    tau: float = 3.0


@dataclass(frozen=True)
class Theorem1Report:
    lambda_n: float
    n_min: float
    satisfied: bool
    reason: str
    c_bar_alpha: float
    c_m_kappa: float
    c_b1: float
    c_b2: float
    error_bound_inf: float


@dataclass(frozen=True)
class RscReport:
    trials: int
    violations_full: int
    violations_restricted: int
    rate_full: float
    rate_restricted: float
    n: int
    N2: float
    n_exceeds_N2: bool
    phi_star_min: float


@dataclass(frozen=True)
class LossFloor:
    floor: float
    b_tilde_norm: float
    c: float
    phi_star_min: float
    phi_hat_min: float
    applicable: bool


def _support_groups(support: EdgeSet, p: int) -> list:
    """Flat Gamma group indices covered by the support (both orders per edge).

    Block (row k, col l) of the difference matrix corresponds to group
    l * p + k in blockwise-vectorized coordinates.
    """
    return sorted({l * p + k for k, l in support.ordered_pairs()})


def _rect_block_norms(x: np.ndarray, block: int) -> np.ndarray:
    """Frobenius norm of each block x block submatrix of a (block x k*block) strip."""
    k = x.shape[1] // block
    xr = x.reshape(block, k, block)
    return np.sqrt(np.einsum("rbc,rbc->b", xr, xr))


def _c0_constant(m: int, p: int, sigma_bar: float, tau: float) -> float:
    if p < 2:
        raise ValueError("theory constants require p >= 2 (ln p must be positive)")
    return 40.0 * m * sigma_bar * np.sqrt(2.0 * (tau + np.log(4.0 * m * m) / np.log(p)))


def compute_constants(sigma_x_star: BlockMatrix, sigma_y_star: BlockMatrix,
                      support: EdgeSet, tau: float = 3.0,
                      cap: int = DEFAULT_TRACY_SINGH_CAP) -> TheoryConstants:
    """Population constants governing support recovery.

    M and M_sigma are max-entry and max-row-sum norms of the blockwise norm
    maps of the covariances; kappa_gamma is the max row sum of the blockwise
    norm map of the inverted support submatrix of Gamma; alpha is the
    irrepresentability margin over off-support blocks.
    """
    m, p = sigma_x_star.m, sigma_x_star.p
    if sigma_y_star.m != m or sigma_y_star.p != p:
        raise ValueError("covariances must share block structure")
    cx = _block_norms_arr(sigma_x_star.data, m)
    cy = _block_norms_arr(sigma_y_star.data, m)
    M = max(cx.max(), cy.max())
    M_sigma = max(cx.sum(axis=1).max(), cy.sum(axis=1).max())
    sigma_bar = max(np.diag(sigma_x_star.data).max(), np.diag(sigma_y_star.data).max())
    C0 = _c0_constant(m, p, sigma_bar, tau)

    gamma = tracy_singh(sigma_y_star, sigma_x_star, cap=cap)
    m2 = m * m
    groups = _support_groups(support, p)
    if not groups:
        raise ValueError("support is empty; the support submatrix of Gamma is undefined")
    idx = np.concatenate([np.arange(g * m2, (g + 1) * m2) for g in groups])
    gamma_ss = gamma[np.ix_(idx, idx)]
    try:
        inv_ss = np.linalg.inv(gamma_ss)
    except np.linalg.LinAlgError as exc:
        raise ValueError("support submatrix of Gamma is singular") from exc
    kappa = _block_norms_arr(inv_ss, m2).sum(axis=1).max()

    complement = [g for g in range(p * p) if g not in set(groups)]
    worst = 0.0
    for g in complement:
        strip = gamma[g * m2:(g + 1) * m2, idx] @ inv_ss
        worst = max(worst, float(_rect_block_norms(strip, m2).sum()))
    alpha = 1.0 - worst

    return TheoryConstants(
        M=float(M),
        M_sigma=float(M_sigma),
        kappa_gamma=float(kappa),
        alpha=float(alpha),
        sigma_bar_xy=float(sigma_bar),
        C0=float(C0),
        irrepresentable=alpha > 0,
        tau=tau,
    )


def theorem1_conditions(constants: TheoryConstants, s: int, p: int, n: int,
                        alpha: float | None = None) -> Theorem1Report:
    """Evaluate the support-recovery lambda and minimum sample size.

    ``alpha`` defaults to the computed irrepresentability margin but may be
    overridden. Outside (0, 1) the conditions cannot hold and the plug-in
    quantities are reported as NaN.
    """
    a = constants.alpha if alpha is None else alpha
    nan = float("nan")
    if not (0.0 < a < 1.0):
        return Theorem1Report(nan, nan, False, "irrepresentability: alpha not in (0, 1)",
                              nan, nan, nan, nan, nan)
    M, kappa, M_sigma, C0 = (constants.M, constants.kappa_gamma,
                             constants.M_sigma, constants.C0)
    c_bar = (1.0 - a) / (2.0 * (2.0 * M + 1.0) - 2.0 * a * M)
    c_mk = 1.5 * (1.0 + kappa * min(s * M * M, M_sigma * M_sigma))
    big = max(8.0 / a, 3.0 / (a * c_bar) * s * kappa * M * c_mk)
    lambda_n = big * C0 * np.sqrt(np.log(p) / n)
    n_min = max(
        1.0 / min(M * M, 1.0),
        81.0 * M * M * s * s * kappa * kappa,
        9.0 * s * s / (a * c_bar) ** 2 * (kappa * M * c_mk) ** 2,
    ) * C0 ** 2 * np.log(p)
    c_b1 = 3.0 * kappa * big
    c_b2 = 9.0 * s * kappa ** 2 * M ** 2
    bound = (c_b1 + c_b2) * C0 * np.sqrt(np.log(p) / n)
    satisfied = bool(n > n_min)
    reason = "" if satisfied else f"sample size {n} <= n_min {n_min:.4g}"
    return Theorem1Report(float(lambda_n), float(n_min), satisfied, reason,
                          float(c_bar), float(c_mk), float(c_b1), float(c_b2),
                          float(bound))


def theorem2_convexity(sigma_x_star: BlockMatrix, sigma_y_star: BlockMatrix,
                       spec: PenaltySpec, lambda_n: float | None = None) -> bool:
    """True when the product of minimum covariance eigenvalues exceeds the
    penalty's weak-convexity threshold, making the restricted problem strictly
    convex (always true for lasso on positive definite inputs)."""
    phi = (np.linalg.eigvalsh(sigma_x_star.data)[0]
           * np.linalg.eigvalsh(sigma_y_star.data)[0])
    if spec.kind == "lasso":
        threshold = 0.0
    elif spec.kind == "scad":
        threshold = (64.0 / 63.0) / (spec.a - 1.0)
    else:
        lam = spec.lam if lambda_n is None else lambda_n
        threshold = (64.0 / 63.0) * lam / spec.epsilon
    return bool(phi > threshold)


def rsc_check(cov_hat: CovariancePair, sigma_x_star: BlockMatrix,
              sigma_y_star: BlockMatrix, support: EdgeSet,
              trials: int = 1000, tau: float = 3.0, seed: int = 0,
              cap: int = DEFAULT_TRACY_SINGH_CAP) -> RscReport:
    """Monte-Carlo falsification of the restricted strong convexity bounds.

    Random full directions must satisfy the 3/4 * phi*_min quadratic lower
    bound and random support-restricted directions the 63/64 one, whenever the
    sample size exceeds the N2 threshold; violation counts are reported either
    way.
    """
    m, p = cov_hat.m, cov_hat.p
    gamma_hat = tracy_singh(cov_hat.sigma_y, cov_hat.sigma_x, cap=cap)
    phi_star = (np.linalg.eigvalsh(sigma_x_star.data)[0]
                * np.linalg.eigvalsh(sigma_y_star.data)[0])
    cx = _block_norms_arr(sigma_x_star.data, m)
    cy = _block_norms_arr(sigma_y_star.data, m)
    M = max(cx.max(), cy.max())
    sigma_bar = max(np.diag(sigma_x_star.data).max(), np.diag(sigma_y_star.data).max())
    C0 = _c0_constant(m, p, sigma_bar, tau)
    s = len(support)
    N2 = max(1.0 / M ** 2, (192.0 * M * s / phi_star) ** 2) * C0 ** 2 * np.log(p)

    m2 = m * m
    groups = _support_groups(support, p)
    idx = np.concatenate([np.arange(g * m2, (g + 1) * m2) for g in groups])
    gamma_ss = gamma_hat[np.ix_(idx, idx)]

    rng = np.random.default_rng(seed)
    viol_full = 0
    viol_restr = 0
    for _ in range(trials):
        theta = rng.standard_normal(gamma_hat.shape[0])
        if theta @ gamma_hat @ theta < 0.75 * phi_star * (theta @ theta):
            viol_full += 1
        theta_s = rng.standard_normal(gamma_ss.shape[0])
        if theta_s @ gamma_ss @ theta_s < (63.0 / 64.0) * phi_star * (theta_s @ theta_s):
            viol_restr += 1
    n = min(cov_hat.n_x, cov_hat.n_y)
    return RscReport(
        trials=trials,
        violations_full=viol_full,
        violations_restricted=viol_restr,
        rate_full=viol_full / trials,
        rate_restricted=viol_restr / trials,
        n=n,
        N2=float(N2),
        n_exceeds_N2=n > N2,
        phi_star_min=float(phi_star),
    )


def stationarity_gap(delta_hat: BlockMatrix, cov: CovariancePair,
                     spec: PenaltySpec) -> float:
    """Max block norm of the smallest subgradient of the penalized objective.

    Nonzero blocks contribute the gradient block plus the penalty derivative
    along the block direction; zero blocks contribute the excess of the
    gradient block norm over lambda (the subgradient ball radius at zero).
    Zero at a stationary point.
    """
    m = delta_hat.m
    p = delta_hat.p
    grad = (cov.sigma_x.data @ delta_hat.data @ cov.sigma_y.data
            - (cov.sigma_x.data - cov.sigma_y.data))
    dv = delta_hat.data.reshape(p, m, p, m)
    gv = grad.reshape(p, m, p, m)
    norms = np.sqrt(np.einsum("irjs,irjs->ij", dv, dv))
    gnorms = np.sqrt(np.einsum("irjs,irjs->ij", gv, gv))
    nz = norms > 0
    gap = 0.0
    if np.any(nz):
        coef = np.zeros_like(norms)
        coef[nz] = np.asarray(rho_prime(spec, norms[nz])) / norms[nz]
        resid = gv + dv * coef[:, None, :, None]
        rnorms = np.sqrt(np.einsum("irjs,irjs->ij", resid, resid))
        gap = float(rnorms[nz].max())
    if np.any(~nz):
        slack = np.maximum(0.0, gnorms[~nz] - spec.lam)
        gap = max(gap, float(slack.max()))
    return gap


def loss_lower_bound(cov_hat: CovariancePair, sigma_x_star: BlockMatrix,
                     sigma_y_star: BlockMatrix, delta_star: BlockMatrix) -> LossFloor:
    """Analytic floor under the unpenalized loss along any trajectory.

    Expanding the loss around the true difference gives a quadratic whose
    exact minimum over the deviation norm is -(2 / (3 phi*)) ||b~||^2 plus the
    constant term; the floor is valid whenever the sampled Hessian dominates
    (3/4) phi*_min, which is reported via ``applicable``.
    """
    sx, sy = cov_hat.sigma_x.data, cov_hat.sigma_y.data
    phi_star = (np.linalg.eigvalsh(sigma_x_star.data)[0]
                * np.linalg.eigvalsh(sigma_y_star.data)[0])
    phi_hat = np.linalg.eigvalsh(sx)[0] * np.linalg.eigvalsh(sy)[0]
    d = delta_star.data
    gamma_theta = bvec(BlockMatrix(sx @ d @ sy, delta_star.m))
    b = bvec(BlockMatrix(sx - sy, delta_star.m))
    b_tilde = gamma_theta - b
    c = 0.5 * float(np.vdot(sx @ d @ sy, d)) - float(np.vdot(sx - sy, d))
    floor = -(2.0 / (3.0 * phi_star)) * float(b_tilde @ b_tilde) - abs(c)
    return LossFloor(
        floor=float(floor),
        b_tilde_norm=float(np.linalg.norm(b_tilde)),
        c=float(c),
        phi_star_min=float(phi_star),
        phi_hat_min=float(phi_hat),
        applicable=bool(phi_hat >= 0.75 * phi_star),
    )
