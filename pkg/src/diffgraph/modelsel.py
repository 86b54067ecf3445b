"""Tuning-parameter selection: BIC criterion and lambda-grid construction.

BIC(lambda) = (n_x + n_y) * ||Sx D Sy - (Sx - Sy)||_F + ln(n_x + n_y) * nnz(D),
evaluated after a diagonal rescaling that makes the criterion invariant to
per-feature scale changes in the raw data. The grid is anchored at lambda_sm,
the smallest lambda for which the estimator returns a no-edge model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blockmat import BlockMatrix, _block_norms_arr
from .loss import CovariancePair
from .penalty import PenaltySpec
from .solver import EstimationResult, SolverConfig, estimate

LAMBDA_FLOOR = 1e-8
MAX_SCAN_CALLS = 60
SCAN_REL_TOL = 0.01
BISECTION_STEPS = 20


class GridSearchError(RuntimeError):
    """The lambda_sm scan failed to bracket a no-edge model."""


@dataclass
class LambdaGrid:
    lambda_sm: float
    lambda_lower: float
    lambda_upper: float
    points: list
    grid_size: int = 20

    def __post_init__(self):
        if not (0 < self.lambda_lower < self.lambda_upper <= self.lambda_sm):
            raise ValueError(
                f"grid endpoints must satisfy 0 < lower < upper <= lambda_sm, got "
                f"({self.lambda_lower}, {self.lambda_upper}, {self.lambda_sm})"
            )
        pts = [float(x) for x in self.points]
        if pts != sorted(pts):
            raise ValueError("grid points must be sorted ascending")
        self.points = pts


def bic(delta_hat: BlockMatrix, cov: CovariancePair) -> float:
    """BIC value of an estimate; apply :func:`rescale_for_bic` to the inputs first.

    The sparsity term counts nonzero m x m blocks of the (symmetrized)
    estimate, relying on the prox producing exact zeros. Blocks are the model
    degrees of freedom here (an edge is a block); counting scalar entries
    would scale the sparsity term by m^2 and push the minimizer to the
    sparsest end of any grid.
    """
    if delta_hat.side != cov.side:
        raise ValueError("delta_hat and covariances have mismatched shapes")
    sx, sy = cov.sigma_x.data, cov.sigma_y.data
    resid = sx @ delta_hat.data @ sy - (sx - sy)
    n_tot = cov.n_x + cov.n_y
    nnz = int(np.count_nonzero(_block_norms_arr(delta_hat.data, delta_hat.m)))
    return n_tot * float(np.linalg.norm(resid)) + np.log(n_tot) * nnz


def rescale_for_bic(cov: CovariancePair, delta_hat: BlockMatrix):
    """Diagonal rescaling making the BIC residual unit-free.

    With D the diagonal of sigma_x: covariances map to D^-1/2 S D^-1/2 and the
    estimate to D^1/2 Delta D^1/2, so the fitted residual transforms by the
    same congruence and the selected lambda no longer depends on per-feature
    measurement units.
    """
    d = np.diag(cov.sigma_x.data)
    if np.any(d <= 0):
        raise ValueError("sigma_x has a non-positive diagonal entry; cannot rescale")
    inv_root = 1.0 / np.sqrt(d)
    root = np.sqrt(d)
    m = cov.m

    def congruence(a, s):
        return s[:, None] * a * s[None, :]

    scaled_cov = CovariancePair(
        BlockMatrix(congruence(cov.sigma_x.data, inv_root), m),
        BlockMatrix(congruence(cov.sigma_y.data, inv_root), m),
        cov.n_x,
        cov.n_y,
    )
    scaled_delta = BlockMatrix(congruence(delta_hat.data, root), delta_hat.m)
    return scaled_cov, scaled_delta


def _has_edges(result: EstimationResult) -> bool:
    return len(result.edge_set) > 0


def _default_scan_start(cov: CovariancePair) -> float:
    # At any lambda >= max block norm of C(Sx - Sy), zero is stationary for
    # the lasso, so the off-diagonal maximum seeds the scan near lambda_sm.
    norms = _block_norms_arr(cov.sigma_x.data - cov.sigma_y.data, cov.m)
    off = norms - np.diag(np.diag(norms))
    return max(float(off.max()), LAMBDA_FLOOR * 10)


def find_lambda_sm(cov: CovariancePair, spec: PenaltySpec,
                   config: SolverConfig | None = None,
                   start: float | None = None,
                   floor: float = LAMBDA_FLOOR,
                   max_calls: int = MAX_SCAN_CALLS) -> float:
    """Smallest lambda (to ~1% relative) at which the estimator has no edges.

    Doubling/halving walk from a data-driven seed brackets the transition,
    then bisection tightens it. If every probed lambda down to ``floor`` gives
    an empty model (zero-signal data), the floor is returned.
    """
    config = config or SolverConfig()
    calls = 0

    def empty(lam: float) -> bool:
        nonlocal calls
        calls += 1
        if calls > max_calls:
            raise GridSearchError(
                f"lambda_sm scan exceeded {max_calls} solver calls"
            )
        return not _has_edges(estimate(cov, spec.with_lambda(lam), config))

    lam = start if start is not None else _default_scan_start(cov)
    lam = max(lam, floor)
    if empty(lam):
        hi = lam
        lo = None
        while hi > floor:
            cand = max(hi / 2.0, floor)
            if not empty(cand):
                lo = cand
                break
            hi = cand
        if lo is None:
            return floor
    else:
        lo = lam
        hi = None
        while calls < max_calls:
            cand = lo * 2.0
            if empty(cand):
                hi = cand
                break
            lo = cand
        if hi is None:
            raise GridSearchError("lambda_sm scan failed to bracket an empty model")

    for _ in range(BISECTION_STEPS):
        if hi - lo <= SCAN_REL_TOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if empty(mid):
            hi = mid
        else:
            lo = mid
    return hi


def build_grid(cov: CovariancePair, spec: PenaltySpec,
               config: SolverConfig | None = None,
               mode: str = "synthetic",
               grid_size: int = 20,
               scan_start: float | None = None) -> LambdaGrid:
    """Log-spaced lambda grid anchored at lambda_sm.

    Synthetic mode spans [lambda_sm/20, lambda_sm/2]; real-data mode spans
    [lambda_sm/5, lambda_sm].
    """
    if mode not in ("synthetic", "real"):
        raise ValueError(f"mode must be 'synthetic' or 'real', got {mode!r}")
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    lambda_sm = find_lambda_sm(cov, spec, config, start=scan_start)
    if mode == "synthetic":
        upper = lambda_sm / 2.0
        lower = upper / 10.0
    else:
        upper = lambda_sm
        lower = upper / 5.0
    points = np.geomspace(lower, upper, grid_size).tolist()
    # Guard against rounding pushing an endpoint past its bound.
    points[0], points[-1] = lower, upper
    return LambdaGrid(lambda_sm, lower, upper, points, grid_size)


@dataclass
class BicCurvePoint:
    lam: float
    bic: float
    edges: int
    objective: float


def select(cov: CovariancePair, spec: PenaltySpec, config: SolverConfig | None,
           grid: LambdaGrid):
    """Estimate along the grid and return the BIC minimizer.

    Returns ``(lambda_star, result_star, curve)`` where ``curve`` holds one
    :class:`BicCurvePoint` per grid point, ascending in lambda. BIC ties break
    toward the larger lambda (sparser model).
    """
    if not grid.points:
        raise ValueError("grid is empty")
    config = config or SolverConfig()
    curve = []
    best = None
    for lam in grid.points:
        result = estimate(cov, spec.with_lambda(lam), config)
        scaled_cov, scaled_delta = rescale_for_bic(cov, result.delta_hat_sym)
        score = bic(scaled_delta, scaled_cov)
        curve.append(BicCurvePoint(lam, score, len(result.edge_set),
                                   result.objective_trace[-1]))
        if best is None or score <= best[1]:
            best = (lam, score, result)
    return best[0], best[2], curve
