"""Differential graph estimation for multi-attribute Gaussian graphical models.

Estimates the difference of two precision matrices by penalized D-trace loss
with lasso, log-sum or SCAD block penalties, via proximal gradient descent.
"""

from .blockmat import (
    BlockMatrix,
    EdgeSet,
    block_norms,
    bvec,
    bvec_inverse,
    edges_from,
    symmetrize,
    tracy_singh,
)
from .loss import (
    CovariancePair,
    dtrace_gradient,
    dtrace_loss,
    lipschitz_lla,
    lipschitz_redistributed,
    penalized_objective,
    prox_block_l2,
    sample_covariance,
)
from .metrics import EvalReport, aggregate, evaluate
from .modelsel import LambdaGrid, bic, build_grid, find_lambda_sm, rescale_for_bic, select
from .penalty import PenaltySpec, lla_weights, redistribution_gradient, rho, rho_prime
from .solver import (
    EstimationResult,
    SolverConfig,
    estimate,
    pgd_lla,
    pgd_redistributed,
)
from .synth import SyntheticModel, gen_delta, gen_graph, gen_omega_x, generate_model, make_pd, sample
from .theory import (
    TheoryConstants,
    compute_constants,
    loss_lower_bound,
    rsc_check,
    stationarity_gap,
    theorem1_conditions,
    theorem2_convexity,
)

__version__ = "0.1.0"
