import numpy as np
import pytest

from diffgraph.blockmat import BlockMatrix
from diffgraph.loss import CovariancePair, penalized_objective, sample_covariance
from diffgraph.penalty import PenaltySpec
from diffgraph.solver import (
    ALG_LLA,
    ALG_REDISTRIBUTION,
    EstimationResult,
    SolverConfig,
    SolverDivergenceError,
    estimate,
    pgd_lla,
    pgd_redistributed,
)
from diffgraph.synth import generate_model, sample

from oracles import cd_lasso_dtrace, dtrace_objective_scalar, random_psd


def toy_cov(seed=0, m=2, p=4, n=500):
    model = generate_model("er", p, m, seed, p_er=0.6, p_er_delta=0.4)
    x = sample(model, n, rng=np.random.default_rng([seed, 1]), which="x")
    y = sample(model, n, rng=np.random.default_rng([seed, 2]), which="y")
    cov = CovariancePair(sample_covariance(x, m), sample_covariance(y, m), n, n)
    return model, cov


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(i_max=0)
    with pytest.raises(ValueError):
        SolverConfig(delta_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(lla_rounds=0)
    with pytest.raises(ValueError):
        SolverConfig(algorithm="admm")
    with pytest.raises(ValueError):
        SolverConfig(step_policy="backtracking")


def test_equal_covariances_give_zero():
    rng = np.random.default_rng(0)
    s = random_psd(rng, 6)
    cov = CovariancePair(BlockMatrix(s, 2), BlockMatrix(s.copy(), 2), 50, 50)
    for kind in ["lasso", "logsum", "scad"]:
        res = estimate(cov, PenaltySpec(kind, 0.2))
        assert np.count_nonzero(res.delta_hat_sym.data) == 0
        assert len(res.edge_set) == 0
        assert res.converged


def test_lasso_matches_coordinate_descent_oracle():
    for seed in range(3):
        model, cov = toy_cov(seed=seed, m=1, p=3, n=800)
        sx, sy = cov.sigma_x.data, cov.sigma_y.data
        lam = 0.06
        ref = cd_lasso_dtrace(sx, sy, lam, tol=1e-12)
        res = estimate(cov, PenaltySpec("lasso", lam),
                       SolverConfig(delta_tol=1e-12, i_max=100000))
        got = res.delta_hat_raw.data
        obj_ref = dtrace_objective_scalar(ref, sx, sy, lam)
        obj_got = dtrace_objective_scalar(got, sx, sy, lam)
        assert obj_got <= obj_ref + 1e-6
        assert (got != 0).astype(int).tolist() == (ref != 0).astype(int).tolist()


def test_lla_equals_redistribution_for_lasso():
    _, cov = toy_cov(seed=1)
    spec = PenaltySpec("lasso", 0.1)
    a = pgd_lla(cov, spec, SolverConfig())
    b = pgd_redistributed(cov, spec, SolverConfig())
    assert np.linalg.norm(a.delta_hat_sym.data - b.delta_hat_sym.data) <= 1e-4


def test_descent_every_inner_trace():
    for seed in range(3):
        _, cov = toy_cov(seed=seed)
        for kind in ["lasso", "logsum", "scad"]:
            res = estimate(cov, PenaltySpec(kind, 0.1))
            for trace in res.inner_traces:
                diffs = np.diff(np.asarray(trace))
                assert np.all(diffs <= 1e-10)


def test_determinism():
    _, cov = toy_cov(seed=2)
    spec = PenaltySpec("scad", 0.08)
    a = estimate(cov, spec, SolverConfig())
    b = estimate(cov, spec, SolverConfig())
    assert np.array_equal(a.delta_hat_sym.data, b.delta_hat_sym.data)
    assert a.objective_trace == b.objective_trace
    assert a.iterations == b.iterations


def test_default_routing_and_override():
    _, cov = toy_cov(seed=3)
    assert estimate(cov, PenaltySpec("lasso", 0.1)).algorithm == ALG_REDISTRIBUTION
    assert estimate(cov, PenaltySpec("logsum", 0.1)).algorithm == ALG_LLA
    assert estimate(cov, PenaltySpec("scad", 0.1)).algorithm == ALG_REDISTRIBUTION
    forced = estimate(cov, PenaltySpec("scad", 0.1), SolverConfig(algorithm="lla"))
    assert forced.algorithm == ALG_LLA
    direct = pgd_lla(cov, PenaltySpec("scad", 0.1), SolverConfig())
    assert np.array_equal(forced.delta_hat_sym.data, direct.delta_hat_sym.data)


def test_result_invariants():
    _, cov = toy_cov(seed=4)
    config = SolverConfig(i_max=37)
    res = estimate(cov, PenaltySpec("logsum", 0.15), config)
    sym = res.delta_hat_sym.data
    assert np.max(np.abs(sym - sym.T)) == 0.0
    assert res.iterations <= 37
    assert res.total_iterations == sum(len(t) - 1 for t in res.inner_traces)
    assert res.wall_time > 0


def test_scad_fixed_point_instance():
    # Build sigma_y = (I + delta0)^(-1) so that grad L(delta0) = 0 exactly;
    # with every nonzero block norm above a*lam the redistributed gradient
    # cancels the prox shrinkage and delta0 is an exact fixed point.
    m, p = 2, 3
    rng = np.random.default_rng(5)
    delta0 = np.zeros((m * p, m * p))
    delta0[0:2, 0:2] = 4.0 * np.eye(2)
    delta0[2:4, 2:4] = 4.0 * np.eye(2)
    delta0[4:6, 4:6] = 4.0 * np.eye(2)
    blk = rng.uniform(0.5, 1.0, size=(2, 2))
    delta0[0:2, 2:4] = blk
    delta0[2:4, 0:2] = blk.T
    sx = np.eye(m * p)
    sy = np.linalg.inv(np.eye(m * p) + delta0)
    sy = (sy + sy.T) / 2
    cov = CovariancePair(BlockMatrix(sx, m), BlockMatrix(sy, m), 100, 100)
    lam = 0.01
    spec = PenaltySpec("scad", lam, a=3.7)
    from diffgraph.blockmat import block_norms
    norms = block_norms(BlockMatrix(delta0, m))
    assert np.all(norms[norms > 0] > 3.7 * lam)
    config = SolverConfig(algorithm="redistribution", warm_start=delta0, i_max=1)
    res = pgd_redistributed(cov, spec, config)
    moved = np.max(np.abs(res.delta_hat_raw.data - delta0))
    assert moved <= 1e-12


def test_supplied_warm_start_and_validation():
    _, cov = toy_cov(seed=6)
    good = np.zeros((cov.side, cov.side))
    res = estimate(cov, PenaltySpec("lasso", 0.1), SolverConfig(warm_start=good))
    assert res.converged
    with pytest.raises(ValueError):
        estimate(cov, PenaltySpec("lasso", 0.1),
                 SolverConfig(warm_start=np.zeros((3, 3))))
    with pytest.raises(ValueError):
        estimate(cov, PenaltySpec("lasso", 0.1), SolverConfig(warm_start="garbage"))


def test_divergence_error_on_bad_start():
    _, cov = toy_cov(seed=7)
    bad = np.full((cov.side, cov.side), np.nan)
    with pytest.raises(SolverDivergenceError):
        estimate(cov, PenaltySpec("lasso", 0.1), SolverConfig(warm_start=bad))


def test_tiny_step_warning_for_logsum_redistribution():
    _, cov = toy_cov(seed=8)
    spec = PenaltySpec("logsum", 1.0, epsilon=1e-9)
    with pytest.warns(RuntimeWarning):
        pgd_redistributed(cov, spec, SolverConfig(i_max=2))


def test_trace_csv(tmp_path):
    _, cov = toy_cov(seed=9)
    path = tmp_path / "trace.csv"
    config = SolverConfig(trace_path=str(path))
    res = estimate(cov, PenaltySpec("lasso", 0.1), config)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,objective,max_block_change,active_blocks"
    assert len(lines) == 1 + res.total_iterations


def test_objective_trace_values_match_penalized_objective():
    _, cov = toy_cov(seed=10)
    spec = PenaltySpec("scad", 0.12)
    res = pgd_redistributed(cov, spec, SolverConfig())
    # final trace entry is the full penalized objective at the raw iterate
    expect = penalized_objective(res.delta_hat_raw, cov, spec)
    assert np.isclose(res.objective_trace[-1], expect, atol=1e-10)
