import numpy as np
import pytest

from diffgraph.blockmat import BlockMatrix, block_norms
from diffgraph.penalty import (
    PenaltySpec,
    lla_weights,
    redistribution_gradient,
    rho,
    rho_prime,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec("ridge", 1.0)
    with pytest.raises(ValueError):
        PenaltySpec("lasso", 0.0)
    with pytest.raises(ValueError):
        PenaltySpec("scad", 1.0, a=2.0)
    with pytest.raises(ValueError):
        PenaltySpec("logsum", 1.0, epsilon=1.5)


def test_mu_constants():
    assert PenaltySpec("lasso", 1.0).mu() == 0.0
    assert np.isclose(PenaltySpec("scad", 1.0, a=3.7).mu(), 1.0 / 2.7)
    assert np.isclose(PenaltySpec("logsum", 2.0, epsilon=0.001).mu(), 2000.0)


def test_rho_values():
    assert rho(PenaltySpec("lasso", 0.5), -2.0) == 1.0
    assert rho(PenaltySpec("scad", 1.0, a=3.7), 0.5) == 0.5
    # tail branch: lam^2 (a+1)/2 with lam=1, a=3.7
    assert np.isclose(rho(PenaltySpec("scad", 1.0, a=3.7), 10.0), 2.35)
    assert rho(PenaltySpec("logsum", 3.0, epsilon=0.01), 0.0) == 0.0


def test_rho_prime_values():
    assert rho_prime(PenaltySpec("logsum", 1.0, epsilon=0.001), 0.0) == 1.0
    assert rho_prime(PenaltySpec("scad", 1.0, a=3.7), 5.0) == 0.0
    # middle branch (a*lam - u0)/(a - 1) at u0=2
    assert np.isclose(rho_prime(PenaltySpec("scad", 1.0, a=3.7), 2.0), 1.7 / 2.7)
    with pytest.raises(ValueError):
        rho_prime(PenaltySpec("lasso", 1.0), -0.1)


def test_rho_symmetric_and_zero_at_zero():
    rng = np.random.default_rng(0)
    us = rng.uniform(0.0, 5.0, size=50)
    for spec in [PenaltySpec("lasso", 0.7), PenaltySpec("logsum", 0.7),
                 PenaltySpec("scad", 0.7)]:
        assert rho(spec, 0.0) == 0.0
        assert np.allclose(rho(spec, us), rho(spec, -us))


def test_rho_over_u_nonincreasing():
    us = np.logspace(-4, 2, 200)
    for spec in [PenaltySpec("lasso", 1.3), PenaltySpec("logsum", 1.3),
                 PenaltySpec("scad", 1.3)]:
        ratio = rho(spec, us) / us
        assert np.all(np.diff(ratio) <= 1e-12)


def test_rho_plus_quadratic_midpoint_convex():
    us = np.linspace(-6.0, 6.0, 241)
    for spec in [PenaltySpec("lasso", 1.0), PenaltySpec("logsum", 1.0),
                 PenaltySpec("scad", 1.0)]:
        g = rho(spec, us) + 0.5 * spec.mu() * us ** 2
        mid = 0.5 * (g[:-2] + g[2:])
        assert np.all(g[1:-1] <= mid + 1e-9)


def test_rho_prime_matches_finite_differences():
    h = 1e-7
    for spec in [PenaltySpec("lasso", 0.9), PenaltySpec("logsum", 0.9),
                 PenaltySpec("scad", 0.9)]:
        for u in [0.05, 0.4, 1.4, 2.5, 5.0]:
            if spec.kind == "scad":
                # stay away from the branch points lam and a*lam
                if min(abs(u - 0.9), abs(u - 3.33)) < 1e-2:
                    continue
            fd = (rho(spec, u + h) - rho(spec, u - h)) / (2 * h)
            assert abs(fd - rho_prime(spec, u)) <= 1e-5 * max(abs(fd), 1e-8)


def test_scad_continuity_at_branch_points():
    for lam in [0.3, 1.0, 2.5]:
        spec = PenaltySpec("scad", lam, a=3.7)
        for point in [lam, 3.7 * lam]:
            below = rho(spec, point - 1e-12)
            above = rho(spec, point + 1e-12)
            assert abs(below - above) < 1e-11


def test_lla_weights():
    m, p = 2, 3
    zero = BlockMatrix(np.zeros((m * p, m * p)), m)
    assert np.allclose(lla_weights(PenaltySpec("lasso", 0.8), zero), 0.8)
    assert np.allclose(lla_weights(PenaltySpec("logsum", 1.0, epsilon=0.001), zero), 1.0)
    # one block with norm 0.999 -> weight eps/(0.999+eps) = 0.001
    a = np.zeros((m * p, m * p))
    a[0:2, 2:4] = np.array([[0.999, 0.0], [0.0, 0.0]])
    w = lla_weights(PenaltySpec("logsum", 1.0, epsilon=0.001), BlockMatrix(a, m))
    assert np.isclose(w[0, 1], 0.001)
    assert np.isclose(w[1, 0], 1.0)


def test_redistribution_gradient_lasso_and_zero():
    rng = np.random.default_rng(1)
    a = BlockMatrix(rng.standard_normal((6, 6)), 2)
    assert np.array_equal(redistribution_gradient(PenaltySpec("lasso", 1.0), a).data,
                          np.zeros((6, 6)))
    zero = BlockMatrix(np.zeros((6, 6)), 2)
    for kind in ["logsum", "scad"]:
        assert np.array_equal(redistribution_gradient(PenaltySpec(kind, 1.0), zero).data,
                              np.zeros((6, 6)))


def test_redistribution_gradient_scad_middle_branch():
    m = 2
    block = np.array([[1.2, 0.4], [-0.8, 1.1]])
    block = 2.0 * block / np.linalg.norm(block)   # norm exactly 2
    a = np.zeros((4, 4))
    a[0:2, 2:4] = block
    g = redistribution_gradient(PenaltySpec("scad", 1.0, a=3.7), BlockMatrix(a, m))
    factor = 1.7 / 2.7 - 1.0   # rho'(2) - lam = -0.37037...
    assert np.allclose(g.data[0:2, 2:4], factor * block / 2.0, atol=1e-12)
    assert np.allclose(g.data[2:4, 0:2], 0.0)


def test_redistribution_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    m, p = 2, 3
    h = 1e-6
    for kind in ["logsum", "scad"]:
        spec = PenaltySpec(kind, 0.7)
        a = rng.standard_normal((m * p, m * p))
        norms = block_norms(BlockMatrix(a, m))
        # keep every block norm clear of SCAD branch boundaries
        assert np.all(np.abs(norms - 0.7) > 1e-3) and np.all(np.abs(norms - 2.59) > 1e-3)

        def remainder(mat):
            n = block_norms(BlockMatrix(mat, m))
            return float(np.sum(rho(spec, n) - spec.lam * n))

        g = redistribution_gradient(spec, BlockMatrix(a, m)).data
        for idx in [(0, 0), (1, 3), (4, 2), (5, 5)]:
            e = np.zeros_like(a)
            e[idx] = h
            fd = (remainder(a + e) - remainder(a - e)) / (2 * h)
            assert abs(fd - g[idx]) < 1e-5
