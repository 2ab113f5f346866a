import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nestedpd.core import adjoint_consistency_check, difference_operator, estimate_operator_norm
from nestedpd.innerloop import dual_fixed_point_converged
from nestedpd.problems import (INSTANCES, make_fused_lasso, make_instance,
                               make_strongly_convex_rate_instance, make_tv_denoise_1d, taut_string_tv)
from nestedpd.proxlib import l1_norm, prox_l1, zero_term
from nestedpd.solver import optimality_residuals


def tv_by_dual(b, lam, beta_factor=1.0):
    d = len(b)
    D = difference_operator(d)
    res = dual_fixed_point_converged(zero_term(d), l1_norm(lam, dim=d - 1), D, np.asarray(b, float), 1.0,
                                     beta_factor / 4, tol=1e-13, max_iter=2_000_000)
    assert res.converged
    return res.prox_point


def tv_objective(u, b, lam):
    return 0.5 * np.sum((u - b) ** 2) + lam * np.sum(np.abs(np.diff(u)))


class TestTautString:
    def test_constant_input(self):
        b = np.full(6, 1.7)
        np.testing.assert_array_equal(taut_string_tv(b, 3.0), b)

    def test_no_regularization(self):
        b = np.array([0.3, -1.0, 2.0])
        np.testing.assert_array_equal(taut_string_tv(b, 0.0), b)

    def test_three_point_spike(self):
        # at lam = 1 the spike is fully flattened to the mean
        out = taut_string_tv([0.0, 3.0, 0.0], 1.0)
        np.testing.assert_allclose(out, [1.0, 1.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(tv_by_dual([0.0, 3.0, 0.0], 1.0), out, atol=1e-8)

    def test_three_point_spike_partial(self):
        out = taut_string_tv([0.0, 3.0, 0.0], 1.0 / 3.0)
        np.testing.assert_allclose(out, [1 / 3, 7 / 3, 1 / 3], atol=1e-14)
        np.testing.assert_allclose(tv_by_dual([0.0, 3.0, 0.0], 1.0 / 3.0), out, atol=1e-8)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            taut_string_tv([1.0, 2.0], -1.0)

    def test_edge_sizes(self):
        assert taut_string_tv(np.array([]), 1.0).size == 0
        assert taut_string_tv([2.5], 1.0).tolist() == [2.5]

    def test_agrees_with_converged_dual(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            d = int(rng.integers(2, 30))
            b = rng.uniform(-3, 3, d)
            lam = float(rng.uniform(0.01, 2.0))
            assert np.max(np.abs(taut_string_tv(b, lam) - tv_by_dual(b, lam))) <= 1e-8

    @pytest.mark.parametrize("factor", [0.5, 1.9])
    def test_oracle_independent_of_dual_step(self, tv, factor):
        np.testing.assert_allclose(tv_by_dual(tv.data, 1.0, factor), tv.oracle_solution, atol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(b=arrays(float, st.integers(2, 25), elements=st.floats(-5, 5)), lam=st.floats(1e-3, 5))
    def test_optimal_against_perturbations(self, b, lam):
        u = taut_string_tv(b, lam)
        best = tv_objective(u, b, lam)
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert best <= tv_objective(u + 1e-3 * rng.standard_normal(b.size), b, lam) + 1e-12

    def test_against_generic_convex_solver(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(77)
        for _ in range(5):
            d = int(rng.integers(3, 25))
            b = rng.uniform(-2, 2, d)
            lam = float(rng.uniform(0.05, 1.5))
            x = cp.Variable(d)
            cp.Problem(cp.Minimize(0.5 * cp.sum_squares(x - b) + lam * cp.norm1(cp.diff(x)))).solve(
                solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
            assert np.max(np.abs(taut_string_tv(b, lam) - x.value)) <= 1e-6


class TestTVInstance:
    def test_constants(self, tv):
        c = tv.constants
        assert (c.L, c.mu, c.norm_A) == (1.0, 1.0, 2.0)
        svd = np.linalg.svd(tv.problem.A.to_dense(), compute_uv=False)
        assert c.sigma == pytest.approx(svd[-1], abs=1e-10)
        assert svd[0] < c.norm_A
        assert tv.documented_budget > 0

    def test_vanishing_regularization(self):
        inst = make_tv_denoise_1d(lam=1e-12)
        assert np.max(np.abs(inst.oracle_solution - inst.data)) <= 1e-10

    def test_huge_regularization(self):
        inst0 = make_tv_denoise_1d()
        b = inst0.data
        lam = b.size * np.max(np.abs(b - b.mean()))
        inst = make_tv_denoise_1d(lam=lam)
        np.testing.assert_allclose(inst.oracle_solution, np.full(b.size, b.mean()), atol=1e-12)

    def test_default_solution_flattens(self, tv):
        u = tv.oracle_solution
        tvnorm = lambda x: np.sum(np.abs(np.diff(x)))
        assert tvnorm(u) < tvnorm(tv.data)
        assert np.sum(np.abs(np.diff(u)) > 1e-9) < tv.problem.dim - 1

    def test_signal_is_seeded(self):
        a, b = make_tv_denoise_1d(seed=3), make_tv_denoise_1d(seed=3)
        assert a.data.tobytes() == b.data.tobytes()
        assert not np.array_equal(a.data, make_tv_denoise_1d(seed=4).data)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            make_tv_denoise_1d(d=1)
        with pytest.raises(ValueError):
            make_tv_denoise_1d(lam=0.0)


class TestFusedLasso:
    def test_oracle_matches_soft_threshold_of_tv(self, fused):
        # the fused-lasso prox factors as soft threshold after TV denoising
        lam1, lam2 = fused.params["lam1"], fused.params["lam2"]
        expected = prox_l1(taut_string_tv(fused.data, lam1), lam2)
        assert np.max(np.abs(fused.oracle_solution - expected)) <= 1e-10

    def test_no_fusion_penalty(self):
        inst = make_fused_lasso(lam1=0.0)
        assert inst.problem.g.is_zero
        np.testing.assert_allclose(inst.oracle_solution, prox_l1(inst.data, 0.5), atol=1e-12)

    def test_no_sparsity_penalty(self):
        inst = make_fused_lasso(lam2=0.0)
        assert inst.problem.h.is_zero
        tv = make_tv_denoise_1d(d=15, lam=0.5, b=inst.data)
        np.testing.assert_allclose(inst.oracle_solution, tv.oracle_solution, atol=1e-10)

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            make_fused_lasso(lam1=-0.1)


class TestRateInstance:
    def test_identity_zero_data(self):
        inst = make_strongly_convex_rate_instance(d=3, A=np.eye(3), b=np.zeros(3))
        assert np.all(inst.oracle_solution == 0) and np.all(inst.oracle_dual == 0)

    def test_identity_scalar(self):
        inst = make_strongly_convex_rate_instance(d=1, A=np.eye(1), b=[2.0])
        assert inst.oracle_solution[0] == pytest.approx(1.5, abs=1e-12)

    def test_constants_match_svd(self, sc):
        sv = np.linalg.svd(sc.problem.A.to_dense(), compute_uv=False)
        assert sc.constants.norm_A == pytest.approx(sv[0], abs=1e-10)
        assert sc.constants.sigma == pytest.approx(sv[-1], abs=1e-10)
        assert 1.0 <= sv[-1] and sv[0] <= 2.0
        assert sc.supports_rate_check

    def test_oracle_against_bounded_least_squares(self, sc):
        # dual of 0.5||u-b||^2 + w||Au||_1 is a box-constrained least-squares problem in v
        from scipy.optimize import lsq_linear
        w = sc.params["weight"]
        At = sc.problem.A.to_dense().T
        v = lsq_linear(At, sc.data, bounds=(-w, w), method="bvls", tol=1e-14).x
        np.testing.assert_allclose(sc.oracle_solution, sc.data - At @ v, atol=1e-9)
        np.testing.assert_allclose(sc.oracle_dual, v, atol=1e-9)


@pytest.mark.parametrize("name", sorted(INSTANCES))
class TestShippedInvariants:
    def test_oracle_residuals(self, shipped, name):
        inst = shipped[name]
        for alpha, beta in [(1.0, 0.9 / inst.constants.norm_A**2), (0.5, 0.1)]:
            r = optimality_residuals(inst.problem, inst.oracle_solution, inst.oracle_dual, alpha, beta)
            assert max(r) <= 1e-8

    def test_smooth_constants(self, shipped, name):
        f = shipped[name].problem.f
        c = shipped[name].constants
        assert f.lipschitz == c.L and f.strong_convexity == c.mu
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, v = 3 * rng.standard_normal((2, f.dim))
            dg = f.gradient(u) - f.gradient(v)
            assert np.linalg.norm(dg) <= c.L * np.linalg.norm(u - v) * (1 + 1e-12)
            assert np.dot(dg, u - v) >= c.mu * np.dot(u - v, u - v) * (1 - 1e-12)

    def test_operator(self, shipped, name):
        A = shipped[name].problem.A
        assert adjoint_consistency_check(A, 100, seed=1) <= 1e-10
        assert estimate_operator_norm(A, 500, seed=1) <= shipped[name].constants.norm_A * (1 + 1e-9)
        assert A.norm_bound == shipped[name].constants.norm_A

    def test_reproducible(self, shipped, name):
        again = make_instance(name)
        assert again.oracle_solution.tobytes() == shipped[name].oracle_solution.tobytes()
        assert again.data.tobytes() == shipped[name].data.tobytes()

    def test_describe(self, shipped, name):
        desc = shipped[name].describe()
        assert desc["name"] == name and desc["constants"]["L"] == 1.0


def test_registry_errors():
    with pytest.raises(ValueError, match="unknown instance"):
        make_instance("nope")
    with pytest.raises(ValueError, match="unknown parameters"):
        make_instance("tv-1d", width=3)
