import math

import numpy as np
import pytest

from nestedpd.core import (CompositeProblem, DimensionError, adjoint_consistency_check, as_vector,
                           difference_operator, estimate_operator_norm, identity_operator,
                           least_squares, matrix_operator, objective, squared_distance)
from nestedpd.proxlib import box_indicator, l1_norm, nonnegative_indicator, zero_term


def test_as_vector_rejects_nonfinite_and_wrong_length():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(DimensionError):
        as_vector([1.0, 2.0], dim=3)
    with pytest.raises(DimensionError):
        as_vector(np.ones((2, 2)))
    assert as_vector(3.0).tolist() == [3.0]


class TestObjective:
    def test_quadratic_minimizer(self):
        p = CompositeProblem(squared_distance([1.0, 0.0]), zero_term(2), zero_term(2), identity_operator(2))
        assert objective(p, [1.0, 0.0]) == 0.0

    def test_infeasible_indicator(self):
        p = CompositeProblem(squared_distance([0.0]), zero_term(1), nonnegative_indicator(1),
                             identity_operator(1))
        assert objective(p, [-1.0]) == math.inf

    def test_all_three_terms(self):
        p = CompositeProblem(squared_distance([2.0]), l1_norm(1.0), zero_term(1), identity_operator(1))
        assert objective(p, [1.0]) == pytest.approx(1.5, abs=1e-15)

    def test_dimension_mismatch_names_component(self):
        with pytest.raises(DimensionError, match="^f "):
            CompositeProblem(squared_distance([0.0, 0.0]), zero_term(), zero_term(), identity_operator(3))
        with pytest.raises(DimensionError, match="^g "):
            CompositeProblem(squared_distance([0.0, 0.0, 0.0]), zero_term(5), zero_term(),
                             difference_operator(3))
        with pytest.raises(DimensionError, match="^h "):
            CompositeProblem(squared_distance([0.0, 0.0, 0.0]), zero_term(), box_indicator([0, 0], [1, 1]),
                             identity_operator(3))
        p = CompositeProblem(squared_distance([0.0, 0.0]), zero_term(), zero_term(), identity_operator(2))
        with pytest.raises(DimensionError, match="^u "):
            objective(p, [1.0, 2.0, 3.0])


class TestAdjointCheck:
    def test_identity(self):
        assert adjoint_consistency_check(identity_operator(2), trials=10, seed=0) == 0.0

    def test_explicit_matrix(self):
        assert adjoint_consistency_check(matrix_operator([[1, 2], [3, 4]]), 50, seed=1) <= 1e-12

    def test_wrong_adjoint_detected(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        bad = matrix_operator(M, adjoint=M)  # M is not symmetric
        assert adjoint_consistency_check(bad, 20, seed=2) > 0.1

    @pytest.mark.parametrize("op", [identity_operator(4), matrix_operator(np.arange(12.0).reshape(3, 4)),
                                    difference_operator(7)], ids=["identity", "matrix", "difference"])
    def test_shipped_operators(self, op):
        assert adjoint_consistency_check(op, trials=100, seed=3) <= 1e-10


class TestOperatorNorm:
    def test_identity(self):
        assert estimate_operator_norm(identity_operator(3), 10, seed=0) == pytest.approx(1.0, abs=1e-9)

    def test_diagonal(self):
        assert estimate_operator_norm(matrix_operator(np.diag([3.0, 1.0])), 100, seed=0) == \
            pytest.approx(3.0, abs=1e-6)

    def test_difference_against_svd(self):
        D = difference_operator(5)
        dense = D.to_dense()
        assert dense.shape == (4, 5)
        svd = np.linalg.svd(dense, compute_uv=False)[0]
        est = estimate_operator_norm(D, 2000, seed=4)
        assert 1.7 < est < 2.0
        assert est == pytest.approx(svd, rel=1e-8)
        assert est <= D.norm_bound * (1 + 1e-9)

    def test_zero_operator(self):
        assert estimate_operator_norm(matrix_operator(np.zeros((2, 3)), norm_bound=1.0), 5) == 0.0

    def test_deterministic(self):
        D = difference_operator(9)
        assert estimate_operator_norm(D, 7, seed=5) == estimate_operator_norm(D, 7, seed=5)

    @pytest.mark.parametrize("seed", range(5))
    def test_never_exceeds_bound(self, seed):
        M = np.random.default_rng(seed).standard_normal((4, 6))
        op = matrix_operator(M)
        assert estimate_operator_norm(op, 3, seed=seed) <= op.norm_bound * (1 + 1e-9)

    @pytest.mark.parametrize("op", [identity_operator(4), matrix_operator(np.arange(12.0).reshape(3, 4)),
                                    difference_operator(7)])
    def test_bound_holds_on_samples(self, op, rng):
        for _ in range(50):
            u = rng.standard_normal(op.in_dim)
            assert np.linalg.norm(op.apply(u)) <= op.norm_bound * np.linalg.norm(u) * (1 + 1e-12)


def _smooth_terms():
    rng = np.random.default_rng(99)
    return [squared_distance(rng.standard_normal(6)),
            least_squares(rng.standard_normal((8, 6)), rng.standard_normal(8)),
            least_squares(rng.standard_normal((4, 6)), rng.standard_normal(4))]


@pytest.mark.parametrize("f", _smooth_terms(), ids=["sqdist", "lsq-tall", "lsq-wide"])
class TestSmoothTerms:
    def test_gradient_matches_central_differences(self, f):
        rng = np.random.default_rng(0)
        h = 1e-6
        for _ in range(20):
            u = rng.standard_normal(f.dim)
            fd = np.array([(f.value(u + h * e) - f.value(u - h * e)) / (2 * h) for e in np.eye(f.dim)])
            g = f.gradient(u)
            assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)

    def test_lipschitz_and_strong_convexity(self, f):
        rng = np.random.default_rng(1)
        for _ in range(100):
            u, v = rng.standard_normal((2, f.dim))
            dg = f.gradient(u) - f.gradient(v)
            assert np.linalg.norm(dg) <= f.lipschitz * np.linalg.norm(u - v) * (1 + 1e-12)
            if f.strong_convexity:
                assert np.dot(dg, u - v) >= f.strong_convexity * np.dot(u - v, u - v) * (1 - 1e-10)

    def test_firm_nonexpansiveness(self, f):
        rng = np.random.default_rng(2)
        for _ in range(100):
            u, v = rng.standard_normal((2, f.dim))
            dg = f.gradient(u) - f.gradient(v)
            assert np.dot(dg, dg) <= f.lipschitz * np.dot(dg, u - v) + 1e-10


def test_operator_immutable_matrix():
    M = np.eye(2)
    op = matrix_operator(M)
    M[0, 0] = 5.0
    assert op.apply(np.array([1.0, 0.0]))[0] == 1.0
