import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import vandermonde_solve
from sigfair.ipm import EmptyGroup, GroupedBatch
from sigfair.metrics import ScoredBatch, delta_mdp
from sigfair.theory import (DegreeTooLarge, moment_gap, multivariate_witness, projected_cdf_gap,
                            all_passed, vandermonde_witness, verify_suite,
                            witness_residual)

PAIRS = [(r1, r - r1) for r in range(2, 13) for r1 in range(1, r)]


class TestVandermonde:
    def test_one_one(self):
        w = vandermonde_witness(1, 1)
        assert np.allclose(w.lambdas, [-1, 0, 1])
        assert np.allclose(w.betas, [-0.25, 0.0, 0.25], atol=1e-15)
        lam, beta = vandermonde_solve(1, 1)
        assert np.allclose(w.betas, beta, atol=1e-12)

    @pytest.mark.parametrize("r1, r2", [p for p in PAIRS if sum(p) <= 8])
    def test_agrees_with_linear_solve(self, r1, r2):
        _, beta = vandermonde_solve(r1, r2)
        w = vandermonde_witness(r1, r2)
        assert np.allclose(w.betas, beta, rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("r1, r2", PAIRS)
    def test_identity_and_bound(self, r1, r2):
        w = vandermonde_witness(r1, r2)
        pts = np.random.default_rng(r1 * 13 + r2).uniform(-1, 1, size=(100, 2))
        assert witness_residual(w, pts) < 1e-8
        assert np.abs(w.betas).sum() < math.exp(w.r)

    def test_degree_guard(self):
        with pytest.raises(DegreeTooLarge):
            vandermonde_witness(6, 7)
        w = vandermonde_witness(6, 7, allow_unverified=True)
        assert not w.verified

    def test_bad_exponent(self):
        with pytest.raises(ValueError):
            vandermonde_witness(0, 2)

    def test_flipped_sign_breaks_identity(self):
        w = vandermonde_witness(2, 3)
        w.betas[0] = -w.betas[0]
        pts = np.random.default_rng(0).uniform(-1, 1, size=(100, 2))
        assert witness_residual(w, pts) > 1e-3


class TestMultivariate:
    def test_base_case(self):
        w = multivariate_witness([3])
        assert np.array_equal(w.betas, [1.0]) and np.array_equal(w.directions, [[1.0]])

    @pytest.mark.parametrize("r1, r2", [(1, 1), (2, 3), (4, 1)])
    def test_two_dims_reduce_to_univariate(self, r1, r2):
        m = multivariate_witness([r1, r2])
        u = vandermonde_witness(r1, r2)
        assert np.array_equal(m.betas, u.betas)
        assert np.array_equal(m.directions[:, 1], u.lambdas)
        assert np.all(m.directions[:, 0] == 1.0)

    def test_three_ones(self):
        w = multivariate_witness([1, 1, 1])
        Z = np.random.default_rng(0).uniform(-1, 1, size=(100, 3))
        assert witness_residual(w, Z) < 1e-6
        assert np.abs(w.betas).sum() <= math.exp(2 * 3)
        assert np.all(np.abs(w.directions) <= 1.0)

    def test_size_guard(self):
        with pytest.raises(DegreeTooLarge):
            multivariate_witness([1, 1, 1, 1, 1])
        with pytest.raises(DegreeTooLarge):
            multivariate_witness([5, 4])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=1, max_size=4).filter(lambda e: sum(e) <= 8))
    def test_identity_property(self, exps):
        w = multivariate_witness(exps)
        Z = np.random.default_rng(sum(exps)).uniform(-1, 1, size=(50, len(exps)))
        assert witness_residual(w, Z) < 1e-6
        assert np.abs(w.betas).sum() <= math.exp((len(exps) - 1) * w.r)


class TestProjectedCdfGap:
    def test_identical_zero(self):
        z = np.random.default_rng(0).normal(size=(20, 3))
        assert projected_cdf_gap(GroupedBatch(z, z[::-1])) == 0.0

    def test_disjoint_points(self):
        assert projected_cdf_gap(GroupedBatch([[-2.0]], [[2.0]])) == 1.0

    def test_nested_directions_monotone(self):
        rng = np.random.default_rng(1)
        b = GroupedBatch(rng.normal(size=(30, 3)), rng.normal(size=(25, 3)) + 0.3)
        vals = [projected_cdf_gap(b, n_directions=k, seed=5) for k in (1, 2, 4, 8, 16, 32)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))

    def test_quantile_thresholds_bounded_by_exact(self):
        rng = np.random.default_rng(2)
        b = GroupedBatch(rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 0.5)
        assert projected_cdf_gap(b, n_thresholds=16) <= projected_cdf_gap(b) + 1e-15

    def test_empty(self):
        with pytest.raises(EmptyGroup):
            projected_cdf_gap(GroupedBatch(np.zeros((0, 2)), np.ones((3, 2))))


class TestMomentGap:
    def test_first_and_second_moment(self):
        b = GroupedBatch([[0.0], [2.0]], [[1.0], [1.0]])
        assert moment_gap(b, [1]) == 0.0
        assert moment_gap(b, [2]) == pytest.approx(1.0)

    def test_identical_zero(self):
        z = np.random.default_rng(0).normal(size=(10, 2))
        assert moment_gap(GroupedBatch(z, z.copy()), [2, 1]) == 0.0

    def test_first_moment_is_identity_mdp(self):
        rng = np.random.default_rng(3)
        z0, z1 = rng.normal(size=(7, 3)), rng.normal(size=(9, 3))
        b = GroupedBatch(z0, z1)
        scores = ScoredBatch(np.r_[z0[:, 1], z1[:, 1]], np.r_[np.zeros(7), np.ones(9)])
        assert moment_gap(b, [0, 1, 0]) == pytest.approx(delta_mdp(scores, "identity"), abs=1e-15)

    def test_guards(self):
        b = GroupedBatch([[1.0]], [[2.0]])
        with pytest.raises(ValueError):
            moment_gap(b, [1, 1])
        with pytest.raises(DegreeTooLarge):
            moment_gap(b, [9])


@pytest.fixture(scope="module")
def suite():
    return verify_suite(seed=0)


class TestVerifySuite:
    def test_all_checks_pass(self, suite):
        failed = [e["check_id"] for e in suite if e["status"] != "pass"]
        assert failed == [] and all_passed(suite)

    def test_entries_are_complete(self, suite):
        ids = [e["check_id"] for e in suite]
        assert len(ids) == len(set(ids))
        assert {"witness.univariate.identity", "deviance.identical_groups_zero"} <= set(ids)
        for e in suite:
            assert set(e) == {"check_id", "status", "measured", "threshold"}

    def test_injected_failure_is_caught(self):
        report = verify_suite(seed=0, inject_failure=True)
        status = {e["check_id"]: e["status"] for e in report}
        assert status["witness.univariate.identity"] == "fail"
        assert not all_passed(report)
