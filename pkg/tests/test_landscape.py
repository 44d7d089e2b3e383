import numpy as np
import pytest

from biasflow import landscape as ls
from biasflow import shallow as sh
from biasflow.piecewise import PiecewisePolynomial as PP

from conftest import convex_target_problem, linear_target_problem, random_params


class TestClassify:
    def test_global_minimum_non_descending(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0], [1.0], [0.0], 0.0)
        rep = ls.classify(p, data)
        # exact 2x2 Hessian [[2, 2], [2, 2]]: eigenvalues {0, 4}
        assert rep.is_critical
        assert rep.classification == ls.NON_DESCENDING
        assert rep.min_trainable_eigenvalue == pytest.approx(0.0, abs=1e-12)

    def test_coincident_kinks_descending(self):
        # two relu neurons sharing a kink strictly below a strictly convex
        # target, balanced to be critical: v = (2.5, 2.5), kink 0.5,
        # c = mean of f over (1/2, 1) minus 2.5/2 = 25/12 - 5/4 = 5/6
        data = convex_target_problem()
        c = 25.0 / 12.0 - 5.0 / 4.0
        p = sh.ShallowParams("relu", [2.5, 2.5], [1.0, 1.0], [0.5, 0.5], c)
        rep = ls.classify(p, data)
        assert rep.is_critical
        assert rep.classification == ls.DESCENDING
        # min eigenvalue = 2 v (N(kink) - f(kink)) p(kink) = -25/12
        assert rep.min_trainable_eigenvalue == pytest.approx(-25.0 / 12.0, abs=1e-10)

    def test_noncritical_still_reports(self, rng):
        data = linear_target_problem()
        p = random_params("clipping", 3, rng, data)
        rep = ls.classify(p, data)
        assert not rep.is_critical
        assert np.isfinite(rep.limit_risk_bound)
        assert len(rep.endpoint_bounds) == 2

    def test_permutation_invariance(self, rng):
        data = linear_target_problem()
        p = random_params("clipping", 5, rng, data)
        perm = rng.permutation(5)
        q = sh.ShallowParams(
            "clipping", p.outer_weights[perm], p.inner_weights[perm],
            p.inner_biases[perm], p.outer_bias)
        rp, rq = ls.classify(p, data), ls.classify(q, data)
        assert rp.gradient_norm == pytest.approx(rq.gradient_norm, rel=1e-12)
        assert rp.min_trainable_eigenvalue == pytest.approx(
            rq.min_trainable_eigenvalue, rel=1e-9, abs=1e-12)
        assert rp.classification == rq.classification
        assert rp.sum_overlapping_outer == pytest.approx(rq.sum_overlapping_outer)


class TestNestedness:
    def test_single_neuron(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0], [1.0], [0.0], 0.0)
        assert ls.nestedness_check(p, data)

    def test_staggered_intervals_fail(self):
        # intervals (0, 0.6) and (0.3, 0.9): overlapping, not nested
        data = linear_target_problem()
        w = np.array([1.0 / 0.6, 1.0 / 0.6])
        biases = np.array([0.0, -0.3 * w[1]])
        p = sh.ShallowParams("clipping", [1.0, 1.0], w, biases, 0.0)
        assert not ls.nestedness_check(p, data)

    def test_nested_pass(self):
        data = linear_target_problem()
        # (0, 1) contains (0.25, 0.75)
        p = sh.ShallowParams("clipping", [0.2, 0.3], [1.0, 2.0],
                             [0.0, -0.5], 0.0)
        assert ls.nestedness_check(p, data)

    def test_relu_half_lines_always_nested(self, rng):
        data = convex_target_problem()
        p = random_params("relu", 6, rng, data)
        assert ls.nestedness_check(p, data)


class TestOverlapSup:
    def test_all_empty(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0, 1.0], [1.0, 1.0],
                             [-3.0, -4.0], 0.0)
        assert ls.overlapping_outer_weight_sup(p, data) == 0.0

    def test_two_nested(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [0.2, 0.3], [1.0, 2.0],
                             [0.0, -0.5], 0.0)
        assert ls.overlapping_outer_weight_sup(p, data) == pytest.approx(0.5)

    def test_theorem_rhs_value(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [0.2, 0.3], [1.0, 2.0],
                             [0.0, -0.5], 0.0)
        b = ls.bounds_at_limit(p, data)
        assert b["V"] == pytest.approx(0.5)
        # 2 V^2 + (f(b) - f(a)) V with mass 1: 0.5 + 0.5 = 1.0
        assert b["theorem_2_25_rhs"] == pytest.approx(1.0)

    def test_sliver_filter(self):
        data = linear_target_problem()
        # second interval has width 1e-6: filtered out at 1e-3 mass fraction
        w = np.array([1.0, 1e6])
        p = sh.ShallowParams("clipping", [0.2, 0.3], w, [0.0, -0.5 * 1e6], 0.0)
        assert ls.overlapping_outer_weight_sup(p, data) == pytest.approx(0.5)
        assert ls.overlapping_outer_weight_sup(p, data, 1e-3) == pytest.approx(0.2)


class TestBoundsAtLimit:
    def test_cor_3_7_rhs(self):
        data = convex_target_problem()
        p = sh.ShallowParams("relu", [0.5, 0.2], [1.0, 1.0], [0.1, 0.4], -0.3)
        b = ls.bounds_at_limit(p, data)
        # M = max(max v, |c|) = 0.5, L = sup f' = 4, sup p = 1, b - a = 1
        assert b["cor_3_7_rhs"] == pytest.approx(0.5 * 4.5)

    def test_endpoint_gaps(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0], [1.0], [-2.0], 0.25)
        b = ls.bounds_at_limit(p, data)
        assert b["endpoint_gaps"][0] == pytest.approx(0.25)
        assert b["endpoint_gaps"][1] == pytest.approx(0.75)


class TestMeanResiduals:
    def test_vanish_at_critical_point(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0], [1.0], [0.0], 0.0)
        assert np.max(np.abs(ls.mean_residuals(p, data))) < 1e-14

    def test_relu_excludes_frozen_outer(self):
        data = convex_target_problem()
        p = sh.ShallowParams("relu", [1.0], [1.0], [0.3], 0.0)
        r = ls.mean_residuals(p, data)
        assert r.size == 1  # outer bias is frozen under the relu mask


class TestSlopeSum:
    def test_vacuous_when_inactive(self):
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", [1.0], [1.0], [-3.0], 0.0)
        assert ls.slope_sum_check(p, data)

    def test_detects_extreme_stacking(self):
        # six identical full-width ramps: sum = 6 max > 4 max
        data = linear_target_problem()
        p = sh.ShallowParams("clipping", np.full(6, 0.5), np.ones(6),
                             np.zeros(6), 0.0)
        assert not ls.slope_sum_check(p, data)
