import math

import numpy as np
import pytest

from definitions import *
import domain_builder as db
import inequalities as ineq

E = math.e


class TestSampledFunctions:

    def test_linear_integrals(self):
        u = ineq.SampledFunction1D.from_function(lambda t: t, 0.0, 1.0, 1001)
        assert ineq.square_integral(u) == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert ineq.energy_integral(u) == pytest.approx(1.0)
        assert ineq.square_integral(u, (0.0, 0.5)) == pytest.approx(1.0 / 24.0, abs=1e-6)

    def test_too_few_samples(self):
        with pytest.raises(ParameterError):
            ineq.SampledFunction1D(0.0, 1.0, np.zeros(4))

    def test_sub_interval_must_fit(self):
        u = ineq.SampledFunction1D.from_function(lambda t: t, 0.0, 1.0, 101)
        with pytest.raises(ParameterError):
            ineq.square_integral(u, (0.5, 1.5))


class TestClosedFormConstants:

    @pytest.fixture
    def exp_u(self):
        return ineq.SampledFunction1D.from_function(np.exp, -1.0, 1.0, 10000)

    def test_shift_difference(self, exp_u):
        report = ineq.shift_difference_bound(exp_u)
        assert report.lhs == pytest.approx(1.12981, abs=1e-4)
        assert report.rhs == pytest.approx(2.69327, abs=1e-4)
        assert report.holds

    def test_half_interval_right(self, exp_u):
        report = ineq.half_interval_bound(exp_u, Direction.RIGHT)
        assert report.lhs == pytest.approx((E * E - 1.0) / 2.0, abs=1e-4)
        assert report.rhs == pytest.approx((1.0 - E ** -2) + 2.0 * (E * E - E ** -2), abs=1e-4)
        assert report.holds

    def test_half_interval_left(self, exp_u):
        report = ineq.half_interval_bound(exp_u, Direction.LEFT)
        assert report.lhs == pytest.approx((1.0 - E ** -2) / 2.0, abs=1e-4)
        assert report.holds

    def test_interior_linear(self):
        u = ineq.SampledFunction1D.from_function(lambda t: t, 0.0, 1.0, 10000)
        report = ineq.interior_bound_1d(u, 0.2)
        assert report.lhs == pytest.approx(1.0 / 3.0, abs=1e-4)
        assert report.rhs == pytest.approx(0.664, abs=1e-4)

    def test_asymmetric_interval(self):
        u = ineq.SampledFunction1D.from_function(np.exp, 0.0, 1.0, 100)
        with pytest.raises(ParameterError):
            ineq.shift_difference_bound(u)

    def test_interior_h_too_large(self):
        u = ineq.SampledFunction1D.from_function(lambda t: t, 0.0, 1.0, 100)
        with pytest.raises(PreconditionError):
            ineq.interior_bound_1d(u, 0.25)


class TestGridFunctions:

    def test_constant(self, square_mask):
        u = ineq.GridFunction(square_mask, np.ones(square_mask.cells.shape))
        assert u.square_integral() == pytest.approx(1.0)
        assert u.energy() == pytest.approx(0.0)
        assert u.h1_norm() == pytest.approx(1.0)

    def test_linear_difference_gradient(self, square_mask):
        u = ineq.GridFunction.from_callable(square_mask, lambda p: p[:, 0])
        g = u.difference_gradient()
        assert np.allclose(g[0][square_mask.cells], 1.0)
        assert np.allclose(g[1][square_mask.cells], 0.0)
        assert u.energy() == pytest.approx(1.0)

    def test_values_outside_the_mask_are_zeroed(self, step_mask):
        u = ineq.GridFunction(step_mask, np.full(step_mask.cells.shape, 2.0))
        assert np.all(u.values[~step_mask.cells] == 0.0)
        assert u.square_integral() == pytest.approx(4.0)

    def test_trig_gradient_matches_differences(self, square_mask, rng):
        poly = ineq.random_trig_polynomial(rng, 2, 2)
        points = rng.uniform(0.2, 0.8, (50, 2))
        step = 1e-6
        numeric = np.stack([(poly(points + step * e) - poly(points - step * e)) / (2.0 * step) for e in np.eye(2)], axis=1)
        assert np.allclose(poly.gradient(points), numeric, atol=1e-5)

    def test_restrict_needs_the_same_grid(self, square_mask, step_mask):
        u = ineq.GridFunction(square_mask, np.ones(square_mask.cells.shape))
        with pytest.raises(ParameterError):
            u.restrict(step_mask)


class TestFibered:

    def test_interpolation_constants(self):
        a, b = ineq.interpolation_constants(0.1)
        assert a == pytest.approx(0.2)
        assert b == pytest.approx(math.sqrt(3.0))

    def test_constants_need_small_h(self):
        with pytest.raises(PreconditionError):
            ineq.interpolation_constants(0.4)

    def test_constant_function_on_the_step_domain(self, step_domain, step_mask):
        u = ineq.GridFunction(step_mask, np.ones(step_mask.cells.shape), np.zeros((2,) + step_mask.cells.shape))
        assert ineq.fibered_interior_bound(u, step_domain, 0.1).holds
        assert ineq.verify_interpolation(u, step_domain, 0.1).holds

    def test_gradient_rules(self, step_mask, rng):
        poly = ineq.random_trig_polynomial(rng, 2, max_order=2)
        by_difference = ineq.grid_trig(step_mask, poly)
        exact = ineq.grid_trig(step_mask, poly, GradientRule.EXACT)
        assert by_difference.exact_gradient is None
        assert exact.exact_gradient is not None
        assert by_difference.energy() == pytest.approx(exact.energy(), rel=0.1)

    def test_difference_gradients_hold_on_the_step_domain(self, step_domain):
        for rule in (GradientRule.DIFFERENCE, GradientRule.EXACT):
            rows = ineq.inequality_sweep("fibered", trials=20, seed=2, domain=step_domain, gradients=rule)
            assert len(rows) == 20 * len(ineq.SWEEP_HS)
            assert all(row.report.holds for row in rows)


class TestSweep:

    def test_one_dimensional_suites_hold(self):
        for suite in ("shift", "half", "interior"):
            rows = ineq.inequality_sweep(suite, trials=10, seed=3)
            assert len(rows) == 10 * len(ineq.SWEEP_HS)
            assert all(row.report.holds for row in rows)

    def test_grid_suites_hold(self):
        rows = ineq.inequality_sweep("fibered", trials=3, hs=[0.1], seed=0)
        rows += ineq.inequality_sweep("interpolation", trials=3, hs=[0.1], seed=0)
        assert all(row.report.holds for row in rows)

    def test_seeded_rows_repeat(self):
        first = [row.as_list() for row in ineq.inequality_sweep("shift", trials=5, seed=11)]
        second = [row.as_list() for row in ineq.inequality_sweep("shift", trials=5, seed=11)]
        assert first == second

    def test_unknown_suite(self):
        with pytest.raises(ParameterError):
            ineq.inequality_sweep("triangle")
