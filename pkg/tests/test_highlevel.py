import math

import numpy as np
import pytest

from adlab import core as ad
from adlab import highlevel as hl
from adlab.errors import DiagnosticError, UsageError


class TestHeronLowlevel:
    def test_primal_and_derivative_after_enough_iterations(self):
        y, y_dot = ad.forward_jvp(
            lambda xs: hl.heron_sqrt_lowlevel(xs[0], 1.0, 1e-6), [4.0], [1.0]
        )
        assert abs(y[0] * y[0] - 4.0) < 1e-6
        assert y_dot[0] == pytest.approx(0.25, abs=1e-6)

    def test_zero_iterations_kill_the_derivative(self):
        # x0 = sqrt(2) satisfies the tolerance before the loop body runs, so
        # the output never depends on a; the analytic truth is 1/(2 sqrt 2)
        x0 = math.sqrt(2.0)
        y, y_dot = ad.forward_jvp(
            lambda xs: hl.heron_sqrt_lowlevel(xs[0], x0, 1e-6), [2.0], [1.0]
        )
        assert y[0] == x0
        assert y_dot[0] == 0.0
        assert abs(y_dot[0] - 0.5 / math.sqrt(2.0)) > 0.35

    def test_loop_derivative_error_exceeds_primal_error(self):
        truth = 0.5 / math.sqrt(2.0)
        y, y_dot = ad.forward_jvp(
            lambda xs: hl.heron_sqrt_lowlevel(xs[0], 1.0, 1e-6), [2.0], [1.0]
        )
        primal_err = abs(y[0] - math.sqrt(2.0))
        deriv_err = abs(y_dot[0] - truth)
        assert primal_err < 1e-6
        assert deriv_err > primal_err

    def test_stopping_test_is_primal_only(self):
        _, iters = hl.heron_loop(ad.Dual(2.0, 1.0), 1.0, 1e-6, 100)
        _, iters_plain = hl.heron_loop(2.0, 1.0, 1e-6, 100)
        assert iters == iters_plain

    def test_invalid_inputs(self):
        with pytest.raises(UsageError):
            hl.heron_sqrt_lowlevel(-1.0, 1.0, 1e-6)
        with pytest.raises(UsageError):
            hl.heron_sqrt_lowlevel(2.0, 1.0, 0.0)

    def test_non_convergence_diagnosed(self):
        with pytest.raises(DiagnosticError):
            hl.heron_sqrt_lowlevel(2.0, 1.0, 1e-6, max_iters=1)


class TestFixedPointImplicit:
    def test_heron_map_independent_of_x0(self):
        # analytic: phi = (x + a/x)/2 has phi_x = 0 at x* = sqrt(a), so
        # dx*/da = phi_a / (1 - phi_x) = 1/(2 sqrt a)
        truth = 0.5 / math.sqrt(2.0)
        for x0 in (0.5, 0.9, 1.3, 2.0, 3.1, 4.4, 5.0, 6.7, 8.2, 10.0):
            problem = hl.FixedPointProblem(phi=lambda x, a: (x + a / x) * 0.5, x0=x0)
            x_star, d = hl.fixed_point_implicit(problem, 2.0)
            assert abs(x_star - math.sqrt(2.0)) < 1e-10
            assert abs(d - truth) < problem.tol_deriv * 10

    def test_linear_map(self):
        problem = hl.FixedPointProblem(phi=lambda x, t: 0.5 * x + t, x0=0.0)
        x_star, d = hl.fixed_point_implicit(problem, 1.0)
        assert x_star == pytest.approx(2.0, abs=1e-10)
        assert d == pytest.approx(2.0, abs=1e-10)

    def test_theta_independent_map_has_zero_derivative(self):
        problem = hl.FixedPointProblem(phi=lambda x, t: ad.cos(x), x0=0.5)
        x_star, d = hl.fixed_point_implicit(problem, 1.0)
        assert abs(x_star - 0.7390851332151607) < 1e-9
        assert d == 0.0

    def test_non_contraction_diagnosed(self):
        problem = hl.FixedPointProblem(phi=lambda x, t: 2.0 * x - 1.0 + 0.0 * t, x0=1.0)
        with pytest.raises(DiagnosticError):
            hl.fixed_point_implicit(problem, 0.0)

    def test_bad_tolerances_rejected(self):
        with pytest.raises(UsageError):
            hl.FixedPointProblem(phi=lambda x, t: x, x0=1.0, tol_primal=0.0)


class TestLinearSolve:
    def test_identity_system(self):
        b = np.array([1.0, -2.0, 3.0])
        system = hl.DenseSystem(np.eye(3), b)
        assert np.array_equal(hl.linear_solve(system), b)
        x, b_bar, a_bar = hl.linear_solve_vjp(system, np.array([0.1, 0.2, 0.3]))
        assert np.allclose(b_bar, [0.1, 0.2, 0.3])
        assert np.allclose(a_bar, -np.outer([0.1, 0.2, 0.3], b))

    def test_diagonal_forward_rule(self):
        system = hl.DenseSystem(np.diag([2.0, 4.0]), np.array([2.0, 8.0]))
        x, x_dot = hl.linear_solve_jvp(system, np.zeros((2, 2)), np.array([1.0, 0.0]))
        assert np.allclose(x, [1.0, 2.0])
        assert np.allclose(x_dot, [0.5, 0.0])

    def test_residual_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a = rng.uniform(-1.0, 1.0, (6, 6)) + 4.0 * np.eye(6)
            b = rng.uniform(-1.0, 1.0, 6)
            x = hl.linear_solve(hl.DenseSystem(a, b))
            res = np.max(np.abs(a @ x - b))
            assert res <= 1e-10 * (1.0 + np.max(np.abs(b)))

    def test_reverse_rule_against_entrywise_fd(self):
        rng = np.random.default_rng(11)
        a = rng.uniform(-1.0, 1.0, (4, 4)) + 4.0 * np.eye(4)
        b = rng.uniform(-1.0, 1.0, 4)
        x_bar = rng.uniform(-1.0, 1.0, 4)
        _, b_bar, a_bar = hl.linear_solve_vjp(hl.DenseSystem(a, b), x_bar)
        h = 1e-6

        def loss(a_mod, b_mod):
            return float(x_bar @ np.linalg.solve(a_mod, b_mod))

        for i in range(4):
            bp, bm = b.copy(), b.copy()
            bp[i] += h
            bm[i] -= h
            fd = (loss(a, bp) - loss(a, bm)) / (2 * h)
            assert abs(fd - b_bar[i]) < 1e-6
            for j in range(4):
                ap, am = a.copy(), a.copy()
                ap[i, j] += h
                am[i, j] -= h
                fd = (loss(ap, b) - loss(am, b)) / (2 * h)
                assert abs(fd - a_bar[i, j]) < 1e-6

    def test_forward_reverse_dot_product_identity(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            a = rng.uniform(-1.0, 1.0, (5, 5)) + 4.0 * np.eye(5)
            b = rng.uniform(-1.0, 1.0, 5)
            a_dot = rng.uniform(-1.0, 1.0, (5, 5))
            b_dot = rng.uniform(-1.0, 1.0, 5)
            x_bar = rng.uniform(-1.0, 1.0, 5)
            system = hl.DenseSystem(a, b)
            _, x_dot = hl.linear_solve_jvp(system, a_dot, b_dot)
            _, b_bar, a_bar = hl.linear_solve_vjp(system, x_bar)
            lhs = float(x_bar @ x_dot)
            rhs = float(np.sum(a_bar * a_dot) + b_bar @ b_dot)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)

    def test_singular_matrix_diagnosed(self):
        system = hl.DenseSystem(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 2.0]))
        with pytest.raises(DiagnosticError):
            hl.linear_solve(system)

    def test_non_square_rejected(self):
        with pytest.raises(UsageError):
            hl.DenseSystem(np.ones((2, 3)), np.ones(2))


class TestSineTable:
    def test_samples_match_grid(self):
        table = hl.SineTable(64)
        step = 2.0 * math.pi / 64
        assert all(table.samples[k] == math.sin(k * step) for k in range(64))

    def test_lookup_error_within_grid_spacing(self):
        # |sin'| <= 1, so nearest-neighbor error is below one grid step
        table = hl.SineTable(4096)
        assert abs(hl.sin_lut(1.0, table) - math.sin(1.0)) < 2.0 * math.pi / 4096

    def test_exact_grid_point_and_flat_extremum(self):
        table = hl.SineTable(4096)
        assert hl.sin_lut(0.0, table) == 0.0
        assert abs(hl.sin_lut(math.pi / 2.0, table) - 1.0) < 1e-6

    def test_ad_derivative_is_literal_zero_everywhere(self):
        import random

        table = hl.SineTable(4096)
        rng = random.Random(99)
        for _ in range(1000):
            x = rng.uniform(-20.0, 20.0)
            _, y_dot = ad.forward_jvp(lambda xs: hl.sin_lut(xs[0], table), [x], [1.0])
            assert y_dot[0] == 0.0

    def test_wrapping(self):
        table = hl.SineTable(4096)
        assert hl.sin_lut(1.0 + 2.0 * math.pi, table) == hl.sin_lut(1.0, table)

    def test_bad_resolution(self):
        with pytest.raises(UsageError):
            hl.SineTable(0)


class TestSinPoly:
    def test_leading_terms(self):
        y, y_dot = ad.forward_jvp(lambda xs: hl.sin_poly(xs[0], 3), [0.0], [1.0])
        assert y[0] == 0.0
        assert y_dot[0] == 1.0

    def test_degree7_taylor_remainders(self):
        # remainder bounds: |x|^9/9! for the value, |x|^8/8! for its derivative
        y, y_dot = ad.forward_jvp(lambda xs: hl.sin_poly(xs[0], 7), [1.0], [1.0])
        assert abs(y[0] - math.sin(1.0)) < 3e-5
        assert abs(y_dot[0] - math.cos(1.0)) < 3e-4
        assert abs(y_dot[0] - math.cos(1.0)) > abs(y[0] - math.sin(1.0))

    def test_degree3_derivative_at_half_pi(self):
        # truncated derivative 1 - x^2/2 evaluated at pi/2; the truth is 0
        _, y_dot = ad.forward_jvp(lambda xs: hl.sin_poly(xs[0], 3), [math.pi / 2.0], [1.0])
        assert y_dot[0] == pytest.approx(1.0 - (math.pi / 2.0) ** 2 / 2.0, rel=1e-12)

    def test_unsupported_degree(self):
        with pytest.raises(UsageError):
            hl.sin_poly(1.0, 4)


class TestFastPaths:
    def test_identity_fastpath_values_bit_exact(self):
        xs = [i / 1000.0 for i in range(-3000, 3001)]
        for x in xs:
            assert hl.identity_fastpath(x) == x

    def test_identity_fastpath_derivative(self):
        _, y_dot = ad.forward_jvp(lambda v: hl.identity_fastpath(v[0]), [0.0], [1.0])
        assert y_dot[0] == 0.0
        _, y_dot = ad.forward_jvp(lambda v: hl.identity_fastpath(v[0]), [5.0], [1.0])
        assert y_dot[0] == 1.0

    def test_consistent_variant_derivative(self):
        _, y_dot = ad.forward_jvp(lambda v: hl.identity_fastpath_consistent(v[0]), [0.0], [1.0])
        assert y_dot[0] == 1.0

    def test_mul_fastpath_at_unit_factor(self):
        y, x_bar = ad.reverse_vjp(lambda v: hl.mul_fastpath(v[0], v[1]), [3.0, 1.0], [1.0])
        assert y == [3.0]
        assert x_bar == [1.0, 0.0]  # d/dx correct, d/dy lost to the shortcut

    def test_mul_fastpath_at_zero_factor(self):
        y, x_bar = ad.reverse_vjp(lambda v: hl.mul_fastpath(v[0], v[1]), [3.0, 0.0], [1.0])
        assert y == [0.0]
        assert x_bar == [0.0, 0.0]

    def test_mul_fastpath_generic(self):
        y, x_bar = ad.reverse_vjp(lambda v: hl.mul_fastpath(v[0], v[1]), [3.0, 2.0], [1.0])
        assert y == [6.0]
        assert x_bar == [2.0, 3.0]


class TestVecMax:
    def test_unique_max(self):
        y, x_bar = ad.reverse_vjp(lambda v: hl.vec_max(v), [1.0, 3.0, 2.0], [1.0])
        assert y == [3.0]
        assert x_bar == [0.0, 1.0, 0.0]

    def test_tie_goes_to_first(self):
        _, x_bar = ad.reverse_vjp(lambda v: hl.vec_max(v), [2.0, 2.0], [1.0])
        assert x_bar == [1.0, 0.0]

    def test_first_attaining_index_among_many(self):
        _, x_bar = ad.reverse_vjp(lambda v: hl.vec_max(v), [1.0, 5.0, 5.0, 5.0], [1.0])
        assert x_bar == [0.0, 1.0, 0.0, 0.0]

    def test_single_element(self):
        y, x_bar = ad.reverse_vjp(lambda v: hl.vec_max(v), [-1.0], [1.0])
        assert (y, x_bar) == ([-1.0], [1.0])

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            hl.vec_max([])
