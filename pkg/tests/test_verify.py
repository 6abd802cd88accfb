import math

import pytest

from adlab import core as ad
from adlab import highlevel as hl
from adlab import verify
from adlab.errors import UsageError

from corpus import corrupt_stage_vjp, gradcheck_cases, random_point, random_staged


class TestFiniteDifferences:
    def test_forward_truncation_on_quadratic(self):
        # forward error is h f''/2 = h for f = x^2, central is exact up to roundoff
        f = lambda xs: xs[0] * xs[0]
        fwd = verify.fd_forward(f, [1.0], [1.0], 1e-3)
        cen = verify.fd_central(f, [1.0], [1.0], 1e-3)
        assert fwd == pytest.approx(2.001, abs=1e-9)
        assert cen == pytest.approx(2.0, abs=1e-10)

    def test_central_taylor_remainder_on_exp(self):
        # remainder f'''(0) h^2 / 6 with f''' = 1
        h = 1e-4
        cen = verify.fd_central(lambda xs: ad.exp(xs[0]), [0.0], [1.0], h)
        assert abs(cen - 1.0) == pytest.approx(h * h / 6.0, rel=0.05)

    def test_constant_function(self):
        assert verify.fd_forward(lambda xs: 7.5, [0.3], [1.0], 0.1) == 0.0
        assert verify.fd_central(lambda xs: 7.5, [0.3], [1.0], 0.1) == 0.0

    def test_zero_step_rejected(self):
        with pytest.raises(UsageError):
            verify.fd_forward(lambda xs: xs[0], [1.0], [1.0], 0.0)

    def test_vector_output_componentwise(self):
        f = lambda xs: [xs[0], xs[0] * xs[0]]
        out = verify.fd_central(f, [2.0], [1.0], 1e-6)
        assert out[0] == pytest.approx(1.0, abs=1e-9)
        assert out[1] == pytest.approx(4.0, abs=1e-8)


class TestGradcheck:
    def test_orders_on_smooth_function(self):
        f = lambda xs: ad.exp(ad.sin(xs[0]))
        _, (ad_dir,) = ad.forward_jvp(f, [0.7], [1.0])
        report = verify.gradcheck(f, ad_dir, [0.7], [1.0])
        assert report.verdict == "pass"
        assert 0.8 <= report.slope1 <= 1.2
        assert 1.8 <= report.slope2 <= 2.2
        assert report.plateau is None

    def test_injected_error_reveals_plateau(self):
        f = lambda xs: ad.sin(xs[0])
        report = verify.gradcheck(f, 1.0 * (1.0 + 1e-8), [0.0], [1.0])
        assert report.verdict == "suspect"
        assert report.plateau is not None
        assert 1e-9 <= report.plateau <= 1e-7

    def test_linear_function_has_no_truncation_regime(self):
        report = verify.gradcheck(lambda xs: xs[0], 1.0, [0.7], [1.0])
        assert report.verdict == "pass"
        assert any("no truncation regime" in note for note in report.notes)

    def test_flat_wrong_ad_is_not_certified(self):
        # derivative claim off by 1: errors never decrease, too large for
        # roundoff, so the sweep cannot conclude anything
        report = verify.gradcheck(lambda xs: xs[0], 2.0, [0.7], [1.0])
        assert report.verdict == "inconclusive"

    def test_large_bias_never_certified(self):
        # exp has positive truncation term, so a +2e-4 bias cancels it at
        # one step size and splits the decreasing run (inconclusive), while
        # a -2e-4 bias leaves a clean monotone approach onto the plateau
        f = lambda xs: ad.exp(xs[0])
        report = verify.gradcheck(f, 1.0 + 2e-4, [0.0], [1.0])
        assert report.verdict == "inconclusive"
        report = verify.gradcheck(f, 1.0 - 2e-4, [0.0], [1.0])
        assert report.verdict == "suspect"
        assert report.plateau == pytest.approx(2e-4, rel=0.5)

    def test_grid_must_decrease(self):
        with pytest.raises(UsageError):
            verify.gradcheck(lambda xs: xs[0], 1.0, [0.0], [1.0], h_grid=[1e-3, 1e-2])

    def test_scalar_output_required(self):
        with pytest.raises(UsageError):
            verify.gradcheck(lambda xs: [xs[0], xs[0]], 1.0, [0.0], [1.0])

    def test_report_rows_align_with_grid(self):
        report = verify.gradcheck(lambda xs: ad.sin(xs[0]), 1.0, [0.0], [1.0])
        rows = report.rows()
        assert len(rows) == len(report.h_grid)
        assert rows[0]["h"] == report.h_grid[0]
        assert all(a > b for a, b in zip(report.h_grid, report.h_grid[1:]))


class TestDotProduct:
    def test_square_then_sin_analytic(self):
        # chain rule oracle: d sin(x^2)/dx at 0.5 is cos(0.25) * 2 * 0.5
        staged = verify.StagedProgram([
            verify.Stage("square", 1, 1, lambda xs: xs[0] * xs[0]),
            verify.Stage("sin", 1, 1, lambda xs: ad.sin(xs[0])),
        ])
        report = verify.dot_product_test(staged, [0.5], [1.0], [1.0])
        expected = math.cos(0.25)
        assert len(report.psi_values) == 3
        for psi in report.psi_values:
            assert psi == pytest.approx(expected, rel=1e-12)
        assert report.suspect_stage is None

    def test_identity_stages(self):
        ident = verify.Stage("id", 2, 2, lambda xs: list(xs))
        staged = verify.StagedProgram([ident, ident, ident])
        report = verify.dot_product_test(staged, [1.0, 2.0], [0.3, -0.2], [2.0, 1.0])
        assert all(psi == 0.3 * 2.0 + -0.2 * 1.0 for psi in report.psi_values)

    def test_scaled_vjp_splits_psi_at_the_broken_stage(self):
        staged = random_staged(3, n_stages=4)
        stages = list(staged.stages)
        stages[2] = corrupt_stage_vjp(stages[2], 1.1)
        broken = verify.StagedProgram(stages)
        x = random_point(50, broken.n_in)
        x_dot = random_point(51, broken.n_in)
        y_bar = random_point(52, broken.n_out)
        report = verify.dot_product_test(broken, x, x_dot, y_bar)
        assert report.suspect_stage == 3
        # psi values split into two groups around the corrupted stage
        before = report.psi_values[:3]
        after = report.psi_values[3:]
        assert max(before) - min(before) < 1e-9 * max(abs(p) for p in report.psi_values)
        assert max(after) - min(after) < 1e-9 * max(abs(p) for p in report.psi_values)

    def test_consistency_spread_on_corpus(self):
        for seed in range(15):
            staged = random_staged(seed)
            x = random_point(seed + 7000, staged.n_in)
            x_dot = random_point(seed + 8000, staged.n_in)
            y_bar = random_point(seed + 9000, staged.n_out)
            report = verify.dot_product_test(staged, x, x_dot, y_bar)
            assert report.max_rel_spread < 1e-12
            assert report.suspect_stage is None

    def test_vacuous_vectors_rejected(self):
        staged = verify.StagedProgram([verify.Stage("id", 1, 1, lambda xs: list(xs))])
        with pytest.raises(UsageError):
            verify.dot_product_test(staged, [1.0], [0.0], [1.0])
        with pytest.raises(UsageError):
            verify.dot_product_test(staged, [1.0], [1.0], [0.0])

    def test_dimension_chain_validated(self):
        with pytest.raises(UsageError):
            verify.StagedProgram([
                verify.Stage("a", 1, 2, lambda xs: [xs[0], xs[0]]),
                verify.Stage("b", 3, 1, lambda xs: xs[0]),
            ])


class TestFdVjpCheck:
    def test_smooth_function_passes(self):
        report = verify.fd_vjp_check(lambda xs: ad.exp(ad.sin(xs[0])), [0.7], [1.0])
        assert report.verdict == "pass"

    def test_branch_pitfall_caught(self):
        report = verify.fd_vjp_check(lambda xs: hl.identity_fastpath(xs[0]), [0.0], [1.0])
        assert report.verdict == "suspect"
        assert abs(report.fd_value - 1.0) < 1e-6
        assert report.ad_value == 0.0

    def test_staircase_passes_with_caveat(self):
        table = hl.SineTable(4096)
        report = verify.fd_vjp_check(lambda xs: hl.sin_lut(xs[0], table), [1.0], [1.0])
        assert report.verdict == "pass"
        assert "staircase" in report.caveat

    def test_seed_reproducibility(self):
        f = lambda xs: ad.sin(xs[0]) * ad.cos(xs[1])
        a = verify.fd_vjp_check(f, [0.3, 0.4], [1.0], seed=7)
        b = verify.fd_vjp_check(f, [0.3, 0.4], [1.0], seed=7)
        c = verify.fd_vjp_check(f, [0.3, 0.4], [1.0], seed=8)
        assert a.x_dot == b.x_dot and a.fd_value == b.fd_value
        assert c.x_dot != a.x_dot


class TestCorpusSlopes:
    def test_slope_bands_hold_across_corpus(self):
        for program, x, d, ad_dir in gradcheck_cases(8):
            report = verify.gradcheck(program, ad_dir, x, d)
            assert report.verdict == "pass"
            assert 0.8 <= report.slope1 <= 1.2
            assert 1.8 <= report.slope2 <= 2.2

    def test_plateau_recovery_within_factor_ten(self):
        f = lambda xs: ad.sin(xs[0])
        for eps in (1e-10, 1e-8, 1e-6):
            report = verify.gradcheck(f, 1.0 + eps, [0.0], [1.0])
            assert report.verdict == "suspect"
            assert report.plateau is not None
            assert report.plateau <= 10.0 * eps
            assert report.plateau >= eps / 10.0
