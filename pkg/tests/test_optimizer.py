import math

import numpy as np
import pytest

from quenchlab.config import IntegratorConfig, SearchConfig, SearchMethod
from quenchlab.core.controls import constant_control, piecewise_control
from quenchlab.core.integrator import integrate_to_quench
from quenchlab.core.optimizer import (
    _damped_update,
    brute_force_search,
    direct_search,
    perturbation_smoke_test,
    run_search,
    sweep_search,
)
from quenchlab.errors import BudgetExceeded, InvalidParameter, UnsupportedField


CONTROLLED_T = 1.0 / 32.0
FREE_T = -0.25 - math.log(0.75)


class TestBruteForce:

    def test_worked_example_with_three_candidates(self, worked, serial):
        result = brute_force_search(worked, SearchConfig(method=SearchMethod.BRUTE, n_directions=2))
        assert result.best_t == pytest.approx(CONTROLLED_T, abs=1e-6)
        np.testing.assert_allclose(result.best_control.values, [[1.0, 0.0]], atol=1e-15)
        assert result.zero_control_t == pytest.approx(FREE_T, abs=1e-6)
        assert result.bound == pytest.approx(3.0 / 32.0)
        assert result.evaluations == 4
        assert result.certificate is not None and result.certificate.passed

    def test_parallel_and_serial_runs_agree(self, worked, monkeypatch):
        cfg = SearchConfig(method=SearchMethod.BRUTE, n_intervals=2, n_directions=4)
        monkeypatch.setenv("QUENCH_NO_PARALLEL", "1")
        serial = brute_force_search(worked, cfg)
        monkeypatch.setenv("QUENCH_NO_PARALLEL", "0")
        parallel = brute_force_search(worked, cfg)
        assert parallel.best_t == serial.best_t
        np.testing.assert_array_equal(parallel.best_control.values, serial.best_control.values)
        assert parallel.history == serial.history

    def test_oracle_sandwich(self, worked, serial):
        result = brute_force_search(worked, SearchConfig(method=SearchMethod.BRUTE, n_intervals=2, n_directions=8))
        assert result.best_t <= result.bound
        assert result.best_t <= result.zero_control_t + result.best_width
        assert result.best_t == pytest.approx(CONTROLLED_T, abs=1e-5)

    def test_best_time_is_the_bracket_midpoint(self, worked, serial):
        result = brute_force_search(worked, SearchConfig(method=SearchMethod.BRUTE, n_directions=4))
        quench = integrate_to_quench(worked, result.best_control).quench
        assert result.best_t == quench.midpoint
        assert result.best_width == quench.width

    def test_doubling_the_directions_never_gets_slower(self, f1_below, serial):
        # Directions for n and 2n nest, so the finer grid sees every coarse candidate.
        results = [
            brute_force_search(f1_below, SearchConfig(method=SearchMethod.BRUTE, n_intervals=2, n_directions=n))
            for n in (2, 4, 8)
        ]
        for coarse, fine in zip(results, results[1:]):
            assert fine.best_t <= coarse.best_t + coarse.best_width + fine.best_width

    def test_budget_guard(self, worked):
        with pytest.raises(BudgetExceeded):
            brute_force_search(worked, SearchConfig(method=SearchMethod.BRUTE, n_intervals=3, n_directions=100))

    def test_f3_has_no_certificate(self, f3_symmetric, serial):
        result = brute_force_search(f3_symmetric, SearchConfig(method=SearchMethod.BRUTE, n_directions=4))
        assert result.certificate is None
        assert result.best_t <= result.zero_control_t + result.best_width


class TestSweep:

    def test_converges_on_the_worked_example(self, worked):
        result = sweep_search(worked, SearchConfig())
        assert result.converged
        assert not result.no_descent
        assert result.best_t == pytest.approx(CONTROLLED_T, abs=1e-5)
        assert result.best_t < result.zero_control_t - 1e-3
        np.testing.assert_allclose(result.best_control.values[0], [1.0, 0.0], atol=1e-5)

    def test_certificate_at_convergence(self, worked):
        result = sweep_search(worked, SearchConfig())
        cert = result.certificate
        assert cert is not None
        assert cert.max_residual <= 1e-5
        assert cert.nontriviality_ratio >= 0.1
        assert cert.passed

    @pytest.mark.parametrize("conv_tol", [0.01, 0.05])
    def test_residual_scales_with_the_convergence_tolerance(self, worked, conv_tol):
        result = sweep_search(worked, SearchConfig(conv_tol=conv_tol))
        assert result.converged
        assert result.certificate.max_residual <= 10.0 * conv_tol * worked.rho0 * worked.k0

    def test_line_search_spends_extra_integrations(self, worked):
        result = sweep_search(worked, SearchConfig())
        # One forward run and at least two penalty runs per iteration.
        assert result.evaluations >= 3 * len(result.history)

    def test_history_starts_from_the_zero_control(self, worked):
        result = sweep_search(worked, SearchConfig())
        it, t_hat, moved = result.history[0]
        assert it == 0
        assert t_hat == pytest.approx(FREE_T, abs=1e-6)
        assert moved == 1.0
        assert result.history[-1][1] == pytest.approx(CONTROLLED_T, abs=1e-5)

    def test_initial_control_is_used(self, worked):
        result = sweep_search(worked, SearchConfig(max_iters=1), initial=[[1.0, 0.0]])
        assert result.history[0][1] == pytest.approx(CONTROLLED_T, abs=1e-6)

    def test_initial_control_must_match_the_grid(self, worked):
        with pytest.raises(InvalidParameter):
            sweep_search(worked, SearchConfig(n_intervals=2), initial=[[1.0, 0.0]])

    def test_f3_is_unsupported(self, f3_symmetric):
        with pytest.raises(UnsupportedField, match="sweep unsupported for f3"):
            sweep_search(f3_symmetric, SearchConfig())

    def test_report_serializes_the_best_control(self, worked):
        report = sweep_search(worked, SearchConfig()).to_report()
        assert report.method is SearchMethod.SWEEP
        assert report.best_control.kind == "piecewise"
        assert report.certificate.max_residual <= 1e-5
        assert len(report.history[0]) == 3


class TestDampedUpdate:

    STEP = 3.0 / 32.0

    def test_descent_is_accepted_at_full_damping(self, worked):
        updated, spent = _damped_update(
            worked, np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), 0.5, self.STEP, FREE_T, IntegratorConfig()
        )
        np.testing.assert_allclose(updated, [[0.5, 0.0]], atol=1e-15)
        assert spent == 2

    def test_ascent_halves_the_damping(self, worked):
        # Any drift below 1 leaves a wider gap at 1/32 - epsilon than u = (1, 0).
        updated, spent = _damped_update(
            worked, np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]]), 0.5, self.STEP, CONTROLLED_T, IntegratorConfig()
        )
        np.testing.assert_allclose(updated, [[0.875, 0.0]], atol=1e-15)
        assert spent == 5


class TestDirect:

    def test_worked_example(self, worked):
        result = direct_search(worked, SearchConfig(method=SearchMethod.DIRECT, max_evaluations=300))
        assert result.best_t == pytest.approx(CONTROLLED_T, abs=1e-4)
        assert result.best_t <= result.zero_control_t

    def test_deterministic_for_a_fixed_seed(self, worked):
        cfg = SearchConfig(method=SearchMethod.DIRECT, n_intervals=2, max_evaluations=200, seed=3)
        first = direct_search(worked, cfg)
        second = direct_search(worked, cfg)
        assert first.best_t == second.best_t
        assert first.evaluations == second.evaluations
        np.testing.assert_array_equal(first.best_control.values, second.best_control.values)

    def test_f3_symmetric_beats_the_zero_control(self, f3_symmetric):
        result = direct_search(f3_symmetric, SearchConfig(method=SearchMethod.DIRECT, max_evaluations=200))
        assert result.best_t <= 0.005 + result.best_width
        assert result.zero_control_t == pytest.approx(0.005, abs=1e-8)

    def test_agrees_with_brute_force(self, worked, serial):
        cfg = SearchConfig(method=SearchMethod.DIRECT, n_intervals=1, n_directions=8, max_evaluations=300)
        assert direct_search(worked, cfg).best_t <= brute_force_search(worked, cfg).best_t + 1e-4

    def test_dimension_guard(self, worked):
        with pytest.raises(BudgetExceeded):
            direct_search(worked, SearchConfig(method=SearchMethod.DIRECT, n_intervals=7))


def test_run_search_dispatches(worked, serial):
    result = run_search(worked, SearchConfig(method=SearchMethod.BRUTE, n_directions=2))
    assert result.method is SearchMethod.BRUTE


class TestPerturbationSmokeTest:

    def test_half_window_passes(self, worked):
        u = constant_control([1.0, 0.0])
        window = 0.5 * integrate_to_quench(worked, u).quench.t_hat
        report = perturbation_smoke_test(worked, u, window, 20)
        assert report.passed, report.detail
        assert report.worst_margin > 0.0

    def test_piecewise_control(self, worked):
        u = piecewise_control(0.01, [[1.0, 0.0], [0.0, 1.0]])
        report = perturbation_smoke_test(worked, u, 0.01, 5, seed=1)
        assert report.passed

    def test_empty_window_passes_vacuously(self, worked):
        report = perturbation_smoke_test(worked, constant_control([1.0, 0.0]), 0.0, 20)
        assert report.passed

    def test_window_must_precede_the_quench(self, worked):
        with pytest.raises(InvalidParameter):
            perturbation_smoke_test(worked, constant_control([1.0, 0.0]), 0.04, 5)
        with pytest.raises(InvalidParameter):
            perturbation_smoke_test(worked, constant_control([1.0, 0.0]), -0.1, 5)
