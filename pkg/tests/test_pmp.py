import math

import numpy as np
import pytest

from quenchlab.config import FieldKind, IntegratorConfig
from quenchlab.core.controls import (
    blend_controls,
    constant_control,
    piecewise_control,
    zero_control,
)
from quenchlab.core.integrator import integrate_to_quench, integrate_until
from quenchlab.core.pmp import (
    default_epsilon,
    duality_residual,
    integrate_adjoint,
    integrate_sensitivity,
    nontriviality_ratio,
    penalty_value,
    pmp_certificate,
    terminal_condition,
)
from quenchlab.core.sampling import random_bang_bang_control, random_problem
from quenchlab.errors import (
    EpsilonTooLarge,
    MissingQuenchEstimate,
    OutOfWindow,
    UnsupportedField,
)


def test_default_epsilon():
    assert default_epsilon(1.0 / 32.0, 1e-6) == pytest.approx(1e-3)
    assert default_epsilon(10.0, 1e-6) == pytest.approx(1e-2)


def test_default_epsilon_leaves_three_quarters_of_a_short_run():
    # The delta_stop floor (1e-3) exceeds t_hat here.
    assert default_epsilon(6.5e-4, 1e-6) == pytest.approx(1.625e-4)
    for t_hat in (1e-6, 3.4e-4, 9.8e-4, 4e-3):
        assert 0.0 < default_epsilon(t_hat, 1e-6) <= 0.25 * t_hat


def test_terminal_conditions():
    np.testing.assert_allclose(terminal_condition(FieldKind.F1, np.array([0.9, 2.0])), [0.1, 0.0])
    np.testing.assert_allclose(terminal_condition(FieldKind.F2, np.array([0.0, 0.8])), [0.0, 0.2])
    with pytest.raises(UnsupportedField):
        terminal_condition(FieldKind.F3, np.array([0.9, 0.9]))


class TestWorkedExampleAdjoint:

    @pytest.fixture
    def controlled(self, worked):
        return integrate_to_quench(worked, constant_control([1.0, 0.0]))

    def test_adjoint_tracks_the_gap(self, worked, controlled):
        # psi1 = 1 - y1 exactly for every epsilon. What remains is the trajectory
        # error, amplified by the 1 / (1 - y1)^2 Jacobian up to t_hat - epsilon;
        # at gap sqrt(2 epsilon) that stays below 1e-5 relative.
        adj = integrate_adjoint(worked, controlled)
        assert adj.epsilon == pytest.approx(1e-3)
        assert adj.times[0] == pytest.approx(adj.terminal_time)
        assert adj.times[-1] == 0.0
        np.testing.assert_allclose(adj.psi[-1], [0.25, 0.0], rtol=1e-5, atol=1e-12)
        for t in (0.0, 0.01, 0.02):
            expected = math.sqrt(2.0 * (1.0 / 32.0 - t))
            assert adj.psi_at(t)[0] == pytest.approx(expected, rel=1e-5)

    def test_adjoint_does_not_depend_on_epsilon_here(self, worked, controlled):
        coarse = integrate_adjoint(worked, controlled, epsilon=2e-3)
        fine = integrate_adjoint(worked, controlled, epsilon=1e-3)
        assert coarse.psi_at(0.0)[0] == pytest.approx(fine.psi_at(0.0)[0], rel=1e-5)

    def test_decay_constant_is_finite(self, worked, controlled):
        adj = integrate_adjoint(worked, controlled)
        assert math.isfinite(adj.c1)
        assert adj.c1 == pytest.approx(1.0, rel=1e-5)

    def test_certificate_of_the_controlled_run(self, worked, controlled):
        adj = integrate_adjoint(worked, controlled)
        cert = pmp_certificate(worked, controlled, constant_control([1.0, 0.0]), adj)
        assert cert.passed
        assert cert.max_residual <= 1e-12
        assert cert.nontriviality_ratio == pytest.approx(0.75, rel=1e-5)
        assert cert.terminal_error <= 1e-12

    def test_certificate_rejects_the_zero_control(self, worked):
        traj = integrate_to_quench(worked, zero_control())
        cert = pmp_certificate(worked, traj, zero_control(), integrate_adjoint(worked, traj))
        assert not cert.passed
        assert cert.max_residual > 0.1

    def test_nontriviality_ratio_formula(self):
        assert nontriviality_ratio(FieldKind.F2, np.array([0.75, 0.0]), np.array([0.25, 0.0])) == pytest.approx(0.75)
        assert nontriviality_ratio(FieldKind.F1, np.array([0.9, 1.0]), np.array([0.1, 3.0])) == pytest.approx(1.0)

    def test_epsilon_must_leave_a_window(self, worked, controlled):
        with pytest.raises(EpsilonTooLarge):
            integrate_adjoint(worked, controlled, epsilon=0.05)

    def test_adjoint_needs_a_quench(self, worked):
        with pytest.raises(MissingQuenchEstimate):
            integrate_adjoint(worked, integrate_until(worked, zero_control(), 0.01))

    def test_f3_has_no_adjoint(self, f3_symmetric):
        traj = integrate_to_quench(f3_symmetric, zero_control())
        with pytest.raises(UnsupportedField):
            integrate_adjoint(f3_symmetric, traj)


class TestSensitivity:

    def test_sensitivity_matches_finite_differences(self, worked, tight):
        u, u_alt = zero_control(), constant_control([1.0, 0.0])
        traj = integrate_to_quench(worked, u, tight)
        horizon = 0.5 * traj.quench.t_hat
        z = integrate_sensitivity(worked, traj, u_alt, horizon).z_at(horizon)

        def end_state(h):
            return integrate_until(worked, blend_controls(u, u_alt, h), horizon, tight).states[-1]

        base = end_state(0.0)
        coarse = (end_state(1e-4) - base) / 1e-4
        fine = (end_state(5e-5) - base) / 5e-5
        np.testing.assert_allclose(2.0 * fine - coarse, z, rtol=1e-4, atol=1e-12)
        assert z[1] == 0.0

    def test_horizon_must_precede_the_quench(self, worked):
        traj = integrate_to_quench(worked, zero_control())
        with pytest.raises(OutOfWindow):
            integrate_sensitivity(worked, traj, constant_control([1.0, 0.0]), traj.quench.t_hat)

    @pytest.mark.parametrize("seed", [1, 2, 3])
    @pytest.mark.parametrize("field", [FieldKind.F1, FieldKind.F2])
    def test_duality_on_random_pairs(self, field, seed, tight):
        rng = np.random.default_rng(seed)
        p = random_problem(field, rng)
        u = random_bang_bang_control(p, rng)
        u_alt = random_bang_bang_control(p, rng)
        traj = integrate_to_quench(p, u, tight)
        horizon = 0.5 * traj.quench.t_hat
        check = duality_residual(p, integrate_adjoint(p, traj, cfg=tight), integrate_sensitivity(p, traj, u_alt, horizon))
        assert check.passed, f"residual {check.residual:.3g}"

    def test_duality_rejects_horizons_past_the_adjoint(self, worked):
        traj = integrate_to_quench(worked, zero_control())
        adj = integrate_adjoint(worked, traj, epsilon=0.02)
        sens = integrate_sensitivity(worked, traj, constant_control([1.0, 0.0]), 0.03)
        with pytest.raises(OutOfWindow):
            duality_residual(worked, adj, sens)


class TestPenalty:

    def test_penalty_just_before_the_optimal_time(self, worked):
        # (1 - r)^2 / 2 = t_star - t along u = (1, 0), so the penalty equals epsilon.
        value = penalty_value(worked, constant_control([1.0, 0.0]), 1e-3, t_star=1.0 / 32.0)
        assert value == pytest.approx(1e-3, rel=1e-6)

    def test_penalty_is_zero_after_quench(self, worked):
        assert penalty_value(worked, zero_control(), 1e-3) == 0.0

    def test_penalty_prefers_the_faster_control(self, worked):
        slow = penalty_value(worked, zero_control(), 1e-3, t_star=1.0 / 32.0)
        fast = penalty_value(worked, piecewise_control(0.05, [[1.0, 0.0]]), 1e-3, t_star=1.0 / 32.0)
        assert fast < slow

    def test_penalty_epsilon_below_t_star(self, worked):
        with pytest.raises(EpsilonTooLarge):
            penalty_value(worked, zero_control(), 0.2)

    def test_penalty_ignores_integration_tolerance_choice(self, worked):
        loose = penalty_value(worked, zero_control(), 1e-3, t_star=1.0 / 32.0)
        strict = penalty_value(worked, zero_control(), 1e-3, t_star=1.0 / 32.0,
                               cfg=IntegratorConfig(rtol=1e-12, atol=1e-15))
        assert strict == pytest.approx(loose, rel=1e-6)
