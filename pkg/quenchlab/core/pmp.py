"""
Maximum Principle Module
========================
Regularized adjoint and variational equations for the f1 and f2 systems,
their duality identity, the maximum-condition certificate and the penalty
objective evaluated just before the optimal time.

Jacobians from the fields module are in the standard orientation J, so
the adjoint reads psi' = -J^T psi and the sensitivity z' = J z + B du.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from quenchlab.config import APP_CONFIG, FieldKind, IntegratorConfig
from quenchlab.core.analysis import quench_time_bound
from quenchlab.core.controls import (
    ControlSignal,
    ProblemSpec,
    check_admissible,
    eval_control,
    pmp_argmax,
)
from quenchlab.core.fields import State, eval_jacobian, singular_distance
from quenchlab.core.integrator import Trajectory, integrate_until
from quenchlab.errors import (
    EpsilonTooLarge,
    InvalidParameter,
    MissingQuenchEstimate,
    OutOfWindow,
    UnsupportedField,
)


logger = logging.getLogger(__name__)

_SOLVER = "DOP853"

# Largest share of t_hat the default regularization may cut off.
EPSILON_WINDOW_CAP = 0.25


# ===== Result Types =====

@dataclass(eq=False)
class AdjointPath:
    """Backward solution psi on [0, terminal_time], samples in decreasing time."""
    times: np.ndarray
    psi: np.ndarray
    epsilon: float
    terminal_time: float
    terminal_condition: np.ndarray
    c1: float
    pieces: Sequence[Tuple[float, float, Callable]] = ()

    def psi_at(self, t: float) -> State:
        t = min(max(t, 0.0), self.terminal_time)
        for lo, hi, dense in self.pieces:
            if lo <= t <= hi:
                return dense(t)
        raise OutOfWindow(f"no adjoint piece covers t={t}")


@dataclass(eq=False)
class SensitivityPath:
    """Forward solution z of the variational equation, z(0) = 0."""
    times: np.ndarray
    z: np.ndarray
    perturbation: Tuple[ControlSignal, ControlSignal]
    horizon: float
    pieces: Sequence[Tuple[float, float, Callable]] = ()

    def z_at(self, t: float) -> State:
        for lo, hi, dense in self.pieces:
            if lo <= t <= hi:
                return dense(t)
        raise OutOfWindow(f"no sensitivity piece covers t={t}")


@dataclass(frozen=True)
class PMPCertificate:
    """Maximum-condition residuals of a candidate control."""
    max_residual: float
    worst_t: float
    terminal_norm: float
    terminal_error: float
    nontriviality_ratio: float
    passed: bool


@dataclass(frozen=True)
class DualityCheck:
    """<psi(T), z(T)> against the integral of <psi, B (u_alt - u)> on [0, T]."""
    inner_product: float
    integral: float
    residual: float
    passed: bool


# ===== Helpers =====

def _require_pmp_field(kind: FieldKind) -> None:
    if kind is FieldKind.F3:
        raise UnsupportedField("no maximum principle is available for f3")


def default_epsilon(t_hat: float, delta_stop: float) -> float:
    """max(1e-3 t_hat, 10 delta^(2/3)), capped at t_hat / 4 so that [0, 3 t_hat / 4] stays in the window."""
    return min(max(1e-3 * t_hat, 10.0 * delta_stop ** (2.0 / 3.0)), EPSILON_WINDOW_CAP * t_hat)


def terminal_condition(kind: FieldKind, y: State) -> State:
    """psi(T') = (1 - y1, 0) for f1 and (1 - r) / r * y for f2."""
    _require_pmp_field(kind)
    if kind is FieldKind.F1:
        return np.array([1.0 - y[0], 0.0])
    r = math.hypot(y[0], y[1])
    return (1.0 - r) / r * np.asarray(y, dtype=float)


def nontriviality_ratio(kind: FieldKind, y: State, psi: State) -> float:
    """psi1 / (1 - y1) for f1, <y / (1 - ||y||), psi> for f2; tends to 1 near quench."""
    _require_pmp_field(kind)
    if kind is FieldKind.F1:
        return float(psi[0] / (1.0 - y[0]))
    r = math.hypot(y[0], y[1])
    return float(np.dot(y, psi) / (1.0 - r))


def _segments(lo: float, hi: float, breakpoints: Sequence[float]) -> List[Tuple[float, float]]:
    inner = sorted({b for b in breakpoints if lo < b < hi})
    edges = [lo] + inner + [hi]
    return list(zip(edges[:-1], edges[1:]))


def _trajectory_breaks(traj: Trajectory, extra: Sequence[ControlSignal] = ()) -> List[float]:
    points = list(traj.times[traj.segment_starts[1:]]) if len(traj.segment_starts) > 1 else []
    points += traj.control_used.breakpoints() + traj.problem.B.jumps
    for u in extra:
        points += u.breakpoints()
    return [float(x) for x in points]


def _inside(t: float, s0: float, s1: float) -> float:
    return min(max(t, s0), np.nextafter(s1, s0))


# ===== Adjoint =====

def integrate_adjoint(
    p: ProblemSpec,
    traj: Trajectory,
    epsilon: Optional[float] = None,
    cfg: Optional[IntegratorConfig] = None
) -> AdjointPath:
    """
    Integrate psi' = -J(y(t))^T psi backward from t_hat - epsilon to 0.

    Args:
        p: Problem of the trajectory (f1 or f2)
        traj: Quenched trajectory; y(t) is its Hermite interpolant
        epsilon: Regularization; default_epsilon when None
        cfg: Integrator configuration supplying delta_stop for the default

    Returns:
        AdjointPath with the decay constant C1 = max ||psi|| / distance
    """
    _require_pmp_field(p.field)
    if traj.quench is None:
        raise MissingQuenchEstimate("adjoint needs a quenched trajectory")
    t_hat = traj.quench.t_hat
    if epsilon is None:
        epsilon = default_epsilon(t_hat, (cfg or IntegratorConfig()).delta_stop)
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be positive, got {epsilon}")
    if epsilon >= t_hat:
        raise EpsilonTooLarge(f"epsilon={epsilon:.6g} leaves no window before t_hat={t_hat:.6g}")
    t_terminal = t_hat - epsilon
    if t_terminal > traj.t_end:
        raise InvalidParameter(
            f"epsilon={epsilon:.3g} puts the terminal time past the last sample {traj.t_end:.12g}"
        )

    y_terminal = traj.state_at(t_terminal)
    psi_terminal = terminal_condition(p.field, y_terminal)
    kind = p.field

    def rhs(t: float, psi: np.ndarray) -> np.ndarray:
        return -eval_jacobian(kind, traj.state_at(t)).T @ psi

    pieces = []
    times: List[float] = []
    values: List[np.ndarray] = []
    psi = psi_terminal
    for s0, s1 in reversed(_segments(0.0, t_terminal, _trajectory_breaks(traj))):
        sol = solve_ivp(
            rhs, (s1, s0), psi, method=_SOLVER, dense_output=True,
            rtol=APP_CONFIG["adjoint_rtol"], atol=APP_CONFIG["adjoint_atol"],
        )
        if not sol.success:
            raise InvalidParameter(f"adjoint integration failed on [{s0:.6g}, {s1:.6g}]: {sol.message}")
        pieces.append((s0, s1, sol.sol))
        skip = 1 if times else 0
        times.extend(sol.t[skip:])
        values.extend(sol.y.T[skip:])
        psi = sol.y[:, -1]

    times_arr = np.array(times)
    psi_arr = np.array(values)
    distances = np.array([singular_distance(kind, traj.state_at(t)) for t in times_arr])
    norms = np.hypot(psi_arr[:, 0], psi_arr[:, 1])
    c1 = float(np.max(norms / distances))

    logger.info(f"Adjoint on [0, {t_terminal:.6g}] (epsilon={epsilon:.3g}): {len(times_arr)} samples, C1={c1:.4g}")
    return AdjointPath(
        times=times_arr,
        psi=psi_arr,
        epsilon=epsilon,
        terminal_time=t_terminal,
        terminal_condition=psi_terminal,
        c1=c1,
        pieces=pieces,
    )


# ===== Sensitivity =====

def integrate_sensitivity(
    p: ProblemSpec,
    traj: Trajectory,
    u_alt: ControlSignal,
    horizon: float
) -> SensitivityPath:
    """
    Integrate z' = J(y(t)) z + B(t) (u_alt(t) - u(t)), z(0) = 0, up to horizon.

    u is the control the trajectory was computed with.
    """
    _require_pmp_field(p.field)
    check_admissible(u_alt, p.rho0)
    if not horizon > 0:
        raise InvalidParameter(f"horizon must be positive, got {horizon}")
    if horizon > traj.t_end or (traj.quench is not None and horizon >= traj.quench.t_hat):
        raise OutOfWindow(f"horizon {horizon:.6g} is not inside the non-quench window")

    u = traj.control_used
    kind = p.field
    pieces = []
    times: List[float] = []
    values: List[np.ndarray] = []
    z = np.zeros(2)
    for s0, s1 in _segments(0.0, horizon, _trajectory_breaks(traj, [u_alt])):

        def rhs(t: float, zz: np.ndarray, s0=s0, s1=s1) -> np.ndarray:
            tc = _inside(t, s0, s1)
            du = eval_control(u_alt, tc) - eval_control(u, tc)
            return eval_jacobian(kind, traj.state_at(t)) @ zz + p.B.at(tc) @ du

        sol = solve_ivp(
            rhs, (s0, s1), z, method=_SOLVER, dense_output=True,
            rtol=APP_CONFIG["adjoint_rtol"], atol=APP_CONFIG["adjoint_atol"],
        )
        if not sol.success:
            raise InvalidParameter(f"sensitivity integration failed on [{s0:.6g}, {s1:.6g}]: {sol.message}")
        pieces.append((s0, s1, sol.sol))
        skip = 1 if times else 0
        times.extend(sol.t[skip:])
        values.extend(sol.y.T[skip:])
        z = sol.y[:, -1]

    return SensitivityPath(
        times=np.array(times),
        z=np.array(values),
        perturbation=(u, u_alt),
        horizon=horizon,
        pieces=pieces,
    )


def duality_residual(p: ProblemSpec, adj: AdjointPath, sens: SensitivityPath) -> DualityCheck:
    """
    Check d/dt <psi, z> = <psi, B (u_alt - u)> in integrated form on [0, T].

    T is the sensitivity horizon and must not exceed the adjoint terminal time.
    """
    horizon = sens.horizon
    if horizon > adj.terminal_time:
        raise OutOfWindow(
            f"sensitivity horizon {horizon:.6g} exceeds adjoint window {adj.terminal_time:.6g}"
        )
    u, u_alt = sens.perturbation
    breaks = u.breakpoints() + u_alt.breakpoints() + p.B.jumps + [lo for lo, _, _ in adj.pieces]

    integral = 0.0
    for s0, s1 in _segments(0.0, horizon, breaks):

        def integrand(t: float, q: np.ndarray, s0=s0, s1=s1) -> np.ndarray:
            tc = _inside(t, s0, s1)
            du = eval_control(u_alt, tc) - eval_control(u, tc)
            return np.array([adj.psi_at(t) @ (p.B.at(tc) @ du)])

        sol = solve_ivp(
            integrand, (s0, s1), [0.0], method=_SOLVER,
            rtol=APP_CONFIG["adjoint_rtol"], atol=APP_CONFIG["adjoint_atol"],
        )
        integral += float(sol.y[0, -1])

    inner = float(adj.psi_at(horizon) @ sens.z_at(horizon))
    residual = abs(inner - integral)
    return DualityCheck(
        inner_product=inner,
        integral=integral,
        residual=residual,
        passed=residual <= 1e-6 * (1.0 + abs(inner)),
    )


# ===== Certificate =====

def _residual_at(psi: State, Bt: np.ndarray, u_val: State, rho0: float) -> float:
    return float(psi @ (Bt @ (pmp_argmax(psi, Bt, rho0) - u_val)))


def pmp_certificate(
    p: ProblemSpec,
    traj: Trajectory,
    u_star: ControlSignal,
    adj: AdjointPath
) -> PMPCertificate:
    """
    Evaluate the maximum condition along an adjoint path.

    At a jump of u_star or B the smaller of the one-sided residuals is used,
    since a piecewise control is only defined up to a null set there.

    Args:
        p: Problem (f1 or f2)
        traj: Trajectory the adjoint was computed along
        u_star: Candidate control
        adj: Adjoint path

    Returns:
        PMPCertificate; passed when the residual is within residual_tol,
        the terminal condition is met and the nontriviality ratio is at
        least nontriviality_threshold
    """
    _require_pmp_field(p.field)
    jumps = set(u_star.breakpoints()) | set(p.B.jumps)

    residuals = np.empty(len(adj.times))
    for i, (t, psi) in enumerate(zip(adj.times, adj.psi)):
        residual = _residual_at(psi, p.B.at(t), eval_control(u_star, t), p.rho0)
        if float(t) in jumps:
            t_left = np.nextafter(t, -math.inf)
            residual = min(residual, _residual_at(psi, p.B.at(t_left), eval_control(u_star, t_left), p.rho0))
        residuals[i] = residual
    worst = int(np.argmax(residuals))

    expected = terminal_condition(p.field, traj.state_at(adj.terminal_time))
    terminal_norm = float(np.linalg.norm(adj.psi[0]))
    terminal_error = float(np.linalg.norm(adj.psi[0] - expected))
    ratio = nontriviality_ratio(p.field, traj.state_at(float(adj.times[-1])), adj.psi[-1])

    max_residual = float(residuals[worst])
    passed = (
        max_residual <= APP_CONFIG["residual_tol"]
        and ratio >= APP_CONFIG["nontriviality_threshold"]
        and terminal_error <= 1e-9 * (1.0 + float(np.linalg.norm(expected)))
    )
    if not passed:
        logger.warning(
            f"Maximum-principle certificate failed: residual={max_residual:.3g} at t={adj.times[worst]:.6g}, "
            f"ratio={ratio:.3g}, terminal error={terminal_error:.3g}"
        )
    return PMPCertificate(
        max_residual=max_residual,
        worst_t=float(adj.times[worst]),
        terminal_norm=terminal_norm,
        terminal_error=terminal_error,
        nontriviality_ratio=ratio,
        passed=passed,
    )


# ===== Penalty =====

def penalty_value(
    p: ProblemSpec,
    u: ControlSignal,
    epsilon: float,
    t_star: Optional[float] = None,
    cfg: Optional[IntegratorConfig] = None
) -> float:
    """
    (y1 - 1)^2 / 2 (f1) or (||y|| - 1)^2 / 2 (f2) at t_star - epsilon.

    t_star defaults to the analytic bound. A run that quenches before
    t_star - epsilon has reached the target and scores 0.
    """
    _require_pmp_field(p.field)
    if t_star is None:
        t_star = quench_time_bound(p)
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be positive, got {epsilon}")
    if epsilon >= t_star:
        raise EpsilonTooLarge(f"epsilon={epsilon:.6g} is not below t_star={t_star:.6g}")

    traj = integrate_until(p, u, t_star - epsilon, cfg)
    if traj.quench is not None:
        return 0.0
    y = traj.states[-1]
    if p.field is FieldKind.F1:
        gap = y[0] - 1.0
    else:
        gap = math.hypot(y[0], y[1]) - 1.0
    return 0.5 * gap * gap
