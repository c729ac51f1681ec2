"""
Quench Integrator Module
========================
Adaptive integration of the controlled systems up to the quenching time,
the stop-then-extrapolate quench-time estimator, the radial reduction of
the f2 system and the closed-form comparison solutions used as oracles.

The stepper is an embedded Dormand-Prince 5(4) pair with PI step-size
control. Stage evaluations that hit or cross the singular set count as
rejections, and near the singular set each step is capped at a fixed
fraction of distance / ||f(y)||. Control and matrix breakpoints are step
boundaries.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from quenchlab.config import APP_CONFIG, Branch, FieldKind, IntegratorConfig
from quenchlab.core.analysis import quench_time_bound
from quenchlab.core.controls import (
    ControlSignal,
    ProblemSpec,
    apply_B,
    check_admissible,
    eval_control,
)
from quenchlab.core.fields import State, branch_of, eval_field, singular_distance
from quenchlab.errors import (
    HorizonExceeded,
    IntegrationError,
    InvalidParameter,
    LeftSeedRegion,
    ModelMismatch,
    OutOfWindow,
    SingularInput,
    WrongField,
)
from quenchlab.models.quench_models import CertificateReport


logger = logging.getLogger(__name__)


# ===== Dormand-Prince 5(4) Tableau =====

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

# PI controller constants
_EXPO1 = 0.17
_BETA = 0.04
_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_REJECT_SHRINK = 0.25
_MAX_CROSSINGS = 40
_MAX_STEPS = 200_000
_TAIL_WINDOW = 8


# ===== Result Types =====

@dataclass(frozen=True, eq=False)
class QuenchEstimate:
    """
    Extrapolated quenching time with its model bracket.

    terminal_y2_or_radius holds the finite limit data of the run: y2 for
    f1, the radius for f2 and the distance ratio |1-y2|/|1-y1| for f3.
    """
    t_hat: float
    bracket_lo: float
    bracket_hi: float
    terminal_state: np.ndarray
    terminal_y2_or_radius: float

    @property
    def width(self) -> float:
        return self.bracket_hi - self.bracket_lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.bracket_lo + self.bracket_hi)


@dataclass(eq=False)
class Trajectory:
    """Sampled solution y(.; f, y0, u) on [0, times[-1]]."""
    problem: ProblemSpec
    control_used: ControlSignal
    times: np.ndarray
    states: np.ndarray
    rates_left: np.ndarray
    rates_right: np.ndarray
    segment_starts: np.ndarray
    quench: Optional[QuenchEstimate] = None
    _splines: Optional[list] = field(default=None, init=False, repr=False, compare=False)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def distances(self) -> np.ndarray:
        return np.array([singular_distance(self.problem.field, y) for y in self.states])

    def tail(self, n: int) -> "Trajectory":
        """Trajectory restricted to its last n samples (one smooth segment)."""
        start = max(len(self.times) - n, 0)
        return Trajectory(
            problem=self.problem,
            control_used=self.control_used,
            times=self.times[start:],
            states=self.states[start:],
            rates_left=self.rates_left[start:],
            rates_right=self.rates_right[start:],
            segment_starts=np.zeros(1, dtype=int),
            quench=self.quench,
        )

    def state_at(self, t: float) -> State:
        """Cubic Hermite interpolation of the state, segment by segment."""
        if self._splines is None:
            self._splines = self._build_splines()
        starts = [s[0] for s in self._splines]
        k = int(np.searchsorted(starts, t, side="right")) - 1
        _, spline = self._splines[min(max(k, 0), len(self._splines) - 1)]
        return spline(t)

    def _build_splines(self) -> list:
        bounds = list(self.segment_starts) + [len(self.times) - 1]
        splines = []
        for i0, i1 in zip(bounds[:-1], bounds[1:]):
            if i1 <= i0:
                continue
            slopes = self.rates_left[i0:i1 + 1].copy()
            slopes[0] = self.rates_right[i0]
            spline = CubicHermiteSpline(
                self.times[i0:i1 + 1], self.states[i0:i1 + 1], slopes, axis=0
            )
            splines.append((float(self.times[i0]), spline))
        if not splines:
            raise InvalidParameter("trajectory has a single sample; nothing to interpolate")
        return splines


@dataclass(eq=False)
class ScalarTrajectory:
    """Run of a scalar (or coupled comparison) quench ODE."""
    times: np.ndarray
    values: np.ndarray
    quench: Optional[QuenchEstimate] = None


# ===== Stepper =====

@dataclass
class _Run:
    times: List[float]
    states: List[np.ndarray]
    rates_left: List[np.ndarray]
    rates_right: List[np.ndarray]
    segment_starts: List[int]
    quenched: bool = False


class _QuenchStepper:
    """Dormand-Prince 5(4) marcher that stops at the singular set or a stop time."""

    def __init__(
        self,
        rhs: Callable[[float, np.ndarray], np.ndarray],
        distance: Callable[[np.ndarray], float],
        on_branch: Callable[[np.ndarray], bool],
        speed: Callable[[np.ndarray], float],
        cfg: IntegratorConfig,
        t_cap: float,
        max_step: float,
        breakpoints: Sequence[float] = ()
    ):
        self.rhs = rhs
        self.distance = distance
        self.on_branch = on_branch
        self.speed = speed
        self.cfg = cfg
        self.t_cap = t_cap
        self.max_step = max_step
        self.breakpoints = breakpoints

    def _eval(self, t: float, y: np.ndarray, s0: float, s1: float) -> np.ndarray:
        # Pieces are left-closed, so the right end of a segment uses the left value.
        return self.rhs(min(t, np.nextafter(s1, s0)), y)

    def _cap(self, y: np.ndarray) -> float:
        speed = self.speed(y)
        if speed <= 0.0:
            return math.inf
        return APP_CONFIG["step_cap_fraction"] * self.distance(y) / speed

    def _step(self, t, y, h, k1, s0, s1):
        stages = [k1]
        for i in range(1, 7):
            y_stage = y + h * sum(a * k for a, k in zip(_A[i], stages))
            if not self.on_branch(y_stage):
                return None
            stages.append(self._eval(t + _C[i] * h, y_stage, s0, s1))
        # Row 6 of the tableau holds the fifth-order weights (FSAL).
        y_new = y + h * sum(a * k for a, k in zip(_A[6], stages))
        if not self.on_branch(y_new):
            return None
        err = h * sum(e * k for e, k in zip(_E, stages))
        return y_new, stages[6], err

    def run(self, y0: np.ndarray, stop_time: Optional[float] = None) -> _Run:
        edges = {b for b in self.breakpoints if 0.0 < b < self.t_cap}
        if stop_time is not None and stop_time < self.t_cap:
            edges.add(stop_time)
        edges = sorted(edges) + [self.t_cap]

        t, y = 0.0, np.array(y0, dtype=float)
        seg = 0
        s0, s1 = 0.0, edges[0]
        k1 = self._eval(t, y, s0, s1)
        run = _Run([t], [y], [k1], [k1], [0])
        if stop_time is not None and stop_time <= 0.0:
            return run

        h = min(self.max_step, self._cap(y), s1 - t)
        err_old = 1e-4
        crossings = 0
        steps = 0
        while True:
            if self.distance(y) <= self.cfg.delta_stop:
                run.quenched = True
                return run
            if t >= s1:
                if stop_time is not None and s1 >= stop_time:
                    return run
                if seg == len(edges) - 1:
                    raise HorizonExceeded(f"no quench before t_cap={self.t_cap:.6g}")
                seg += 1
                s0, s1 = s1, edges[seg]
                k1 = self._eval(t, y, s0, s1)
                run.rates_right[-1] = k1
                run.segment_starts.append(len(run.times) - 1)

            steps += 1
            if steps > _MAX_STEPS:
                raise IntegrationError(f"step budget exhausted at t={t:.6g}")
            h = min(h, self.max_step, self._cap(y), s1 - t)
            # Stretch onto the segment end instead of leaving a sliver behind.
            if s1 - t - h < 0.01 * h:
                h = s1 - t
            hits_end = h >= s1 - t
            if h <= 1e-15 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.6g}")

            try:
                attempt = self._step(t, y, h, k1, s0, s1)
            except SingularInput:
                attempt = None
            if attempt is None:
                crossings += 1
                if crossings > _MAX_CROSSINGS:
                    raise LeftSeedRegion(f"state keeps leaving its branch near t={t:.6g}")
                h *= _REJECT_SHRINK
                continue
            crossings = 0

            y_new, k7, err_vec = attempt
            scale = self.cfg.atol + self.cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            fac11 = err ** _EXPO1
            if err <= 1.0:
                fac = fac11 / err_old ** _BETA
                fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFETY))
                t = s1 if hits_end else t + h
                y = y_new
                k1 = k7
                run.times.append(t)
                run.states.append(y)
                run.rates_left.append(k7)
                run.rates_right.append(k7)
                err_old = max(err, 1e-4)
                h = h / fac
            else:
                h = h / min(1.0 / _FAC_MIN, fac11 / _SAFETY)


def _to_trajectory(p: ProblemSpec, u: ControlSignal, run: _Run) -> Trajectory:
    return Trajectory(
        problem=p,
        control_used=u,
        times=np.array(run.times),
        states=np.array(run.states),
        rates_left=np.array(run.rates_left),
        rates_right=np.array(run.rates_right),
        segment_starts=np.array(run.segment_starts, dtype=int),
    )


# ===== Quench-Time Estimation =====

def _extrapolate(
    t_end: float,
    remainder: float,
    rate: float,
    base: float,
    slack: float,
    delta_stop: float,
    terminal_state: np.ndarray,
    limit_data: float
) -> QuenchEstimate:
    """Close the gap remainder / rate and bracket it with base +- slack."""
    if rate <= 0.0 or base - slack <= 0.0:
        raise ModelMismatch(
            f"approach rate has the wrong sign for the branch (rate={rate:.6g}, "
            f"base={base:.6g}, slack={slack:.6g})"
        )
    t_hat = t_end + remainder / rate
    lo = min(t_end + remainder / (base + slack), t_hat)
    hi = max(t_end + remainder / (base - slack), t_hat)
    if hi - lo > APP_CONFIG["bracket_width_factor"] * delta_stop ** 2:
        raise ModelMismatch(f"bracket width {hi - lo:.3g} exceeds the square-root model tolerance")
    return QuenchEstimate(
        t_hat=t_hat,
        bracket_lo=lo,
        bracket_hi=hi,
        terminal_state=np.array(terminal_state, dtype=float),
        terminal_y2_or_radius=float(limit_data),
    )


def _require_decreasing(distances: np.ndarray) -> None:
    n_tail = APP_CONFIG["min_tail_samples"]
    if distances.shape[0] < n_tail:
        raise ModelMismatch(f"need at least {n_tail} tail samples, got {distances.shape[0]}")
    tail = distances[-n_tail:]
    if np.any(np.diff(tail, axis=0) >= 0.0):
        raise ModelMismatch("distance to the singular set is not decreasing along the tail")


def _check_tail(tail: "Trajectory", distances: np.ndarray) -> None:
    # A start already within delta_stop is a single sample at t = 0; the
    # square-root model only needs the last state.
    if len(tail.times) == 1 and tail.times[0] == 0.0:
        return
    _require_decreasing(distances)


def _radial_estimate(
    t_end: float,
    radius: float,
    drift: float,
    drift_bound: float,
    branch: Branch,
    delta_stop: float,
    terminal_state: np.ndarray
) -> QuenchEstimate:
    # (1-r)^2/2 shrinks at rate r + a*d below the unit circle, r - a*d above it.
    gap = abs(1.0 - radius)
    sign = 1.0 if branch is Branch.BELOW else -1.0
    return _extrapolate(
        t_end,
        remainder=0.5 * gap * gap,
        rate=radius + sign * gap * drift,
        base=radius,
        slack=drift_bound * gap + gap,
        delta_stop=delta_stop,
        terminal_state=terminal_state,
        limit_data=radius,
    )


def estimate_quench_time(kind: FieldKind, tail: Trajectory, delta_stop: float) -> QuenchEstimate:
    """
    Extrapolate the quenching time from the tail of a trajectory.

    Uses the dominant-balance square-root law near the singular set: for f1
    (1-y1)^2/2 shrinks at rate y2 +- (1-y1) b1, for f2 the radial analogue,
    for f3 the product (1-y1)(1-y2) shrinks at rate 2 +- (b1 (1-y2) + b2 (1-y1)).
    The bracket replaces the drift by its worst case +-K0.

    Args:
        kind: Field of the trajectory
        tail: Trajectory whose last sample is within delta_stop of the singular set
        delta_stop: Stopping radius used by the integrator

    Returns:
        QuenchEstimate with bracket_lo <= t_hat <= bracket_hi
    """
    p = tail.problem
    if kind is not p.field:
        raise WrongField(f"trajectory belongs to {p.field.value}, not {kind.value}")

    t_end = float(tail.times[-1])
    y = tail.states[-1]
    k0 = p.k0
    below = p.branch is Branch.BELOW
    sign = 1.0 if below else -1.0
    control_time = np.nextafter(t_end, -math.inf) if t_end > 0 else 0.0
    drift = apply_B(p.B, control_time, eval_control(tail.control_used, control_time))

    if kind is FieldKind.F3:
        gaps = np.abs(1.0 - tail.states)
        _check_tail(tail, gaps)
        a, b = float(gaps[-1, 0]), float(gaps[-1, 1])
        return _extrapolate(
            t_end,
            remainder=a * b,
            rate=2.0 + sign * (drift[0] * b + drift[1] * a),
            base=2.0,
            slack=k0 * (a + b),
            delta_stop=delta_stop,
            terminal_state=y,
            limit_data=b / a,
        )

    _check_tail(tail, tail.distances())

    if kind is FieldKind.F2:
        radius = math.hypot(y[0], y[1])
        radial_drift = float(np.dot(y, drift)) / radius
        return _radial_estimate(t_end, radius, radial_drift, k0, p.branch, delta_stop, y)

    a = abs(1.0 - y[0])
    remainder = 0.5 * a * a
    base = float(y[1])
    slack = k0 * a
    if base > 0.0:
        # y2 keeps moving at speed at most |y1 + y2| + K0 over the remaining time.
        slack += (abs(y[0] + y[1]) + k0) * remainder / base
    return _extrapolate(
        t_end,
        remainder=remainder,
        rate=base + sign * a * drift[0],
        base=base,
        slack=slack,
        delta_stop=delta_stop,
        terminal_state=y,
        limit_data=y[1],
    )


# ===== Full System =====

def resolve_horizon(p: ProblemSpec, cfg: IntegratorConfig) -> tuple:
    """(t_cap, max_step) with the defaults 2 x analytic bound and t_cap / 10."""
    t_cap = cfg.t_cap if cfg.t_cap is not None else 2.0 * quench_time_bound(p)
    max_step = cfg.max_step if cfg.max_step is not None else t_cap / 10.0
    return t_cap, max_step


def _system_stepper(p: ProblemSpec, u: ControlSignal, cfg: IntegratorConfig) -> _QuenchStepper:
    kind = p.field

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return eval_field(kind, y) + apply_B(p.B, t, eval_control(u, t))

    def speed(y: np.ndarray) -> float:
        f = eval_field(kind, y)
        return math.hypot(f[0], f[1])

    t_cap, max_step = resolve_horizon(p, cfg)
    return _QuenchStepper(
        rhs=rhs,
        distance=lambda y: singular_distance(kind, y),
        on_branch=lambda y: branch_of(kind, y) is p.branch,
        speed=speed,
        cfg=cfg,
        t_cap=t_cap,
        max_step=max_step,
        breakpoints=u.breakpoints() + p.B.jumps,
    )


def integrate_to_quench(
    p: ProblemSpec,
    u: ControlSignal,
    cfg: Optional[IntegratorConfig] = None
) -> Trajectory:
    """
    Integrate y' = f(y) + B(t) u(t) from y0 until the singular set is reached.

    Args:
        p: Validated problem
        u: Admissible control
        cfg: Integrator configuration (defaults if None)

    Returns:
        Trajectory with its QuenchEstimate attached

    Raises:
        HorizonExceeded: If t_cap is reached before quench
        LeftSeedRegion: If the integration cannot stay on the branch of y0
        ModelMismatch: If the tail does not fit the square-root model
    """
    cfg = cfg or IntegratorConfig()
    check_admissible(u, p.rho0)
    logger.info(f"Integrating {p.field.value} from y0={p.y0.tolist()} ({u.kind} control)")

    run = _system_stepper(p, u, cfg).run(p.y0)
    traj = _to_trajectory(p, u, run)
    traj.quench = estimate_quench_time(p.field, traj.tail(_TAIL_WINDOW), cfg.delta_stop)

    logger.info(
        f"Quench estimate t_hat={traj.quench.t_hat:.12g} after {len(traj.times)} samples "
        f"(bracket width {traj.quench.width:.3g})"
    )
    return traj


def integrate_until(
    p: ProblemSpec,
    u: ControlSignal,
    t_end: float,
    cfg: Optional[IntegratorConfig] = None
) -> Trajectory:
    """
    Integrate to t_end, or to quench if that comes first.

    The returned trajectory carries a QuenchEstimate only when it quenched.
    """
    if t_end < 0:
        raise InvalidParameter(f"t_end must be non-negative, got {t_end}")
    cfg = cfg or IntegratorConfig()
    check_admissible(u, p.rho0)
    run = _system_stepper(p, u, cfg).run(p.y0, stop_time=t_end)
    traj = _to_trajectory(p, u, run)
    if run.quenched:
        traj.quench = estimate_quench_time(p.field, traj.tail(_TAIL_WINDOW), cfg.delta_stop)
        logger.debug(f"Quenched at {traj.quench.t_hat:.6g} before t_end={t_end:.6g}")
    return traj


# ===== Radial Reduction =====

def integrate_radial_f2(
    r0: float,
    drift: Union[float, Callable[[float], float]],
    cfg: Optional[IntegratorConfig] = None,
    breakpoints: Sequence[float] = (),
    drift_bound: Optional[float] = None
) -> ScalarTrajectory:
    """
    Integrate r' = r / (1 - r) + d(t), the radial reduction of the f2 system.

    Args:
        r0: Initial radius, positive and off 1
        drift: Constant radial drift or a function of time
        cfg: Integrator configuration
        breakpoints: Jump times of a time-dependent drift
        drift_bound: Bound on |d(t)|; required for a callable drift

    Returns:
        ScalarTrajectory of the radius with its quench estimate
    """
    cfg = cfg or IntegratorConfig()
    if not r0 > 0:
        raise InvalidParameter(f"r0 must be positive, got {r0}")
    if abs(1.0 - r0) < APP_CONFIG["singular_guard"] * (1.0 + r0):
        raise SingularInput("r0 lies on the unit circle")

    if callable(drift):
        if drift_bound is None:
            raise InvalidParameter("drift_bound is required for a time-dependent drift")
        drift_at = drift
        bound = float(drift_bound)
    else:
        constant = float(drift)
        bound = abs(constant)

        def drift_at(t: float) -> float:
            return constant

    branch = Branch.BELOW if r0 < 1.0 else Branch.ABOVE
    gap0 = abs(1.0 - r0)
    if cfg.t_cap is not None:
        t_cap = cfg.t_cap
    else:
        rate_floor = (r0 if branch is Branch.BELOW else 1.0) - gap0 * bound
        if rate_floor <= 0:
            raise InvalidParameter("drift may stall the radius; pass an explicit t_cap")
        t_cap = gap0 * gap0 / rate_floor
    max_step = cfg.max_step if cfg.max_step is not None else t_cap / 10.0

    def radial_field(r: float) -> float:
        if abs(1.0 - r) < APP_CONFIG["singular_guard"] * (1.0 + abs(r)):
            raise SingularInput(f"radius {r} is on the unit circle")
        return r / (1.0 - r)

    stepper = _QuenchStepper(
        rhs=lambda t, y: np.array([radial_field(y[0]) + drift_at(t)]),
        distance=lambda y: abs(1.0 - y[0]),
        on_branch=lambda y: (y[0] < 1.0) == (branch is Branch.BELOW) and y[0] != 1.0,
        speed=lambda y: abs(radial_field(y[0])),
        cfg=cfg,
        t_cap=t_cap,
        max_step=max_step,
        breakpoints=breakpoints,
    )
    run = stepper.run(np.array([r0]))
    values = np.array(run.states)[:, 0]
    _require_decreasing(np.abs(1.0 - values))
    t_end = run.times[-1]
    control_time = np.nextafter(t_end, -math.inf)
    quench = _radial_estimate(
        t_end, float(values[-1]), float(drift_at(control_time)), bound, branch,
        cfg.delta_stop, np.array([values[-1]]),
    )
    return ScalarTrajectory(times=np.array(run.times), values=values, quench=quench)


# ===== Comparison Solutions =====

@dataclass(frozen=True)
class ComparisonSolution:
    """
    Closed-form solution of chi' = c / (2 (1 - chi)), chi(0) = start.

    (1 - chi)^2 = (start - 1)^2 - c t, so chi reaches 1 at (start - 1)^2 / c.
    The coupled f3 comparison system has both components equal to this
    solution with c = 1.
    """
    name: str
    start: float
    coefficient: float
    coupled: bool = False

    @property
    def branch(self) -> Branch:
        return Branch.BELOW if self.start < 1.0 else Branch.ABOVE

    def window(self) -> float:
        return (self.start - 1.0) ** 2 / self.coefficient

    def value(self, t: float) -> float:
        window = self.window()
        # The window is rounded; times within a few ulps of it are the endpoint.
        if window < t <= window + 8.0 * np.spacing(window):
            t = window
        if t < 0 or t > window:
            raise OutOfWindow(f"{self.name}: t={t} outside [0, {window:.12g}]")
        if t == window:
            return 1.0
        gap = math.sqrt(max((self.start - 1.0) ** 2 - self.coefficient * t, 0.0))
        return 1.0 - gap if self.branch is Branch.BELOW else 1.0 + gap


def chi_f1(y1_0: float) -> ComparisonSolution:
    if y1_0 == 1.0:
        raise SingularInput("y1_0 = 1 is on the singular set")
    return ComparisonSolution(name="chi_f1", start=float(y1_0), coefficient=1.0)


def chi_f2(y0_norm: float, k0: float) -> ComparisonSolution:
    if not k0 > 0:
        raise InvalidParameter(f"K0 must be positive, got {k0}")
    if y0_norm == 1.0:
        raise SingularInput("||y0|| = 1 is on the singular set")
    return ComparisonSolution(
        name="chi_f2", start=float(y0_norm), coefficient=2.0 * k0 / (2.0 * k0 + 1.0)
    )


def chi_f3(k0: float, branch: Branch = Branch.BELOW) -> ComparisonSolution:
    if not k0 > 0:
        raise InvalidParameter(f"K0 must be positive, got {k0}")
    offset = 1.0 / (2.0 * k0)
    start = 1.0 - offset if branch is Branch.BELOW else 1.0 + offset
    return ComparisonSolution(name="chi_f3", start=start, coefficient=1.0, coupled=True)


def comparison_solution(solution: ComparisonSolution, t: float) -> float:
    """Closed-form value of a comparison solution at t."""
    return solution.value(t)


def integrate_comparison(
    solution: ComparisonSolution,
    cfg: Optional[IntegratorConfig] = None
) -> ScalarTrajectory:
    """
    Integrate a comparison ODE numerically with the quench stepper.

    The coupled f3 system chi1' = 1/(2(1-chi2)), chi2' = 1/(2(1-chi1)) is
    integrated in two dimensions; its values array has two columns.
    """
    cfg = cfg or IntegratorConfig()
    c = solution.coefficient
    below = solution.branch is Branch.BELOW
    t_cap = cfg.t_cap if cfg.t_cap is not None else 2.0 * solution.window()
    max_step = cfg.max_step if cfg.max_step is not None else t_cap / 10.0
    guard = APP_CONFIG["singular_guard"]

    def inverse_gap(x: float) -> float:
        if abs(1.0 - x) < guard * (1.0 + abs(x)):
            raise SingularInput(f"comparison value {x} reached 1")
        return 1.0 / (1.0 - x)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        if solution.coupled:
            return 0.5 * np.array([inverse_gap(y[1]), inverse_gap(y[0])])
        return np.array([0.5 * c * inverse_gap(y[0])])

    def on_branch(y: np.ndarray) -> bool:
        return bool(np.all(y < 1.0)) if below else bool(np.all(y > 1.0))

    y0 = np.full(2 if solution.coupled else 1, solution.start)
    stepper = _QuenchStepper(
        rhs=rhs,
        distance=lambda y: float(np.min(np.abs(1.0 - y))),
        on_branch=on_branch,
        speed=lambda y: float(np.linalg.norm(rhs(0.0, y))),
        cfg=cfg,
        t_cap=t_cap,
        max_step=max_step,
    )
    run = stepper.run(y0)
    states = np.array(run.states)
    gaps = np.abs(1.0 - states)
    _require_decreasing(gaps)
    t_end = run.times[-1]

    if solution.coupled:
        a, b = float(gaps[-1, 0]), float(gaps[-1, 1])
        remainder, rate, limit = a * b, 1.0, b / a
        values = states
    else:
        a = float(gaps[-1, 0])
        remainder, rate, limit = 0.5 * a * a, 0.5 * c, states[-1, 0]
        values = states[:, 0]

    quench = _extrapolate(t_end, remainder, rate, rate, 0.0, cfg.delta_stop, states[-1], limit)
    logger.info(f"{solution.name}: numeric quench {quench.t_hat:.12g}, closed form {solution.window():.12g}")
    return ScalarTrajectory(times=np.array(run.times), values=values, quench=quench)


def check_comparison_ordering(traj: Trajectory) -> CertificateReport:
    """
    Compare a run with its closed-form comparison solution at every sample.

    f1 below the singular set stays at or above chi_f1 and above it at or
    below; f2 below the unit circle keeps ||y|| at or above chi_f2.
    """
    p = traj.problem
    below = p.branch is Branch.BELOW
    if p.field is FieldKind.F1:
        solution = chi_f1(float(p.y0[0]))
        observed = traj.states[:, 0]
    elif p.field is FieldKind.F2 and below:
        solution = chi_f2(math.hypot(p.y0[0], p.y0[1]), p.k0)
        observed = np.hypot(traj.states[:, 0], traj.states[:, 1])
    else:
        raise WrongField(f"no comparison ordering for {p.field.value} on the {p.branch.value} branch")

    window = solution.window()
    inside = traj.times <= window
    reference = np.array([solution.value(t) for t in traj.times[inside]])
    margins = observed[inside] - reference if below else reference - observed[inside]
    worst = int(np.argmin(margins))
    tol = APP_CONFIG["certificate_tol"]
    return CertificateReport(
        name="comparison_ordering",
        passed=bool(margins[worst] >= -tol),
        worst_t=float(traj.times[inside][worst]),
        worst_margin=float(margins[worst]),
        detail=f"{solution.name} from {solution.start:.6g}, window {window:.6g}",
    )
