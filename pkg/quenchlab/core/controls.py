"""
Controls Module
===============
Admissible controls u(.), the matrix signal B(.), the problem definition
and the maximum-condition argmax.

Controls are piecewise constant on left-closed pieces. A piecewise control
carries an `end` time after which its `extension` applies (zero by default,
or the last value held). Constant and zero controls have no end.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from quenchlab.config import APP_CONFIG, Branch, ControlExtension, FieldKind
from quenchlab.core.fields import (
    Matrix2,
    State,
    as_matrix,
    as_state,
    in_seed_region,
    spectral_norm,
)
from quenchlab.errors import InvalidParameter, InvalidProblem, Unsupported


logger = logging.getLogger(__name__)


# ===== Matrix Signal =====

@dataclass(frozen=True, eq=False)
class MatrixSignal:
    """Piecewise-constant B(.): matrices[i] applies on [breakpoints[i], breakpoints[i+1])."""
    breakpoints: np.ndarray
    matrices: np.ndarray

    def at(self, t: float) -> Matrix2:
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.matrices[max(idx, 0)]

    @property
    def jumps(self) -> List[float]:
        return [float(b) for b in self.breakpoints[1:]]


def constant_matrix(b: Sequence[Sequence[float]]) -> MatrixSignal:
    return piecewise_matrix([0.0], [b])


def piecewise_matrix(
    breakpoints: Sequence[float],
    matrices: Sequence[Sequence[Sequence[float]]]
) -> MatrixSignal:
    """
    Build a piecewise-constant matrix signal.

    Args:
        breakpoints: Strictly increasing piece starts, the first equal to 0
        matrices: One 2x2 matrix per piece; the last extends to infinity

    Returns:
        Validated MatrixSignal
    """
    starts = np.asarray(breakpoints, dtype=float)
    mats = np.array([as_matrix(m) for m in matrices])
    if len(mats) == 0:
        raise InvalidParameter("matrix signal needs at least one piece")
    if starts.shape != (len(mats),):
        raise InvalidParameter("one breakpoint per matrix is required")
    if starts[0] != 0.0 or np.any(np.diff(starts) <= 0):
        raise InvalidParameter("breakpoints must start at 0 and strictly increase")
    if all(spectral_norm(m) == 0.0 for m in mats):
        raise InvalidParameter("matrix signal must be nontrivial")
    return MatrixSignal(breakpoints=starts, matrices=mats)


def compute_k0(B: MatrixSignal, rho0: float) -> float:
    """K0 = esssup ||B(t)|| * rho0, the max over pieces for a piecewise signal."""
    if not rho0 > 0:
        raise InvalidParameter(f"rho0 must be positive, got {rho0}")
    if len(B.matrices) == 0:
        raise InvalidParameter("matrix signal has no pieces")
    return max(spectral_norm(m) for m in B.matrices) * rho0


def apply_B(B: MatrixSignal, t: float, u_val: State) -> State:
    """Drift (b1, b2) = B(t) u."""
    return B.at(t) @ u_val


# ===== Control Signal =====

FeedbackLaw = Callable[[float], State]


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """
    An admissible control.

    kind is one of "zero", "constant", "piecewise", "feedback". For the
    first three, values[i] applies on [starts[i], starts[i+1]) and, past
    `end`, the extension decides. Feedback controls evaluate `law`.
    """
    kind: str
    starts: np.ndarray
    values: np.ndarray
    end: Optional[float] = None
    extension: ControlExtension = ControlExtension.ZERO
    law: Optional[FeedbackLaw] = None
    grid_step: Optional[float] = None

    @property
    def is_feedback(self) -> bool:
        return self.law is not None

    def tail_value(self) -> State:
        """Value taken on [end, inf)."""
        if self.end is None or self.extension is ControlExtension.HOLD:
            return self.values[-1]
        return np.zeros(2)

    def breakpoints(self) -> List[float]:
        """Times where the control may jump (piece starts after 0, and end)."""
        if self.is_feedback:
            return []
        points = [float(s) for s in self.starts[1:]]
        if self.end is not None:
            points.append(float(self.end))
        return points


def zero_control() -> ControlSignal:
    return ControlSignal(kind="zero", starts=np.zeros(1), values=np.zeros((1, 2)))


def constant_control(value: Sequence[float]) -> ControlSignal:
    return ControlSignal(
        kind="constant", starts=np.zeros(1), values=as_state(value).reshape(1, 2)
    )


def piecewise_control(
    grid_step: float,
    values: Sequence[Sequence[float]],
    extension: ControlExtension = ControlExtension.ZERO
) -> ControlSignal:
    """
    Piecewise-constant control on the uniform grid k * grid_step.

    Args:
        grid_step: Length of every piece
        values: One vector per piece
        extension: Behaviour after the last piece

    Returns:
        ControlSignal of kind "piecewise"
    """
    if not grid_step > 0:
        raise InvalidParameter(f"grid_step must be positive, got {grid_step}")
    vals = np.array([as_state(v) for v in values]).reshape(-1, 2)
    if len(vals) == 0:
        raise InvalidParameter("piecewise control needs at least one value")
    starts = grid_step * np.arange(len(vals), dtype=float)
    return ControlSignal(
        kind="piecewise",
        starts=starts,
        values=vals,
        end=grid_step * len(vals),
        extension=ControlExtension(extension),
        grid_step=grid_step,
    )


def stepwise_control(
    starts: Sequence[float],
    values: Sequence[Sequence[float]],
    end: Optional[float] = None,
    extension: ControlExtension = ControlExtension.ZERO
) -> ControlSignal:
    """Piecewise-constant control on an arbitrary increasing grid."""
    grid = np.asarray(starts, dtype=float)
    vals = np.array([as_state(v) for v in values]).reshape(-1, 2)
    if grid.shape != (len(vals),) or len(vals) == 0:
        raise InvalidParameter("one start per value is required")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise InvalidParameter("starts must begin at 0 and strictly increase")
    if end is not None and not end > grid[-1]:
        raise InvalidParameter(f"end ({end}) must follow the last start ({grid[-1]})")
    return ControlSignal(
        kind="piecewise",
        starts=grid,
        values=vals,
        end=end,
        extension=ControlExtension(extension),
    )


def feedback_control(psi_at: Callable[[float], State], B: MatrixSignal, rho0: float) -> ControlSignal:
    """Control u(t) = pmp_argmax(psi(t), B(t), rho0) driven by an adjoint snapshot."""

    def law(t: float) -> State:
        return pmp_argmax(psi_at(t), B.at(t), rho0)

    return ControlSignal(
        kind="feedback", starts=np.zeros(1), values=np.zeros((1, 2)), law=law
    )


def eval_control(u: ControlSignal, t: float) -> State:
    """Value of u at time t (left-closed pieces)."""
    if u.law is not None:
        return u.law(t)
    if u.end is not None and t >= u.end:
        return u.tail_value()
    idx = int(np.searchsorted(u.starts, t, side="right")) - 1
    return u.values[max(idx, 0)]


# ===== Problem Definition =====

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A quench problem: field, start, control bound and matrix signal."""
    field: FieldKind
    y0: State
    rho0: float
    B: MatrixSignal
    k0: float
    branch: Branch


def build_problem(
    field: FieldKind,
    y0: Sequence[float],
    rho0: float,
    B: MatrixSignal
) -> ProblemSpec:
    """
    Validate inputs and derive K0 and the branch.

    Raises:
        InvalidProblem: If y0 is outside the seed region of the field
    """
    kind = FieldKind(field)
    start = as_state(y0)
    k0 = compute_k0(B, rho0)
    branch = in_seed_region(kind, start, k0)
    if branch is None:
        raise InvalidProblem(
            f"y0={start.tolist()} is not in the seed region of {kind.value} for K0={k0:.6g}"
        )
    logger.debug(f"Problem {kind.value}: y0={start.tolist()}, K0={k0:.6g}, branch={branch.value}")
    return ProblemSpec(field=kind, y0=start, rho0=float(rho0), B=B, k0=k0, branch=branch)


def check_admissible(u: ControlSignal, rho0: float) -> None:
    """Raise InvalidParameter if any piece of u leaves the rho0-ball."""
    if u.is_feedback:
        return
    limit = rho0 * (1.0 + APP_CONFIG["admissible_slack"])
    norms = np.hypot(u.values[:, 0], u.values[:, 1])
    if np.any(norms > limit):
        worst = int(np.argmax(norms))
        raise InvalidParameter(
            f"control value {u.values[worst].tolist()} exceeds rho0={rho0}"
        )


def project_to_ball(v: np.ndarray, rho0: float) -> np.ndarray:
    """Radial projection of each row of v onto the closed rho0-ball."""
    rows = np.atleast_2d(np.asarray(v, dtype=float))
    norms = np.hypot(rows[:, 0], rows[:, 1])
    scale = np.where(norms > rho0, rho0 / np.where(norms > 0, norms, 1.0), 1.0)
    return rows * scale[:, None]


# ===== Maximum Condition =====

def pmp_argmax(psi: State, Bt: Matrix2, rho0: float) -> State:
    """
    Maximizer of <psi, B u> over ||u|| <= rho0.

    Returns rho0 * w / ||w|| with w = B^T psi, or zero when ||w|| is at or
    below tie_eps * (1 + ||psi||) * (1 + ||B||) (degenerate maximum).
    """
    w = Bt.T @ psi
    norm_w = math.hypot(w[0], w[1])
    tie = APP_CONFIG["tie_eps"] * (1.0 + math.hypot(psi[0], psi[1])) * (1.0 + spectral_norm(Bt))
    if norm_w <= tie:
        return np.zeros(2)
    return rho0 * w / norm_w


# ===== Grid Operations =====

def _merged_grid(controls: Iterable[ControlSignal], horizon: Optional[float] = None) -> List[float]:
    points = {0.0}
    for u in controls:
        if u.is_feedback:
            raise Unsupported("feedback controls have no breakpoint grid")
        points.update(u.breakpoints())
    grid = sorted(points)
    if horizon is not None:
        grid = [p for p in grid if p < horizon] + [horizon]
    return grid


def _agree(a: State, b: State) -> bool:
    return bool(np.all(np.abs(a - b) <= APP_CONFIG["agree_tol"]))


def ekeland_distance(u: ControlSignal, v: ControlSignal, horizon: float) -> float:
    """Measure of {t in [0, horizon]; u(t) != v(t)}, exact on the merged grid."""
    if not horizon > 0:
        raise InvalidParameter(f"horizon must be positive, got {horizon}")
    grid = _merged_grid([u, v], horizon)
    measure = 0.0
    for left, right in zip(grid[:-1], grid[1:]):
        if not _agree(eval_control(u, left), eval_control(v, left)):
            measure += right - left
    return measure


def _resample(starts: List[float], value_at: Callable[[float], State]) -> ControlSignal:
    values = [value_at(s) for s in starts]
    # Collapse neighbours with equal values so the grid stays minimal.
    kept_starts, kept_values = [starts[0]], [values[0]]
    for s, val in zip(starts[1:], values[1:]):
        if not np.array_equal(val, kept_values[-1]):
            kept_starts.append(s)
            kept_values.append(val)
    return stepwise_control(kept_starts, kept_values, end=None)


def blend_controls(u: ControlSignal, v: ControlSignal, h: float) -> ControlSignal:
    """Control u + h (v - u), exact on the merged grid of u and v."""
    grid = _merged_grid([u, v])
    return _resample(grid, lambda s: eval_control(u, s) + h * (eval_control(v, s) - eval_control(u, s)))


def patched_control(u: ControlSignal, t0: float, t1: float, value: Sequence[float]) -> ControlSignal:
    """Control equal to `value` on [t0, t1) and to u elsewhere."""
    if not 0 <= t0 < t1:
        raise InvalidParameter(f"patch window must satisfy 0 <= t0 < t1, got [{t0}, {t1})")
    patch = as_state(value)
    grid = sorted(set(_merged_grid([u])) | {t0, t1})
    return _resample(grid, lambda s: patch if t0 <= s < t1 else eval_control(u, s))

