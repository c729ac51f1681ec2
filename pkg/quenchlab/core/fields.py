"""
Vector Fields Module
====================
The three singular planar vector fields, their Jacobians, the distance to
their singular sets and the seed regions from which every admissible
control produces a quench.

Jacobians are returned in the standard orientation J[i][j] = df_i/dy_j.
The derivative convention used in the optimality system is the transpose
of J; that transpose is applied in the pmp module only.
"""

import math
from typing import Optional, Sequence, Union

import numpy as np

from quenchlab.config import APP_CONFIG, Branch, FieldKind
from quenchlab.errors import InvalidParameter, SingularInput

# A State is a finite float array of shape (2,), a Matrix2 one of shape (2, 2).
State = np.ndarray
Matrix2 = np.ndarray

E_MINUS_THREE_HALVES = math.exp(-1.5)


def as_state(y: Union[Sequence[float], np.ndarray]) -> State:
    """Coerce to a finite float State."""
    arr = np.asarray(y, dtype=float)
    if arr.shape != (2,):
        raise InvalidParameter(f"state must have two coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"state must be finite, got {arr.tolist()}")
    return arr


def as_matrix(b: Union[Sequence[Sequence[float]], np.ndarray]) -> Matrix2:
    """Coerce to a finite 2x2 float matrix."""
    arr = np.asarray(b, dtype=float)
    if arr.shape != (2, 2):
        raise InvalidParameter(f"matrix must be 2x2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter("matrix entries must be finite")
    return arr


def spectral_norm(b: Matrix2) -> float:
    """Largest singular value of a 2x2 matrix."""
    return float(np.linalg.norm(b, 2))


def singular_distance(kind: FieldKind, y: State) -> float:
    """Distance-like measure to the singular (quench target) set of the field."""
    if kind is FieldKind.F1:
        return abs(1.0 - y[0])
    if kind is FieldKind.F2:
        return abs(1.0 - math.hypot(y[0], y[1]))
    return min(abs(1.0 - y[0]), abs(1.0 - y[1]))


def _guard(kind: FieldKind, y: State) -> None:
    scale = 1.0 + math.hypot(y[0], y[1])
    if singular_distance(kind, y) < APP_CONFIG["singular_guard"] * scale:
        raise SingularInput(f"{kind.value} is singular at y={np.asarray(y).tolist()}")


def eval_field(kind: FieldKind, y: State) -> State:
    """Evaluate f(y) exactly; raises SingularInput on the singular set."""
    _guard(kind, y)
    y1, y2 = float(y[0]), float(y[1])
    if kind is FieldKind.F1:
        return np.array([y2 / (1.0 - y1), y1 + y2])
    if kind is FieldKind.F2:
        scale = 1.0 / (1.0 - math.hypot(y1, y2))
        return np.array([y1 * scale, y2 * scale])
    return np.array([1.0 / (1.0 - y2), 1.0 / (1.0 - y1)])


def eval_jacobian(kind: FieldKind, y: State) -> Matrix2:
    """Standard Jacobian J[i][j] = df_i/dy_j."""
    _guard(kind, y)
    y1, y2 = float(y[0]), float(y[1])
    if kind is FieldKind.F1:
        d = 1.0 - y1
        return np.array([[y2 / (d * d), 1.0 / d], [1.0, 1.0]])
    if kind is FieldKind.F2:
        r = math.hypot(y1, y2)
        d = 1.0 - r
        jac = np.eye(2) / d
        if r > 0.0:
            jac += np.outer([y1, y2], [y1, y2]) / (r * d * d)
        return jac
    d1, d2 = 1.0 - y1, 1.0 - y2
    return np.array([[0.0, 1.0 / (d2 * d2)], [1.0 / (d1 * d1), 0.0]])


def branch_of(kind: FieldKind, y: State) -> Optional[Branch]:
    """Side of the singular set, or None when the predicate holds for neither side."""
    y1, y2 = float(y[0]), float(y[1])
    if kind is FieldKind.F1:
        side = y1
        return Branch.BELOW if side < 1.0 else Branch.ABOVE if side > 1.0 else None
    if kind is FieldKind.F2:
        r = math.hypot(y1, y2)
        return Branch.BELOW if r < 1.0 else Branch.ABOVE if r > 1.0 else None
    if y1 < 1.0 and y2 < 1.0:
        return Branch.BELOW
    if y1 > 1.0 and y2 > 1.0:
        return Branch.ABOVE
    return None


def in_seed_region(kind: FieldKind, y0: State, k0: float) -> Optional[Branch]:
    """Component of the seed region S^f containing y0 for parameter K0, if any."""
    if not k0 > 0:
        raise InvalidParameter(f"K0 must be positive, got {k0}")
    y1, y2 = float(y0[0]), float(y0[1])

    if kind is FieldKind.F1:
        half_width = 1.0 / (2.0 * k0)
        if 1.0 - half_width < y1 < 1.0 and y2 > k0 + 1.0 / k0 - 1.0:
            return Branch.BELOW
        if 1.0 < y1 < 1.0 + half_width and y2 > k0 + 1.0:
            return Branch.ABOVE
        return None

    if kind is FieldKind.F2:
        r = math.hypot(y1, y2)
        if 1.0 - 1.0 / (2.0 * k0 + 1.0) < r < 1.0:
            return Branch.BELOW
        if 1.0 < r < 1.0 + 1.0 / (2.0 * k0):
            return Branch.ABOVE
        return None

    half_width = E_MINUS_THREE_HALVES / (2.0 * k0)
    if 1.0 - half_width < y1 < 1.0 and 1.0 - half_width < y2 < 1.0:
        return Branch.BELOW
    if 1.0 < y1 < 1.0 + half_width and 1.0 < y2 < 1.0 + half_width:
        return Branch.ABOVE
    return None
