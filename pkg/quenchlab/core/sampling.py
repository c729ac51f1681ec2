"""
Sampling Module
===============
Seeded random admissible problems and bang-bang controls for the
verification suites and the property tests.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from quenchlab.config import Branch, ControlExtension, FieldKind
from quenchlab.core.analysis import quench_time_bound
from quenchlab.core.controls import (
    ControlSignal,
    MatrixSignal,
    ProblemSpec,
    build_problem,
    compute_k0,
    constant_matrix,
    piecewise_control,
)
from quenchlab.core.fields import E_MINUS_THREE_HALVES


logger = logging.getLogger(__name__)

# Spread of y0 inside the seed region, as a fraction of its width.
_MARGIN = (0.05, 0.95)


def random_matrix_signal(rng: np.random.Generator) -> MatrixSignal:
    """Constant B with entries uniform in [-1, 1] and norm at least 0.1."""
    while True:
        b = rng.uniform(-1.0, 1.0, size=(2, 2))
        if np.linalg.norm(b, 2) >= 0.1:
            return constant_matrix(b)


def _random_y0(field: FieldKind, branch: Branch, k0: float, rng: np.random.Generator) -> np.ndarray:
    frac = rng.uniform(*_MARGIN)
    below = branch is Branch.BELOW
    if field is FieldKind.F1:
        width = 1.0 / (2.0 * k0)
        y1 = 1.0 - frac * width if below else 1.0 + frac * width
        floor = k0 + 1.0 / k0 - 1.0 if below else k0 + 1.0
        return np.array([y1, floor + rng.uniform(0.1, 3.0)])
    if field is FieldKind.F2:
        width = 1.0 / (2.0 * k0 + 1.0) if below else 1.0 / (2.0 * k0)
        radius = 1.0 - frac * width if below else 1.0 + frac * width
        angle = rng.uniform(0.0, 2.0 * math.pi)
        return radius * np.array([math.cos(angle), math.sin(angle)])
    width = E_MINUS_THREE_HALVES / (2.0 * k0)
    fracs = np.array([frac, rng.uniform(*_MARGIN)])
    return 1.0 - fracs * width if below else 1.0 + fracs * width


def random_problem(
    field: FieldKind,
    rng: np.random.Generator,
    branch: Optional[Branch] = None
) -> ProblemSpec:
    """
    Random problem with y0 strictly inside the seed region of `field`.

    Args:
        field: Vector field
        rng: Random generator
        branch: Side of the singular set; random if None

    Returns:
        Validated ProblemSpec
    """
    B = random_matrix_signal(rng)
    rho0 = float(rng.uniform(0.5, 2.0))
    if branch is None:
        branch = Branch.BELOW if rng.uniform() < 0.5 else Branch.ABOVE
    y0 = _random_y0(field, branch, compute_k0(B, rho0), rng)
    return build_problem(field, y0, rho0, B)


def random_bang_bang_control(p: ProblemSpec, rng: np.random.Generator, max_pieces: int = 4) -> ControlSignal:
    """Boundary-valued piecewise control on 1..max_pieces pieces spanning the bound."""
    pieces = int(rng.integers(1, max_pieces + 1))
    angles = rng.uniform(0.0, 2.0 * math.pi, pieces)
    values = p.rho0 * np.column_stack([np.cos(angles), np.sin(angles)])
    return piecewise_control(quench_time_bound(p) / pieces, values, ControlExtension.ZERO)


def random_cases(field: FieldKind, count: int, seed: int) -> List[Tuple[ProblemSpec, ControlSignal]]:
    """`count` reproducible (problem, control) pairs for one field."""
    offset = {FieldKind.F1: 0, FieldKind.F2: 1, FieldKind.F3: 2}[field]
    rng = np.random.default_rng([seed, offset])
    cases = []
    for _ in range(count):
        p = random_problem(field, rng)
        cases.append((p, random_bang_bang_control(p, rng)))
    logger.debug(f"Sampled {count} {field.value} cases with seed {seed}")
    return cases


def worked_example_problem() -> ProblemSpec:
    """Radial f2 problem: y0 = (3/4, 0), B = [[1, 0], [0, 0]], rho0 = 1."""
    return build_problem(FieldKind.F2, [0.75, 0.0], 1.0, constant_matrix([[1.0, 0.0], [0.0, 0.0]]))
