"""
Analysis Module
===============
Checkable certificates on sampled trajectories: invariant regions,
analytic quench-time bounds, rate ceilings, monotone approach to the
singular set and the f3 distance-ratio bounds.

Certificates inspect sampled points only; nothing is claimed between
samples.
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from quenchlab.config import APP_CONFIG, Branch, FieldKind
from quenchlab.core.controls import ProblemSpec
from quenchlab.core.fields import E_MINUS_THREE_HALVES
from quenchlab.errors import (
    InvalidParameter,
    MissingQuenchEstimate,
    ParamOutOfRange,
    WrongField,
)
from quenchlab.models.quench_models import CertificateReport

if TYPE_CHECKING:
    from quenchlab.core.integrator import ScalarTrajectory, Trajectory


logger = logging.getLogger(__name__)

E_THREE_HALVES = math.exp(1.5)


# ===== Region Parameters =====

@dataclass(frozen=True)
class RegionParams:
    """Invariant-region parameters; None means derive from y0."""
    k1: Optional[float] = None
    k2: Optional[float] = None
    k1_above: Optional[float] = None
    k2_above: Optional[float] = None
    k3: Optional[float] = None
    k3_above: Optional[float] = None
    k4: Optional[float] = None
    k4_above: Optional[float] = None


def _ranges(k0: float) -> dict:
    """Open interval (lo, hi) each parameter must lie in."""
    w4 = E_MINUS_THREE_HALVES / (2.0 * k0)
    return {
        "k1": (1.0 - 1.0 / (2.0 * k0), 1.0),
        "k2": (k0 + 1.0 / k0 - 1.0, math.inf),
        "k1_above": (1.0, 1.0 + 1.0 / (2.0 * k0)),
        "k2_above": (k0 + 1.0, math.inf),
        "k3": (1.0 - 1.0 / (2.0 * k0 + 1.0), 1.0),
        "k3_above": (1.0, 1.0 + 1.0 / (2.0 * k0)),
        "k4": (1.0 - w4, 1.0),
        "k4_above": (1.0, 1.0 + w4),
    }


def default_region_params(p: ProblemSpec) -> RegionParams:
    """Parameters read off y0 for the branch of p."""
    y1, y2 = float(p.y0[0]), float(p.y0[1])
    below = p.branch is Branch.BELOW
    if p.field is FieldKind.F1:
        return RegionParams(k1=y1, k2=y2) if below else RegionParams(k1_above=y1, k2_above=y2)
    if p.field is FieldKind.F2:
        r = math.hypot(y1, y2)
        return RegionParams(k3=r) if below else RegionParams(k3_above=r)
    return RegionParams(k4=min(y1, y2)) if below else RegionParams(k4_above=max(y1, y2))


def resolve_region_params(p: ProblemSpec, params: Optional[RegionParams] = None) -> RegionParams:
    """Fill missing parameters from y0 and validate every supplied one."""
    defaults = default_region_params(p)
    if params is None:
        return defaults
    ranges = _ranges(p.k0)
    merged = {}
    for f in fields(RegionParams):
        value = getattr(params, f.name)
        if value is not None:
            lo, hi = ranges[f.name]
            if not lo < value < hi:
                raise ParamOutOfRange(f"{f.name}={value} outside ({lo:.6g}, {hi:.6g})")
        merged[f.name] = value if value is not None else getattr(defaults, f.name)
    return RegionParams(**merged)


# ===== Certificates =====

def _report(name: str, margins: np.ndarray, times: np.ndarray, tol: float, detail: str) -> CertificateReport:
    worst = int(np.argmin(margins))
    worst_margin = float(margins[worst])
    return CertificateReport(
        name=name,
        passed=worst_margin >= -tol,
        worst_t=float(times[worst]),
        worst_margin=worst_margin,
        detail=detail,
    )


def check_invariant_region(traj: "Trajectory", params: Optional[RegionParams] = None) -> CertificateReport:
    """
    Check that every sample stays in the invariant region of its branch.

    Below the singular set the state must stay in [K, 1) componentwise and
    above it in (1, K~]; for f1 the second coordinate must stay >= K2.

    Args:
        traj: Trajectory from integrate_to_quench
        params: Region parameters; missing ones default to y0

    Returns:
        CertificateReport with the smallest margin over samples
    """
    p = traj.problem
    k = resolve_region_params(p, params)
    states = traj.states
    y1, y2 = states[:, 0], states[:, 1]
    radius = np.hypot(y1, y2)
    below = p.branch is Branch.BELOW

    if p.field is FieldKind.F1:
        if below:
            margins = np.minimum.reduce([y1 - k.k1, 1.0 - y1, y2 - k.k2])
            detail = f"y1 in [{k.k1:.6g}, 1), y2 >= {k.k2:.6g}"
        else:
            margins = np.minimum.reduce([k.k1_above - y1, y1 - 1.0, y2 - k.k2_above])
            detail = f"y1 in (1, {k.k1_above:.6g}], y2 >= {k.k2_above:.6g}"
    elif p.field is FieldKind.F2:
        if below:
            margins = np.minimum(radius - k.k3, 1.0 - radius)
            detail = f"||y|| in [{k.k3:.6g}, 1)"
        else:
            margins = np.minimum(k.k3_above - radius, radius - 1.0)
            detail = f"||y|| in (1, {k.k3_above:.6g}]"
    else:
        if below:
            margins = np.minimum.reduce([y1 - k.k4, y2 - k.k4, 1.0 - np.maximum(y1, y2)])
            detail = f"y1, y2 in [{k.k4:.6g}, 1)"
        else:
            margins = np.minimum.reduce([k.k4_above - y1, k.k4_above - y2, np.minimum(y1, y2) - 1.0])
            detail = f"y1, y2 in (1, {k.k4_above:.6g}]"

    return _report("invariant_region", margins, traj.times, APP_CONFIG["certificate_tol"], detail)


def quench_time_bound(p: ProblemSpec) -> float:
    """Analytic upper bound on the quenching time under any admissible control."""
    if p.field is FieldKind.F1:
        return (float(p.y0[0]) - 1.0) ** 2
    if p.field is FieldKind.F2:
        r = math.hypot(p.y0[0], p.y0[1])
        return (2.0 * p.k0 + 1.0) * (r - 1.0) ** 2 / (2.0 * p.k0)
    return 1.0 / (4.0 * p.k0 ** 2)


def check_bound_compliance(traj: "Trajectory") -> CertificateReport:
    """t_hat + bracket width must not exceed the analytic bound."""
    quench = _require_quench(traj)
    bound = quench_time_bound(traj.problem)
    margin = bound - (quench.t_hat + quench.width)
    return CertificateReport(
        name="quench_time_bound",
        passed=margin >= 0.0,
        worst_t=quench.t_hat,
        worst_margin=margin,
        detail=f"t_hat={quench.t_hat:.12g}, bound={bound:.12g}",
    )


def _require_quench(traj):
    if traj.quench is None:
        raise MissingQuenchEstimate("trajectory carries no quench estimate")
    return traj.quench


def _approach_data(traj) -> Tuple[np.ndarray, np.ndarray, float]:
    """(times, distances, t_hat) for a full or scalar trajectory."""
    quench = _require_quench(traj)
    if hasattr(traj, "distances"):
        distances = traj.distances()
    else:
        values = np.asarray(traj.values, dtype=float)
        gaps = np.abs(1.0 - values)
        distances = gaps if gaps.ndim == 1 else gaps.min(axis=1)
    return np.asarray(traj.times, dtype=float), distances, quench.t_hat


def _rate_ratios(traj) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(times, t_hat - t, (t_hat - t)^(2/3) / distance); ratios are None if a sample is on the singular set."""
    times, distances, t_hat = _approach_data(traj)
    tau = t_hat - times
    if np.any(distances <= 0.0) or np.any(tau <= 0.0):
        return times, tau, None
    return times, tau, tau ** (2.0 / 3.0) / distances


def rate_ceiling(traj) -> float:
    """M = max (t_hat - t)^(2/3) / distance over the samples; inf if a sample is on the singular set."""
    _, _, ratio = _rate_ratios(traj)
    return math.inf if ratio is None else float(np.max(ratio))


def check_rate_estimate(traj: "Trajectory") -> CertificateReport:
    """
    Check that M = max (t_hat - t)^(2/3) / distance is finite and stable.

    The running maximum may grow by less than rate_growth_limit over the
    final decade of approach (t_hat - t shrinking tenfold).
    """
    times, tau, ratio = _rate_ratios(traj)
    limit = APP_CONFIG["rate_growth_limit"]

    if ratio is None:
        return CertificateReport(
            name="rate_estimate", passed=False, worst_t=float(times[-1]),
            worst_margin=-math.inf, detail="sample on the singular set or past t_hat",
        )

    running = np.maximum.accumulate(ratio)
    ceiling = float(running[-1])
    earlier = np.nonzero(tau >= 10.0 * tau[-1])[0]
    reference = float(running[earlier[-1]]) if len(earlier) else ceiling
    growth = ceiling / reference - 1.0
    return CertificateReport(
        name="rate_estimate",
        passed=bool(np.isfinite(ceiling)) and growth < limit,
        worst_t=float(times[int(np.argmax(ratio))]),
        worst_margin=limit - growth,
        detail=f"M={ceiling:.6g}, growth over final decade {growth:.3%}",
    )


def fit_approach_exponent(traj) -> float:
    """
    Least-squares slope of log(distance) against log(t_hat - t).

    Uses the samples within the final decade of distance; the square-root
    law gives 0.5.
    """
    times, distances, t_hat = _approach_data(traj)
    tau = t_hat - times
    mask = (distances <= 10.0 * distances[-1]) & (tau > 0.0)
    if mask.sum() < APP_CONFIG["min_tail_samples"]:
        mask = tau > 0.0
    if mask.sum() < 2:
        raise InvalidParameter("not enough samples near quench to fit an exponent")
    slope, _ = np.polyfit(np.log(tau[mask]), np.log(distances[mask]), 1)
    return float(slope)


def check_f3_ratio(traj: "Trajectory") -> CertificateReport:
    """Both ratios (1-y2)/(1-y1) and (1-y1)/(1-y2) stay below their initial values times e^(3/2)."""
    p = traj.problem
    if p.field is not FieldKind.F3:
        raise WrongField(f"ratio bounds apply to f3, not {p.field.value}")
    if p.branch is not Branch.BELOW:
        raise WrongField("ratio bounds are stated for the below branch of f3")

    gaps = 1.0 - traj.states
    a, b = gaps[:, 0], gaps[:, 1]
    bound_21 = (b[0] / a[0]) * E_THREE_HALVES
    bound_12 = (a[0] / b[0]) * E_THREE_HALVES
    margins = np.minimum(bound_21 - b / a, bound_12 - a / b)
    return _report(
        "f3_ratio", margins, traj.times, APP_CONFIG["certificate_tol"],
        f"bounds {bound_21:.6g} and {bound_12:.6g}",
    )


def check_monotone_approach(traj: "Trajectory") -> CertificateReport:
    """Every step must shrink the distance to the singular set by at least monotone_tol."""
    tol = APP_CONFIG["monotone_tol"]
    p = traj.problem
    if len(traj.times) < 2:
        return CertificateReport(
            name="monotone_approach", passed=False, worst_t=float(traj.times[0]),
            worst_margin=-math.inf, detail="need at least two samples",
        )
    if p.field is FieldKind.F3:
        gaps = np.abs(1.0 - traj.states)
        shrink = np.min(-np.diff(gaps, axis=0), axis=1)
        detail = "both coordinate distances decreasing"
    else:
        shrink = -np.diff(traj.distances())
        detail = "distance to the singular set decreasing"
    return _report("monotone_approach", shrink - tol, traj.times[1:], 0.0, detail)
