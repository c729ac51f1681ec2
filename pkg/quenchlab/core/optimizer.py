"""
Optimizer Module
================
Searches for controls that minimize the quenching time: an exhaustive
bang-bang enumeration, a damped forward-backward sweep driven by the
maximum condition, and a multi-start Nelder-Mead direct search.

Results are candidates with certificates. Nothing here claims global
optimality.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from quenchlab.config import (
    APP_CONFIG,
    FieldKind,
    IntegratorConfig,
    SearchConfig,
    SearchMethod,
    get_settings,
)
from quenchlab.core.analysis import quench_time_bound
from quenchlab.core.controls import (
    ControlSignal,
    ProblemSpec,
    ekeland_distance,
    patched_control,
    piecewise_control,
    pmp_argmax,
    project_to_ball,
    zero_control,
)
from quenchlab.core.fields import singular_distance
from quenchlab.core.integrator import Trajectory, integrate_to_quench, integrate_until
from quenchlab.core.pmp import (
    PMPCertificate,
    default_epsilon,
    integrate_adjoint,
    penalty_value,
    pmp_certificate,
)
from quenchlab.errors import (
    BudgetExceeded,
    IntegrationError,
    InvalidParameter,
    QuenchError,
    UnsupportedField,
)
from quenchlab.models.quench_models import (
    CertificateReport,
    CertificateSummary,
    ControlModel,
    SearchReport,
)


logger = logging.getLogger(__name__)

_INTERVAL_SAMPLES = 33
_SIMPLEX_STEP = 0.25
_LINE_SEARCH_HALVINGS = 4


# ===== Result Type =====

@dataclass(eq=False)
class SearchResult:
    """Best control found by a search, with its bookkeeping."""
    method: SearchMethod
    best_control: ControlSignal
    best_t: float
    best_width: float
    bound: float
    zero_control_t: float
    evaluations: int
    converged: bool
    certificate: Optional[PMPCertificate] = None
    history: List[Tuple[int, float, float]] = field(default_factory=list)
    no_descent: bool = False

    def to_report(self) -> SearchReport:
        certificate = None
        if self.certificate is not None:
            certificate = CertificateSummary(
                max_residual=self.certificate.max_residual,
                nontriviality_ratio=self.certificate.nontriviality_ratio,
                terminal_norm=self.certificate.terminal_norm,
                passed=self.certificate.passed,
            )
        return SearchReport(
            method=self.method,
            best_t=self.best_t,
            bound=self.bound,
            zero_control_t=self.zero_control_t,
            evaluations=self.evaluations,
            converged=self.converged,
            no_descent=self.no_descent,
            certificate=certificate,
            best_control=ControlModel.from_signal(self.best_control),
            history=[[float(it), float(t), float(step)] for it, t, step in self.history],
        )


# ===== Shared Helpers =====

def _score(p: ProblemSpec, u: ControlSignal, cfg: IntegratorConfig) -> Tuple[float, float]:
    """(bracket midpoint, bracket width), or (inf, 0) when the run cannot be integrated."""
    try:
        quench = integrate_to_quench(p, u, cfg).quench
    except IntegrationError as e:
        logger.warning(f"Candidate integration failed, scoring +inf: {e}")
        return math.inf, 0.0
    return quench.midpoint, quench.width


def _directions(rho0: float, n_directions: int, include_zero: bool) -> List[np.ndarray]:
    angles = 2.0 * math.pi * np.arange(n_directions) / n_directions
    directions = [rho0 * np.array([math.cos(a), math.sin(a)]) for a in angles]
    if include_zero:
        directions.append(np.zeros(2))
    return directions


def _certify(p: ProblemSpec, traj: Optional[Trajectory], u: ControlSignal,
             cfg: IntegratorConfig) -> Optional[PMPCertificate]:
    """Maximum-principle certificate for f1/f2; None for f3 or on failure."""
    if p.field is FieldKind.F3:
        return None
    try:
        if traj is None:
            traj = integrate_to_quench(p, u, cfg)
        adj = integrate_adjoint(p, traj, cfg=cfg)
        return pmp_certificate(p, traj, u, adj)
    except QuenchError as e:
        logger.warning(f"Could not certify best control: {e}")
        return None


def _is_better(t: float, width: float, best_t: float, best_width: float) -> bool:
    """Strictly better by more than the combined bracket widths."""
    return t < best_t - (width + best_width)


# ===== Brute Force =====

def brute_force_search(
    p: ProblemSpec,
    cfg: Optional[SearchConfig] = None,
    integrator: Optional[IntegratorConfig] = None
) -> SearchResult:
    """
    Enumerate bang-bang controls on a uniform grid and keep the fastest.

    Every interval takes one of rho0 (cos 2 pi j / n, sin 2 pi j / n), or
    zero when include_zero is set. Candidates run on a thread pool unless
    QUENCH_NO_PARALLEL is set; the reduction walks them in index order.

    Args:
        p: Problem
        cfg: Search settings (n_intervals, n_directions, include_zero)
        integrator: Integrator configuration

    Returns:
        SearchResult with the lowest-index minimizer

    Raises:
        BudgetExceeded: If the candidate count exceeds max_candidates
    """
    cfg = cfg or SearchConfig(method=SearchMethod.BRUTE)
    integrator = integrator or IntegratorConfig()
    directions = _directions(p.rho0, cfg.n_directions, cfg.include_zero)
    count = len(directions) ** cfg.n_intervals
    if count > APP_CONFIG["max_candidates"]:
        raise BudgetExceeded(
            f"{count} candidates exceed the limit of {APP_CONFIG['max_candidates']:.0f}"
        )

    bound = quench_time_bound(p)
    step = bound / cfg.n_intervals
    candidates = list(itertools.product(range(len(directions)), repeat=cfg.n_intervals))
    logger.info(f"Brute force: {count} candidates on {cfg.n_intervals} interval(s)")

    def evaluate(index: Sequence[int]) -> Tuple[float, float]:
        u = piecewise_control(step, [directions[i] for i in index])
        return _score(p, u, integrator)

    settings = get_settings()
    if settings.no_parallel or count == 1:
        scores = [evaluate(c) for c in candidates]
    else:
        with ThreadPoolExecutor(max_workers=settings.max_workers) as pool:
            scores = list(pool.map(evaluate, candidates))

    best, history = None, []
    for i, (t, width) in enumerate(scores):
        if not math.isfinite(t):
            continue
        if best is None or _is_better(t, width, *scores[best]):
            best = i
            history.append((i, t, 0.0))
    if best is None:
        raise IntegrationError("no brute-force candidate could be integrated")

    zero_t, _ = _score(p, zero_control(), integrator)
    best_control = piecewise_control(step, [directions[i] for i in candidates[best]])
    best_t, best_width = scores[best]
    logger.info(f"Brute force best t_hat={best_t:.12g} (candidate {best}), zero control {zero_t:.12g}")

    return SearchResult(
        method=SearchMethod.BRUTE,
        best_control=best_control,
        best_t=best_t,
        best_width=best_width,
        bound=bound,
        zero_control_t=zero_t,
        evaluations=count + 1,
        converged=True,
        certificate=_certify(p, None, best_control, integrator),
        history=history,
    )


# ===== Forward-Backward Sweep =====

def _interval_targets(p: ProblemSpec, adj, step: float, n: int) -> np.ndarray:
    """Maximizer of the interval-averaged <psi, B u> on each grid interval."""
    targets = np.zeros((n, 2))
    for k in range(n):
        a = k * step
        b = min((k + 1) * step, adj.terminal_time)
        if b <= a:
            continue
        ts = np.linspace(a, b, _INTERVAL_SAMPLES)
        w = np.array([p.B.at(t).T @ adj.psi_at(t) for t in ts])
        w_bar = trapezoid(w, ts, axis=0)
        targets[k] = pmp_argmax(w_bar, np.eye(2), p.rho0)
    return targets


def _damped_update(
    p: ProblemSpec,
    values: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    step: float,
    t_star: float,
    integrator: IntegratorConfig
) -> Tuple[np.ndarray, int]:
    """
    Move values toward targets, halving the damping while the penalty just
    before t_star grows. Returns the new values and the integrations spent.
    """
    epsilon = default_epsilon(t_star, integrator.delta_stop)
    current = penalty_value(p, piecewise_control(step, values), epsilon, t_star, integrator)
    spent = 1
    for _ in range(_LINE_SEARCH_HALVINGS):
        updated = project_to_ball((1.0 - alpha) * values + alpha * targets, p.rho0)
        spent += 1
        if penalty_value(p, piecewise_control(step, updated), epsilon, t_star, integrator) <= current:
            break
        alpha *= 0.5
    return updated, spent


def sweep_search(
    p: ProblemSpec,
    cfg: Optional[SearchConfig] = None,
    integrator: Optional[IntegratorConfig] = None,
    initial: Optional[Sequence[Sequence[float]]] = None
) -> SearchResult:
    """
    Damped forward-backward sweep on the uniform control grid.

    Each iteration integrates forward to quench, integrates the adjoint
    backward, moves every interval value a fraction sweep_damping toward
    the maximizer of the maximum condition and projects onto the ball.
    The fraction is halved while the penalty just before the current t_hat
    grows.
    Stops when at most conv_tol of the intervals moved by more than
    move_tol, or after max_iters. Five consecutive increases of t_hat set
    no_descent and end the sweep with the best control seen.

    Args:
        p: Problem on f1 or f2
        cfg: Search settings
        integrator: Integrator configuration
        initial: Starting value per interval (zero if None)

    Returns:
        SearchResult for the best iterate, with its certificate
    """
    if p.field is FieldKind.F3:
        raise UnsupportedField("sweep unsupported for f3")
    cfg = cfg or SearchConfig()
    integrator = integrator or IntegratorConfig()
    n = cfg.n_intervals
    bound = quench_time_bound(p)
    step = bound / n

    if initial is None:
        values = np.zeros((n, 2))
    else:
        values = np.asarray(initial, dtype=float).reshape(-1, 2)
        if len(values) != n:
            raise InvalidParameter(f"initial control needs {n} values, got {len(values)}")
        values = project_to_ball(values, p.rho0)

    alpha = cfg.sweep_damping
    patience = APP_CONFIG["no_descent_patience"]
    best_t, best_width, best_control, best_traj = math.inf, 0.0, None, None
    history: List[Tuple[int, float, float]] = []
    evaluations, increases, previous = 0, 0, None
    converged = no_descent = False

    def consider(u: ControlSignal, traj: Trajectory) -> None:
        nonlocal best_t, best_width, best_control, best_traj
        # Ties go to the later iterate.
        if traj.quench.midpoint <= best_t:
            best_t, best_width = traj.quench.midpoint, traj.quench.width
            best_control, best_traj = u, traj

    for it in range(cfg.max_iters):
        u = piecewise_control(step, values)
        try:
            traj = integrate_to_quench(p, u, integrator)
            evaluations += 1
            t_hat = traj.quench.midpoint
            consider(u, traj)
            adj = integrate_adjoint(p, traj, cfg=integrator)
            updated, spent = _damped_update(
                p, values, _interval_targets(p, adj, step, n), alpha, step, t_hat, integrator
            )
            evaluations += spent
        except QuenchError as e:
            logger.warning(f"Sweep iteration {it} failed, keeping the best control so far: {e}")
            break

        moved = float(np.mean(np.hypot(*(updated - values).T) > APP_CONFIG["move_tol"]))
        history.append((it, t_hat, moved))
        logger.info(f"Sweep iteration {it}: t_hat={t_hat:.12g}, moved fraction {moved:.3g}")

        increases = increases + 1 if previous is not None and t_hat > previous else 0
        previous = t_hat
        if increases >= patience:
            no_descent = True
            logger.warning(f"No descent for {patience} consecutive iterations, stopping the sweep")
            break

        values = updated
        if moved <= cfg.conv_tol:
            converged = True
            break

    if converged:
        u = piecewise_control(step, values)
        try:
            traj = integrate_to_quench(p, u, integrator)
            evaluations += 1
            consider(u, traj)
        except IntegrationError as e:
            logger.warning(f"Converged control could not be integrated: {e}")

    if best_control is None:
        raise IntegrationError("the sweep could not integrate its starting control")

    zero_t, _ = _score(p, zero_control(), integrator)
    evaluations += 1
    logger.info(f"Sweep finished after {len(history)} iteration(s): best t_hat={best_t:.12g}")

    return SearchResult(
        method=SearchMethod.SWEEP,
        best_control=best_control,
        best_t=best_t,
        best_width=best_width,
        bound=bound,
        zero_control_t=zero_t,
        evaluations=evaluations,
        converged=converged,
        certificate=_certify(p, best_traj, best_control, integrator),
        history=history,
        no_descent=no_descent,
    )


# ===== Direct Search =====

def _initial_simplex(x0: np.ndarray, size: float) -> np.ndarray:
    return np.vstack([x0, x0 + size * np.eye(len(x0))])


def direct_search(
    p: ProblemSpec,
    cfg: Optional[SearchConfig] = None,
    integrator: Optional[IntegratorConfig] = None
) -> SearchResult:
    """
    Multi-start Nelder-Mead over the per-interval control vectors.

    Each evaluation projects the candidate onto the ball before
    integrating. Starts are the best n_starts of the zero control and the
    constant bang-bang directions, followed by n_starts random points drawn
    with the configured seed. Works on every field.

    Raises:
        BudgetExceeded: If 2 * n_intervals exceeds max_direct_dimension
    """
    cfg = cfg or SearchConfig(method=SearchMethod.DIRECT)
    integrator = integrator or IntegratorConfig()
    n = cfg.n_intervals
    dim = 2 * n
    if dim > APP_CONFIG["max_direct_dimension"]:
        raise BudgetExceeded(
            f"dimension {dim} exceeds the direct-search limit of {APP_CONFIG['max_direct_dimension']}"
        )
    bound = quench_time_bound(p)
    step = bound / n

    evaluations = 0
    best = {"t": math.inf, "width": 0.0, "x": np.zeros(dim)}

    def to_control(x: np.ndarray) -> ControlSignal:
        return piecewise_control(step, project_to_ball(np.reshape(x, (n, 2)), p.rho0))

    def objective(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        t, width = _score(p, to_control(x), integrator)
        if t < best["t"]:
            best.update(t=t, width=width, x=np.array(x, dtype=float))
        return t

    screened = []
    for direction in _directions(p.rho0, cfg.n_directions, include_zero=True):
        x = np.tile(direction, n)
        screened.append((objective(x), len(screened), x))
    zero_t = screened[-1][0]
    screened.sort(key=lambda item: (item[0], item[1]))
    starts = [x for _, _, x in screened[:cfg.n_starts]]

    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.n_starts):
        angles = rng.uniform(0.0, 2.0 * math.pi, n)
        radii = p.rho0 * np.sqrt(rng.uniform(0.0, 1.0, n))
        starts.append(np.column_stack([radii * np.cos(angles), radii * np.sin(angles)]).ravel())

    budget = max(1, (cfg.max_evaluations - evaluations) // len(starts))
    history: List[Tuple[int, float, float]] = []
    converged = False
    for i, x0 in enumerate(starts):
        if evaluations >= cfg.max_evaluations:
            logger.info(f"Direct search budget spent after {i} start(s)")
            break
        before = best["x"].copy()
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": budget,
                "xatol": 1e-6,
                "fatol": 1e-9,
                "initial_simplex": _initial_simplex(x0, _SIMPLEX_STEP * p.rho0),
            },
        )
        converged = converged or bool(res.success)
        history.append((i, best["t"], float(np.linalg.norm(best["x"] - before))))
        logger.info(f"Direct search start {i}: {res.nfev} evaluations, best t_hat={best['t']:.12g}")

    if not math.isfinite(best["t"]):
        raise IntegrationError("no direct-search candidate could be integrated")

    best_control = to_control(best["x"])
    return SearchResult(
        method=SearchMethod.DIRECT,
        best_control=best_control,
        best_t=best["t"],
        best_width=best["width"],
        bound=bound,
        zero_control_t=zero_t,
        evaluations=evaluations,
        converged=converged,
        certificate=_certify(p, None, best_control, integrator),
        history=history,
    )


def run_search(
    p: ProblemSpec,
    cfg: SearchConfig,
    integrator: Optional[IntegratorConfig] = None
) -> SearchResult:
    """Dispatch on cfg.method."""
    if cfg.method is SearchMethod.BRUTE:
        return brute_force_search(p, cfg, integrator)
    if cfg.method is SearchMethod.SWEEP:
        return sweep_search(p, cfg, integrator)
    return direct_search(p, cfg, integrator)


# ===== Perturbation Smoke Test =====

def perturbation_smoke_test(
    p: ProblemSpec,
    u: ControlSignal,
    window: float,
    n: int,
    seed: int = APP_CONFIG["default_seed"],
    cfg: Optional[IntegratorConfig] = None
) -> CertificateReport:
    """
    Check that small local changes of u do not make the run quench on [0, window].

    Each trial overrides u on a random interval of length window / 10 with
    a random value in the ball. The margin of a trial is the distance to
    the singular set at the window, or the (negative) time by which it
    quenched early.

    Args:
        p: Problem
        u: Non-feedback control that does not quench on [0, window]
        window: Length of the checked interval, below t_hat
        n: Number of random perturbations
        seed: Random seed
        cfg: Integrator configuration

    Returns:
        CertificateReport over all trials
    """
    if window < 0:
        raise InvalidParameter(f"window must be non-negative, got {window}")
    if n < 0:
        raise InvalidParameter(f"n must be non-negative, got {n}")
    cfg = cfg or IntegratorConfig()
    t_hat = integrate_to_quench(p, u, cfg).quench.t_hat
    if window >= t_hat:
        raise InvalidParameter(f"window {window:.6g} is not below the quenching time {t_hat:.6g}")
    if window == 0.0 or n == 0:
        return CertificateReport(
            name="perturbation_smoke", passed=True, worst_t=0.0,
            worst_margin=singular_distance(p.field, p.y0), detail="empty test",
        )

    rng = np.random.default_rng(seed)
    length = window / 10.0
    margins = []
    for _ in range(n):
        start = float(rng.uniform(0.0, window - length))
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radius = p.rho0 * math.sqrt(rng.uniform(0.0, 1.0))
        v = patched_control(u, start, start + length, [radius * math.cos(angle), radius * math.sin(angle)])
        logger.debug(f"Perturbation on [{start:.6g}, {start + length:.6g}), distance {ekeland_distance(u, v, window):.3g}")
        try:
            run = integrate_until(p, v, window, cfg)
        except IntegrationError as e:
            logger.warning(f"Perturbed run failed: {e}")
            margins.append(-math.inf)
            continue
        if run.quench is not None:
            margins.append(run.quench.t_hat - window)
        else:
            margins.append(singular_distance(p.field, run.states[-1]))

    margins = np.array(margins)
    passed = int(np.sum(margins > 0.0))
    return CertificateReport(
        name="perturbation_smoke",
        passed=passed == n,
        worst_t=window,
        worst_margin=float(margins.min()),
        detail=f"{passed}/{n} perturbed runs stayed off the singular set on [0, {window:.6g}]",
    )
