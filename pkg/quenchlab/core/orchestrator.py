"""
Verification Orchestrator Module
================================
Runs the verification suites (worked example, bounds, invariants, rates,
maximum principle) and aggregates their certificates into a
VerificationResults object.
"""

import logging
import math
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from quenchlab.config import (
    APP_CONFIG,
    SUITE_IDS,
    Branch,
    FieldKind,
    IntegratorConfig,
    SearchConfig,
    SearchMethod,
    get_suite,
)
from quenchlab.core.analysis import (
    check_bound_compliance,
    check_f3_ratio,
    check_invariant_region,
    check_monotone_approach,
    check_rate_estimate,
    fit_approach_exponent,
    quench_time_bound,
)
from quenchlab.core.controls import (
    ControlSignal,
    ProblemSpec,
    blend_controls,
    constant_control,
    zero_control,
)
from quenchlab.core.integrator import (
    Trajectory,
    check_comparison_ordering,
    chi_f1,
    chi_f2,
    chi_f3,
    integrate_comparison,
    integrate_radial_f2,
    integrate_to_quench,
    integrate_until,
)
from quenchlab.core.optimizer import brute_force_search, sweep_search
from quenchlab.core.pmp import (
    duality_residual,
    integrate_adjoint,
    integrate_sensitivity,
)
from quenchlab.core.sampling import (
    random_bang_bang_control,
    random_cases,
    random_problem,
    worked_example_problem,
)
from quenchlab.errors import QuenchError
from quenchlab.models.quench_models import (
    CertificateReport,
    SuiteResult,
    VerificationResults,
)


logger = logging.getLogger(__name__)


# Type alias for progress callback
ProgressCallback = Callable[[str, str, Optional[Any], Optional[str]], None]

# Outcome of one random run: the trajectory, or the error it raised.
RandomRun = Tuple[str, ProblemSpec, Union[Trajectory, QuenchError]]

WORKED_EXAMPLE_CONTROLLED = 1.0 / 32.0
WORKED_EXAMPLE_FREE = -0.25 - math.log(0.75)

_FD_STEP = 1e-4


def _closeness(name: str, value: float, expected: float, tol: float, t: float = 0.0) -> CertificateReport:
    error = abs(value - expected)
    return CertificateReport(
        name=name,
        passed=error <= tol,
        worst_t=t,
        worst_margin=tol - error,
        detail=f"value={value:.12g}, expected={expected:.12g}, tolerance={tol:.1e}",
    )


def _failure(name: str, error: Exception) -> CertificateReport:
    return CertificateReport(
        name=name, passed=False, worst_t=0.0, worst_margin=-math.inf,
        detail=f"{type(error).__name__}: {error}",
    )


def _labelled(label: str, report: CertificateReport) -> CertificateReport:
    return report.model_copy(update={"name": f"{label} {report.name}"})


class VerificationOrchestrator:
    """
    Runs verification suites with fixed seeds.

    The random runs shared by the bounds, invariants and rates suites are
    integrated once per orchestrator and reused.
    """

    def __init__(
        self,
        seed: int = APP_CONFIG["default_seed"],
        integrator: Optional[IntegratorConfig] = None,
        problems_per_field: int = APP_CONFIG["random_problems_per_field"],
        sensitivity_pairs: int = APP_CONFIG["sensitivity_pairs"]
    ):
        """
        Initialize the orchestrator.

        Args:
            seed: Seed for every randomized suite
            integrator: Integrator configuration for the random runs
            problems_per_field: Random problems per field
            sensitivity_pairs: (problem, perturbation) pairs in the pmp suite
        """
        self.seed = seed
        self.integrator = integrator or IntegratorConfig()
        self.problems_per_field = problems_per_field
        self.sensitivity_pairs = sensitivity_pairs
        self._runs: Optional[List[RandomRun]] = None

        self._suites: Dict[str, Callable[[], List[CertificateReport]]] = {
            "paper-example": self.run_worked_example,
            "bounds": self.run_bounds,
            "invariants": self.run_invariants,
            "rates": self.run_rates,
            "pmp": self.run_pmp,
        }

    def run_verification(
        self,
        suite_ids: Sequence[str] = ("all",),
        progress_callback: Optional[ProgressCallback] = None
    ) -> VerificationResults:
        """
        Execute the requested suites in table order.

        Args:
            suite_ids: Suite identifiers, or "all"
            progress_callback: Optional callback for progress updates
                Signature: (suite_id, status, data, error) -> None

        Returns:
            VerificationResults with one SuiteResult per suite
        """

        def update_progress(
            suite_id: str,
            status: str,
            data: Any = None,
            error: str = None
        ):
            if progress_callback:
                progress_callback(suite_id, status, data, error)

            if status == "running":
                logger.info(f"Starting suite: {suite_id}")
            elif status == "complete":
                logger.info(f"Completed suite: {suite_id} ({data})")
            elif status == "error":
                logger.error(f"Error in suite {suite_id}: {error}")

        requested = SUITE_IDS if "all" in suite_ids else [s for s in SUITE_IDS if s in suite_ids]
        for suite_id in suite_ids:
            if suite_id != "all":
                get_suite(suite_id)

        results = VerificationResults(seed=self.seed)
        for suite_id in requested:
            suite = get_suite(suite_id)
            update_progress(suite_id, "running")
            started = time.perf_counter()
            try:
                reports = self._suites[suite_id]()
            except QuenchError as e:
                update_progress(suite_id, "error", error=str(e))
                reports = [_failure("suite", e)]
            result = SuiteResult(
                suite_id=suite_id,
                name=suite["name"],
                description=suite["description"],
                reports=reports,
                elapsed_seconds=time.perf_counter() - started,
            )
            update_progress(
                suite_id,
                "complete",
                data={"reports": len(reports), "failures": len(result.failures)},
            )
            results.suites.append(result)

        logger.info(
            f"Verification finished: {results.total_reports} certificates, "
            f"{'all passed' if results.passed else 'failures present'}"
        )
        return results

    # ===== Worked Example =====

    def run_worked_example(self) -> List[CertificateReport]:
        """Exact values of the radial f2 example and the closed-form comparison times."""
        p = worked_example_problem()
        controlled = integrate_to_quench(p, constant_control([1.0, 0.0])).quench.t_hat
        free = integrate_to_quench(p, zero_control()).quench.t_hat
        reports = [
            _closeness("controlled_quench_time", controlled, WORKED_EXAMPLE_CONTROLLED, 1e-6),
            _closeness("free_quench_time", free, WORKED_EXAMPLE_FREE, 1e-6),
            _closeness("analytic_bound", quench_time_bound(p), 3.0 / 32.0, 1e-15),
            _closeness(
                "radial_controlled", integrate_radial_f2(0.75, 1.0).quench.t_hat,
                WORKED_EXAMPLE_CONTROLLED, 1e-6,
            ),
            _closeness(
                "radial_free", integrate_radial_f2(0.75, 0.0).quench.t_hat,
                WORKED_EXAMPLE_FREE, 1e-6,
            ),
            CertificateReport(
                name="control_helps",
                passed=controlled < free - 1e-3,
                worst_t=controlled,
                worst_margin=free - 1e-3 - controlled,
                detail=f"controlled {controlled:.9g} against free {free:.9g}",
            ),
        ]
        for solution in (chi_f1(0.9), chi_f1(1.1), chi_f2(0.75, 1.0), chi_f3(1.0)):
            numeric = integrate_comparison(solution).quench.t_hat
            reports.append(_closeness(f"{solution.name}_quench_time", numeric, solution.window(), 1e-8))
        return reports

    # ===== Random Runs =====

    def random_runs(self) -> List[RandomRun]:
        """Integrate the seeded random (problem, control) pairs of every field once."""
        if self._runs is None:
            runs: List[RandomRun] = []
            for field in FieldKind:
                cases = random_cases(field, self.problems_per_field, self.seed)
                for i, (p, u) in enumerate(cases):
                    label = f"{field.value}[{i}]"
                    try:
                        runs.append((label, p, integrate_to_quench(p, u, self.integrator)))
                    except QuenchError as e:
                        logger.warning(f"Random run {label} failed: {e}")
                        runs.append((label, p, e))
            self._runs = runs
        return self._runs

    def _per_run(self, name: str, checks: Callable[[Trajectory], List[CertificateReport]]) -> List[CertificateReport]:
        reports = []
        for label, _, outcome in self.random_runs():
            if isinstance(outcome, QuenchError):
                reports.append(_failure(f"{label} {name}", outcome))
                continue
            reports.extend(_labelled(label, r) for r in checks(outcome))
        return reports

    def run_bounds(self) -> List[CertificateReport]:
        """Estimated quench time plus bracket width against the analytic bound."""
        return self._per_run("quench_time_bound", lambda traj: [check_bound_compliance(traj)])

    def run_invariants(self) -> List[CertificateReport]:
        """Invariant region, monotone approach, f3 ratios and comparison ordering."""

        def checks(traj: Trajectory) -> List[CertificateReport]:
            p = traj.problem
            reports = [check_invariant_region(traj), check_monotone_approach(traj)]
            if p.field is FieldKind.F3 and p.branch is Branch.BELOW:
                reports.append(check_f3_ratio(traj))
            if p.field is FieldKind.F1 or (p.field is FieldKind.F2 and p.branch is Branch.BELOW):
                reports.append(check_comparison_ordering(traj))
            return reports

        return self._per_run("invariants", checks)

    def run_rates(self) -> List[CertificateReport]:
        """Rate ceilings on every run and the square-root exponent on closed-form cases."""
        reports = self._per_run("rate_estimate", lambda traj: [check_rate_estimate(traj)])

        closed_form = [
            (solution.name, integrate_comparison(solution))
            for solution in (chi_f1(0.9), chi_f2(0.75, 1.0), chi_f3(1.0))
        ]
        closed_form.append(
            ("worked_example", integrate_to_quench(worked_example_problem(), constant_control([1.0, 0.0])))
        )
        for name, traj in closed_form:
            slope = fit_approach_exponent(traj)
            reports.append(_closeness(f"{name} approach_exponent", slope, 0.5, 0.05, traj.quench.t_hat))
        return reports

    # ===== Maximum Principle =====

    def _sensitivity_pair(self, i: int, rng: np.random.Generator, tight: IntegratorConfig) -> List[CertificateReport]:
        field = FieldKind.F1 if i % 2 == 0 else FieldKind.F2
        p = random_problem(field, rng)
        u = random_bang_bang_control(p, rng)
        u_alt = random_bang_bang_control(p, rng)
        label = f"pair[{i}] {field.value}"

        traj = integrate_to_quench(p, u, tight)
        horizon = 0.5 * traj.quench.t_hat
        sens = integrate_sensitivity(p, traj, u_alt, horizon)
        z = sens.z_at(horizon)

        def end_state(v: ControlSignal) -> np.ndarray:
            return integrate_until(p, v, horizon, tight).states[-1]

        base = end_state(u)
        coarse = (end_state(blend_controls(u, u_alt, _FD_STEP)) - base) / _FD_STEP
        fine = (end_state(blend_controls(u, u_alt, 0.5 * _FD_STEP)) - base) / (0.5 * _FD_STEP)
        finite_difference = 2.0 * fine - coarse
        rel_error = float(np.linalg.norm(finite_difference - z) / max(np.linalg.norm(z), 1e-300))

        adj = integrate_adjoint(p, traj, cfg=tight)
        duality = duality_residual(p, adj, sens)
        return [
            CertificateReport(
                name=f"{label} sensitivity",
                passed=rel_error <= 1e-4,
                worst_t=horizon,
                worst_margin=1e-4 - rel_error,
                detail=f"relative error against finite differences {rel_error:.3g}",
            ),
            CertificateReport(
                name=f"{label} duality",
                passed=duality.passed,
                worst_t=horizon,
                worst_margin=1e-6 * (1.0 + abs(duality.inner_product)) - duality.residual,
                detail=f"<psi,z>={duality.inner_product:.12g}, integral={duality.integral:.12g}",
            ),
            CertificateReport(
                name=f"{label} adjoint_decay",
                passed=math.isfinite(adj.c1),
                worst_t=adj.terminal_time,
                worst_margin=1.0 if math.isfinite(adj.c1) else -math.inf,
                detail=f"||psi|| <= C1 * distance with C1={adj.c1:.6g}",
            ),
        ]

    def run_pmp(self) -> List[CertificateReport]:
        """Sensitivity and duality on random pairs, then sweep and brute force on the worked example."""
        tight = IntegratorConfig(rtol=1e-12, atol=1e-15, delta_stop=1e-6)
        rng = np.random.default_rng([self.seed, 3])
        reports: List[CertificateReport] = []
        for i in range(self.sensitivity_pairs):
            try:
                reports.extend(self._sensitivity_pair(i, rng, tight))
            except QuenchError as e:
                reports.append(_failure(f"pair[{i}]", e))

        p = worked_example_problem()
        sweep = sweep_search(p, SearchConfig(method=SearchMethod.SWEEP))
        reports.append(_closeness("sweep best_t", sweep.best_t, WORKED_EXAMPLE_CONTROLLED, 1e-5))
        certificate = sweep.certificate
        if certificate is None:
            reports.append(CertificateReport(
                name="sweep certificate", passed=False, worst_t=0.0,
                worst_margin=-math.inf, detail="no certificate",
            ))
        else:
            tol = APP_CONFIG["residual_tol"]
            threshold = APP_CONFIG["nontriviality_threshold"]
            reports.append(CertificateReport(
                name="sweep max_residual",
                passed=certificate.max_residual <= tol,
                worst_t=certificate.worst_t,
                worst_margin=tol - certificate.max_residual,
                detail=f"residual {certificate.max_residual:.3g}",
            ))
            reports.append(CertificateReport(
                name="sweep nontriviality",
                passed=certificate.nontriviality_ratio >= threshold,
                worst_t=0.0,
                worst_margin=certificate.nontriviality_ratio - threshold,
                detail=f"ratio {certificate.nontriviality_ratio:.6g}",
            ))

        brute = brute_force_search(p, SearchConfig(method=SearchMethod.BRUTE, n_intervals=2, n_directions=8))
        reports.append(_closeness("brute agrees with sweep", brute.best_t, sweep.best_t, 1e-4))
        reports.append(CertificateReport(
            name="control_helps",
            passed=sweep.best_t < sweep.zero_control_t - 1e-3,
            worst_t=sweep.best_t,
            worst_margin=sweep.zero_control_t - 1e-3 - sweep.best_t,
            detail=f"best {sweep.best_t:.9g} against zero control {sweep.zero_control_t:.9g}",
        ))
        return reports
