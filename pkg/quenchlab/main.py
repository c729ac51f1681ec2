"""
Quench Lab - Command Line
=========================
Sub-commands for simulation, quench-time estimation, bounds, invariant
checks, adjoint paths, control search and the verification suites.

Standard output carries JSON lines only; logs and error messages go to
standard error. Exit codes: 0 success, 1 failed certificate, 2 invalid
input, 3 integration failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from quenchlab import __version__
from quenchlab.config import (
    APP_CONFIG,
    SUITE_IDS,
    Branch,
    FieldKind,
    IntegratorConfig,
    SearchMethod,
    get_settings,
)
from quenchlab.core.analysis import (
    check_bound_compliance,
    check_f3_ratio,
    check_invariant_region,
    check_monotone_approach,
    check_rate_estimate,
    quench_time_bound,
)
from quenchlab.core.integrator import Trajectory, integrate_to_quench
from quenchlab.core.optimizer import run_search
from quenchlab.core.orchestrator import VerificationOrchestrator
from quenchlab.core.pmp import integrate_adjoint, pmp_certificate
from quenchlab.errors import IntegrationError, InvalidParameter
from quenchlab.export import (
    generate_markdown,
    save_csv,
    write_adjoint_csv,
    write_trajectory_csv,
)
from quenchlab.models.quench_models import (
    CertificateReport,
    ProblemFile,
    QuenchReport,
    report_line,
)


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CERTIFICATE = 1
EXIT_INVALID = 2
EXIT_INTEGRATION = 3


# ===== Shared Helpers =====

def _emit(payload: dict) -> None:
    print(json.dumps(payload, separators=(",", ":"), allow_nan=False))


def _load(args: argparse.Namespace) -> ProblemFile:
    if args.problem is None:
        raise InvalidParameter(f"{args.command} needs --problem")
    return ProblemFile.load(args.problem)


def _integrator_config(args: argparse.Namespace, problem: Optional[ProblemFile] = None) -> IntegratorConfig:
    base = problem.integrator.to_config() if problem is not None else IntegratorConfig()
    return base.with_overrides(rtol=args.rtol, atol=args.atol, delta_stop=args.delta)


def _with_problem(problem: ProblemFile, payload: dict) -> dict:
    return {"problem": json.loads(problem.echo()), **payload}


def _quench_report(traj: Trajectory) -> QuenchReport:
    q = traj.quench
    return QuenchReport(
        t_hat=q.t_hat,
        bracket=[q.bracket_lo, q.bracket_hi],
        bound=quench_time_bound(traj.problem),
        samples=len(traj.times),
        terminal_state=q.terminal_state.tolist(),
        terminal_y2_or_radius=q.terminal_y2_or_radius,
    )


def _run(args: argparse.Namespace) -> tuple:
    problem = _load(args)
    p = problem.build_problem()
    traj = integrate_to_quench(p, problem.build_control(), _integrator_config(args, problem))
    return problem, p, traj


# ===== Commands =====

def cmd_simulate(args: argparse.Namespace) -> int:
    """Integrate to quench, write the trajectory CSV and print the estimate."""
    problem, _, traj = _run(args)
    if args.out:
        save_csv(args.out, write_trajectory_csv, traj)
        logger.info(f"Trajectory written to {args.out}")
    _emit(_with_problem(problem, _quench_report(traj).model_dump(mode="json")))
    return EXIT_OK


def cmd_quench_time(args: argparse.Namespace) -> int:
    """Print the quench estimate only."""
    problem, _, traj = _run(args)
    _emit(_with_problem(problem, _quench_report(traj).model_dump(mode="json")))
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    """Print the analytic quench-time bound, K0 and the branch."""
    problem = _load(args)
    p = problem.build_problem()
    _emit(_with_problem(problem, {
        "field": p.field.value,
        "branch": p.branch.value,
        "k0": p.k0,
        "bound": quench_time_bound(p),
    }))
    return EXIT_OK


def cmd_invariants(args: argparse.Namespace) -> int:
    """Run every certificate that applies to the problem's trajectory."""
    _, p, traj = _run(args)
    reports: List[CertificateReport] = [
        check_invariant_region(traj),
        check_monotone_approach(traj),
        check_bound_compliance(traj),
        check_rate_estimate(traj),
    ]
    if p.field is FieldKind.F3 and p.branch is Branch.BELOW:
        reports.append(check_f3_ratio(traj))
    for report in reports:
        print(report_line(report))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED_CERTIFICATE


def cmd_adjoint(args: argparse.Namespace) -> int:
    """Integrate the regularized adjoint along the problem's control and certify it."""
    problem, p, traj = _run(args)
    cfg = _integrator_config(args, problem)
    adj = integrate_adjoint(p, traj, epsilon=args.epsilon, cfg=cfg)
    certificate = pmp_certificate(p, traj, traj.control_used, adj)
    if args.out:
        save_csv(args.out, write_adjoint_csv, adj, traj)
        logger.info(f"Adjoint path written to {args.out}")
    _emit(_with_problem(problem, {
        "epsilon": adj.epsilon,
        "terminal_time": adj.terminal_time,
        "c1": adj.c1,
        "max_residual": certificate.max_residual,
        "worst_t": certificate.worst_t,
        "terminal_norm": certificate.terminal_norm,
        "nontriviality_ratio": certificate.nontriviality_ratio,
        "passed": certificate.passed,
    }))
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    """Search for a faster control with the configured or requested method."""
    problem = _load(args)
    overrides = {}
    if args.method is not None:
        overrides["method"] = SearchMethod(args.method)
    if args.seed is not None:
        overrides["seed"] = args.seed
    search = problem.search.model_copy(update=overrides).to_config()
    result = run_search(problem.build_problem(), search, _integrator_config(args, problem))
    payload = _with_problem(problem, result.to_report().model_dump(mode="json"))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    _emit(payload)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Run verification suites and print one JSON line per certificate."""
    seed = args.seed if args.seed is not None else APP_CONFIG["default_seed"]
    orchestrator = VerificationOrchestrator(seed=seed, integrator=_integrator_config(args))
    results = orchestrator.run_verification([args.suite])
    for suite in results.suites:
        for report in suite.reports:
            _emit({"suite": suite.suite_id, **report.model_dump(mode="json")})
    if args.out:
        Path(args.out).write_text(generate_markdown(results), encoding="utf-8")
    return EXIT_OK if results.passed else EXIT_FAILED_CERTIFICATE


COMMANDS = {
    "simulate": cmd_simulate,
    "quench-time": cmd_quench_time,
    "bounds": cmd_bounds,
    "invariants": cmd_invariants,
    "adjoint": cmd_adjoint,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
}


# ===== Argument Parsing =====

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="problem file (JSON)")
    common.add_argument("--out", help="output path (CSV, JSON or Markdown)")
    common.add_argument("--rtol", type=float, help="relative tolerance")
    common.add_argument("--atol", type=float, help="absolute tolerance")
    common.add_argument("--delta", type=float, help="stopping distance to the singular set")
    common.add_argument("--epsilon", type=float, help="adjoint regularization")
    common.add_argument("--method", choices=[m.value for m in SearchMethod], help="search method")
    common.add_argument("--seed", type=int, help="random seed (default 42)")
    common.add_argument("--suite", default="all", choices=SUITE_IDS + ["all"], help="verification suite")
    common.add_argument("--log-level", help="logging level (default QUENCH_LOG_LEVEL or WARNING)")

    parser = argparse.ArgumentParser(prog="quenchlab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=handler.__doc__)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, InvalidParameter, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except IntegrationError as e:
        print(f"integration error: {e}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
