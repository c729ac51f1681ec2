import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchlab.config import Branch, FieldKind, IntegratorConfig
from quenchlab.core.analysis import (
    RegionParams,
    check_bound_compliance,
    check_f3_ratio,
    check_invariant_region,
    check_monotone_approach,
    check_rate_estimate,
    default_region_params,
    fit_approach_exponent,
    quench_time_bound,
    rate_ceiling,
    resolve_region_params,
)
from quenchlab.core.controls import constant_control, zero_control
from quenchlab.core.integrator import chi_f1, chi_f2, chi_f3, integrate_comparison, integrate_to_quench, integrate_until
from quenchlab.core.sampling import random_bang_bang_control, random_problem
from quenchlab.errors import MissingQuenchEstimate, ParamOutOfRange, WrongField


def test_bounds_of_the_worked_example(worked):
    assert quench_time_bound(worked) == pytest.approx(3.0 / 32.0, rel=1e-15)


def test_bounds_of_f1_and_f3(f1_below, f3_symmetric):
    assert quench_time_bound(f1_below) == pytest.approx(0.01)
    assert quench_time_bound(f3_symmetric) == pytest.approx(1.0)


def test_default_region_params_come_from_y0(worked, f1_below):
    assert default_region_params(worked) == RegionParams(k3=0.75)
    assert default_region_params(f1_below) == RegionParams(k1=0.9, k2=1.5)


def test_region_params_outside_their_range_are_rejected(worked, f1_below):
    with pytest.raises(ParamOutOfRange):
        resolve_region_params(worked, RegionParams(k3=0.5))
    with pytest.raises(ParamOutOfRange):
        resolve_region_params(f1_below, RegionParams(k2=0.5))
    merged = resolve_region_params(f1_below, RegionParams(k1=0.8))
    assert merged.k1 == 0.8 and merged.k2 == 1.5


@pytest.mark.parametrize("u", [zero_control(), constant_control([1.0, 0.0]), constant_control([0.0, -1.0])])
def test_worked_example_certificates(worked, u):
    traj = integrate_to_quench(worked, u)
    for report in (
        check_invariant_region(traj),
        check_bound_compliance(traj),
        check_monotone_approach(traj),
        check_rate_estimate(traj),
    ):
        assert report.passed, f"{report.name}: {report.detail}"


def test_invariant_region_with_a_looser_parameter(f1_below):
    traj = integrate_to_quench(f1_below, constant_control([-1.0, 0.0]))
    report = check_invariant_region(traj, RegionParams(k1=0.7, k2=1.2))
    assert report.passed
    assert report.worst_margin >= 0.0


def test_bound_compliance_margin(worked):
    report = check_bound_compliance(integrate_to_quench(worked, constant_control([1.0, 0.0])))
    assert report.worst_margin == pytest.approx(3.0 / 32.0 - 1.0 / 32.0, abs=1e-6)


def test_certificates_need_a_quench_estimate(worked):
    traj = integrate_until(worked, zero_control(), 0.01)
    with pytest.raises(MissingQuenchEstimate):
        check_bound_compliance(traj)
    with pytest.raises(MissingQuenchEstimate):
        check_rate_estimate(traj)


def test_rate_ceiling_of_the_worked_example(worked):
    # distance = sqrt(2 (t_hat - t)), so the ratio peaks at t = 0.
    traj = integrate_to_quench(worked, constant_control([1.0, 0.0]))
    expected = (1.0 / 32.0) ** (1.0 / 6.0) / math.sqrt(2.0)
    assert rate_ceiling(traj) == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("problem, u", [
    ("worked", constant_control([1.0, 0.0])),
    ("worked", zero_control()),
    ("f1_below", zero_control()),
    ("f1_below", constant_control([0.0, 1.0])),
])
def test_rate_ceiling_is_stable_when_rtol_is_halved(request, problem, u):
    p = request.getfixturevalue(problem)
    coarse = rate_ceiling(integrate_to_quench(p, u, IntegratorConfig(rtol=1e-9)))
    fine = rate_ceiling(integrate_to_quench(p, u, IntegratorConfig(rtol=5e-10)))
    assert math.isfinite(coarse) and math.isfinite(fine)
    assert abs(fine - coarse) <= 0.05 * coarse


@pytest.mark.parametrize("source", [
    lambda: integrate_comparison(chi_f1(0.9)),
    lambda: integrate_comparison(chi_f2(0.75, 1.0)),
    lambda: integrate_comparison(chi_f3(1.0)),
])
def test_square_root_approach_on_closed_form_cases(source):
    assert fit_approach_exponent(source()) == pytest.approx(0.5, abs=0.05)


def test_square_root_approach_on_the_worked_example(worked):
    traj = integrate_to_quench(worked, constant_control([1.0, 0.0]))
    assert fit_approach_exponent(traj) == pytest.approx(0.5, abs=0.05)


def test_f3_ratio_bounds(f3_symmetric):
    for u in (zero_control(), constant_control([0.5, 0.0]), constant_control([0.0, -0.5])):
        report = check_f3_ratio(integrate_to_quench(f3_symmetric, u))
        assert report.passed, report.detail


def test_f3_ratio_rejects_other_fields(worked):
    with pytest.raises(WrongField):
        check_f3_ratio(integrate_to_quench(worked, zero_control()))


@pytest.mark.parametrize("field", list(FieldKind))
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_random_problems_respect_bounds_and_invariants(field, seed):
    rng = np.random.default_rng(seed)
    p = random_problem(field, rng)
    traj = integrate_to_quench(p, random_bang_bang_control(p, rng))
    checks = [
        check_bound_compliance(traj),
        check_invariant_region(traj),
        check_monotone_approach(traj),
    ]
    if field is FieldKind.F3 and p.branch is Branch.BELOW:
        checks.append(check_f3_ratio(traj))
    for report in checks:
        assert report.passed, f"{report.name}: {report.detail} (margin {report.worst_margin:.3g})"
    assert traj.quench.t_hat > 0.0
    assert math.isfinite(traj.quench.t_hat)
