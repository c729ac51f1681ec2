import json

import numpy as np
import pytest
from pydantic import ValidationError

from quenchlab.config import ControlExtension, FieldKind, SearchMethod
from quenchlab.core.controls import piecewise_control, stepwise_control
from quenchlab.models.quench_models import (
    CertificateReport,
    ControlModel,
    MatrixSignalModel,
    ProblemFile,
    SuiteResult,
    report_line,
)

from conftest import WORKED_EXAMPLE_FILE


def test_echo_is_stable(problem_file):
    loaded = ProblemFile.load(problem_file())
    echoed = loaded.echo()
    assert ProblemFile.model_validate_json(echoed).echo() == echoed


def test_echo_spells_out_the_defaults(problem_file):
    echoed = json.loads(ProblemFile.load(problem_file()).echo())
    assert echoed["integrator"]["delta_stop"] == 1e-6
    assert echoed["search"]["method"] == "sweep"
    assert echoed["control"]["extension"] == "zero"


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        ProblemFile.model_validate({**WORKED_EXAMPLE_FILE, "colour": "blue"})
    with pytest.raises(ValidationError):
        ProblemFile.model_validate({**WORKED_EXAMPLE_FILE, "control": {"kind": "constant", "value": [1, 0], "gain": 2}})


def test_y0_needs_two_components():
    with pytest.raises(ValidationError):
        ProblemFile.model_validate({**WORKED_EXAMPLE_FILE, "y0": [0.75]})


def test_rho0_must_be_positive():
    with pytest.raises(ValidationError):
        ProblemFile.model_validate({**WORKED_EXAMPLE_FILE, "rho0": 0.0})


def test_builds_the_worked_example(problem_file):
    loaded = ProblemFile.load(problem_file())
    p = loaded.build_problem()
    assert p.field is FieldKind.F2
    assert p.k0 == pytest.approx(1.0)
    np.testing.assert_array_equal(loaded.build_control().values, [[1.0, 0.0]])
    assert loaded.search.to_config().method is SearchMethod.SWEEP
    assert loaded.integrator.to_config().rtol == 1e-9


def test_matrix_signal_kinds():
    B = MatrixSignalModel(kind="piecewise", breakpoints=[0.0, 0.5], matrices=[[[1, 0], [0, 1]], [[0, 0], [0, 0]]]).build()
    assert B.jumps == [0.5]
    with pytest.raises(ValidationError):
        MatrixSignalModel(kind="constant")
    with pytest.raises(ValidationError):
        ControlModel(kind="piecewise", values=[[1.0, 0.0]])


def test_control_model_round_trip():
    u = piecewise_control(0.25, [[1.0, 0.0], [0.0, -1.0]], ControlExtension.HOLD)
    model = ControlModel.from_signal(u)
    assert model.kind == "piecewise"
    assert model.extension is ControlExtension.HOLD
    np.testing.assert_array_equal(model.build().values, u.values)


def test_nonuniform_controls_cannot_be_serialized():
    with pytest.raises(ValueError):
        ControlModel.from_signal(stepwise_control([0.0, 0.1, 0.5], [[1, 0], [0, 1], [0, 0]]))


def test_suite_result_failures():
    good = CertificateReport(name="a", passed=True, worst_t=0.0, worst_margin=1.0)
    bad = CertificateReport(name="b", passed=False, worst_t=0.1, worst_margin=-1.0)
    suite = SuiteResult(suite_id="bounds", name="Bounds", description="", reports=[good, bad])
    assert not suite.passed
    assert suite.failures == [bad]


def test_report_line_is_compact():
    line = report_line(CertificateReport(name="a", passed=True, worst_t=0.0, worst_margin=1.0))
    assert " " not in line
    assert json.loads(line)["name"] == "a"


def test_non_finite_margins_serialize_as_null():
    report = CertificateReport(name="a", passed=False, worst_t=0.0, worst_margin=-float("inf"))
    line = report_line(report)
    assert "Infinity" not in line
    assert json.loads(line)["worst_margin"] is None
    assert report.worst_margin == -float("inf")
