import csv
import io
import math

import pytest

from quenchlab.core.controls import constant_control, zero_control
from quenchlab.core.integrator import integrate_to_quench, integrate_until
from quenchlab.core.pmp import integrate_adjoint
from quenchlab.export import save_csv, write_adjoint_csv, write_trajectory_csv
from quenchlab.export.csv_writer import ADJOINT_HEADER, TRAJECTORY_HEADER, format_real
from quenchlab.export.markdown_generator import generate_suite_section
from quenchlab.models.quench_models import CertificateReport, SuiteResult


def test_format_real_keeps_full_precision():
    assert format_real(0.1) == "0.10000000000000001"
    assert float(format_real(1.0 / 3.0)) == 1.0 / 3.0
    assert format_real(0.0) == "0"


def test_trajectory_csv_rows(worked):
    traj = integrate_to_quench(worked, constant_control([1.0, 0.0]))
    stream = io.StringIO()
    write_trajectory_csv(traj, stream)
    text = stream.getvalue()
    assert "\r" not in text
    lines = text.splitlines()
    rows = list(csv.reader(lines[1:-1]))
    assert lines[0].split(",") == TRAJECTORY_HEADER
    assert len(rows) == len(traj.times)
    first = [float(v) for v in rows[0]]
    # f2 at (3/4, 0) is y / (1 - |y|) = (3, 0).
    assert first[:3] == [0.0, 0.75, 0.0]
    assert first[3] == pytest.approx(3.0)
    assert first[5] == pytest.approx(0.25)
    assert lines[-1].startswith("# t_hat=")


def test_trajectory_without_quench_has_no_comment(worked):
    stream = io.StringIO()
    write_trajectory_csv(integrate_until(worked, zero_control(), 0.01), stream)
    assert not stream.getvalue().splitlines()[-1].startswith("#")


def test_adjoint_csv_is_in_increasing_time(worked, tmp_path):
    traj = integrate_to_quench(worked, constant_control([1.0, 0.0]))
    adj = integrate_adjoint(worked, traj)
    path = save_csv(tmp_path / "adjoint.csv", write_adjoint_csv, adj, traj)
    with path.open(encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ADJOINT_HEADER
    times = [float(r[0]) for r in rows[1:]]
    assert times == sorted(times)
    t0, psi1, psi2, ratio = (float(v) for v in rows[1])
    assert t0 == 0.0
    # psi1 = 1 - y1 up to the trajectory error carried backward from t_hat - epsilon.
    assert psi1 == pytest.approx(0.25, rel=1e-5)
    assert ratio == pytest.approx(0.75, rel=1e-5)
    assert all(math.isfinite(float(r[3])) or r[3] == "nan" for r in rows[1:])


def test_suite_section_lists_failures_first():
    suite = SuiteResult(
        suite_id="bounds",
        name="Quench-Time Bounds",
        description="bounds",
        reports=[
            CertificateReport(name="f1[0] quench_time_bound", passed=True, worst_t=0.01, worst_margin=0.001),
            CertificateReport(name="f1[1] quench_time_bound", passed=False, worst_t=0.02, worst_margin=-0.5),
        ],
    )
    text = generate_suite_section(suite)
    assert text.index("### Failures") < text.index("**Passed:** 1/2")
    assert "**FAIL**" in text
