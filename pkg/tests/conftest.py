"""Shared fixtures for the Quench Lab test-suite."""

import json

import numpy as np
import pytest

from quenchlab.config import FieldKind, IntegratorConfig
from quenchlab.core.controls import build_problem, constant_matrix
from quenchlab.core.sampling import worked_example_problem


WORKED_EXAMPLE_FILE = {
    "field": "f2",
    "y0": [0.75, 0.0],
    "rho0": 1.0,
    "B": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 0.0]]},
    "control": {"kind": "constant", "value": [1.0, 0.0]},
}


@pytest.fixture
def worked():
    return worked_example_problem()


@pytest.fixture
def tight():
    return IntegratorConfig(rtol=1e-12, atol=1e-15, delta_stop=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def f1_below():
    # K0 = 1: seed region 1/2 < y1 < 1, y2 > 1.
    return build_problem(FieldKind.F1, [0.9, 1.5], 1.0, constant_matrix([[1.0, 0.0], [0.0, 1.0]]))


@pytest.fixture
def f3_symmetric():
    # K0 = 0.5; the zero-control quench time is (1 - 0.9)^2 / 2.
    return build_problem(FieldKind.F3, [0.9, 0.9], 0.5, constant_matrix([[1.0, 0.0], [0.0, 1.0]]))


@pytest.fixture
def serial(monkeypatch):
    monkeypatch.setenv("QUENCH_NO_PARALLEL", "1")


@pytest.fixture
def problem_file(tmp_path):
    """Write a problem file; keyword overrides replace top-level keys."""

    def write(name="worked-example.json", **overrides):
        path = tmp_path / name
        path.write_text(json.dumps({**WORKED_EXAMPLE_FILE, **overrides}), encoding="utf-8")
        return path

    return write
