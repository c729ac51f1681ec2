"""
Quench Lab - Data Models
========================
Pydantic models for problem files and for the JSON reports emitted by the
command line.
"""

import json
import math
from datetime import datetime
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_serializer, model_validator

from quenchlab.config import (
    ControlExtension,
    FieldKind,
    IntegratorConfig,
    SearchConfig,
    SearchMethod,
)
from quenchlab.core.controls import (
    ControlSignal,
    MatrixSignal,
    ProblemSpec,
    build_problem,
    constant_control,
    constant_matrix,
    piecewise_control,
    piecewise_matrix,
    zero_control,
)


class StrictModel(BaseModel):
    """Base for file schemas: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")


# ===== Problem File Models =====

class MatrixSignalModel(StrictModel):
    """B(.) as a constant matrix or piecewise-constant matrices."""
    kind: Literal["constant", "piecewise"] = "constant"
    matrix: Optional[List[List[float]]] = Field(None, description="Constant 2x2 matrix")
    breakpoints: Optional[List[float]] = Field(None, description="Piece starts, first 0")
    matrices: Optional[List[List[List[float]]]] = Field(None, description="One matrix per piece")

    @model_validator(mode="after")
    def _check_kind(self) -> "MatrixSignalModel":
        if self.kind == "constant" and self.matrix is None:
            raise ValueError("constant matrix signal needs 'matrix'")
        if self.kind == "piecewise" and (self.breakpoints is None or self.matrices is None):
            raise ValueError("piecewise matrix signal needs 'breakpoints' and 'matrices'")
        return self

    def build(self) -> MatrixSignal:
        if self.kind == "constant":
            return constant_matrix(self.matrix)
        return piecewise_matrix(self.breakpoints, self.matrices)


class ControlModel(StrictModel):
    """Zero, constant or uniform-grid piecewise control."""
    kind: Literal["zero", "constant", "piecewise"] = "zero"
    value: Optional[List[float]] = Field(None, description="Constant control vector")
    grid_step: Optional[float] = Field(None, gt=0, description="Piece length")
    values: Optional[List[List[float]]] = Field(None, description="One vector per piece")
    extension: ControlExtension = Field(
        default=ControlExtension.ZERO, description="Value after the last piece"
    )

    @model_validator(mode="after")
    def _check_kind(self) -> "ControlModel":
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant control needs 'value'")
        if self.kind == "piecewise" and (self.grid_step is None or not self.values):
            raise ValueError("piecewise control needs 'grid_step' and 'values'")
        return self

    def build(self) -> ControlSignal:
        if self.kind == "zero":
            return zero_control()
        if self.kind == "constant":
            return constant_control(self.value)
        return piecewise_control(self.grid_step, self.values, self.extension)

    @classmethod
    def from_signal(cls, u: ControlSignal) -> "ControlModel":
        """Serialize a uniform-grid, constant or zero control."""
        if u.kind == "zero":
            return cls(kind="zero")
        if u.kind == "constant":
            return cls(kind="constant", value=u.values[0].tolist())
        if u.grid_step is None:
            raise ValueError(f"cannot serialize a {u.kind} control without a uniform grid")
        return cls(
            kind="piecewise",
            grid_step=u.grid_step,
            values=u.values.tolist(),
            extension=u.extension,
        )


class IntegratorSettings(StrictModel):
    """Integrator tolerances as written in a problem file."""
    rtol: float = Field(default=1e-9, gt=0)
    atol: float = Field(default=1e-12, gt=0)
    delta_stop: float = Field(default=1e-6, gt=0)
    max_step: Optional[float] = Field(default=None, gt=0)
    t_cap: Optional[float] = Field(default=None, gt=0)

    def to_config(self) -> IntegratorConfig:
        return IntegratorConfig(**self.model_dump())


class SearchSettings(StrictModel):
    """Search settings as written in a problem file."""
    method: SearchMethod = SearchMethod.SWEEP
    n_intervals: int = Field(default=1, ge=1)
    n_directions: int = Field(default=8, ge=2)
    include_zero: bool = True
    sweep_damping: float = Field(default=0.5, gt=0, le=1)
    max_iters: int = Field(default=60, ge=1)
    conv_tol: float = Field(default=0.01, ge=0)
    seed: int = 42
    n_starts: int = Field(default=3, ge=1)
    max_evaluations: int = Field(default=2000, ge=1)

    def to_config(self) -> SearchConfig:
        return SearchConfig(**self.model_dump())


class ProblemFile(StrictModel):
    """A complete problem: field, start, bound, matrix signal, control and settings."""
    field: FieldKind
    y0: List[float] = Field(..., min_length=2, max_length=2)
    rho0: float = Field(..., gt=0)
    B: MatrixSignalModel
    control: ControlModel = Field(default_factory=ControlModel)
    integrator: IntegratorSettings = Field(default_factory=IntegratorSettings)
    search: SearchSettings = Field(default_factory=SearchSettings)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ProblemFile":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def echo(self) -> str:
        """Canonical JSON with every default spelled out."""
        return self.model_dump_json()

    def build_problem(self) -> ProblemSpec:
        return build_problem(self.field, self.y0, self.rho0, self.B.build())

    def build_control(self) -> ControlSignal:
        return self.control.build()


# ===== Report Models =====

class CertificateReport(BaseModel):
    """Outcome of a sampled certificate check. Non-finite values serialize as null."""
    name: str
    passed: bool
    worst_t: float
    worst_margin: float
    detail: str = ""

    @field_serializer("worst_t", "worst_margin")
    def finite_or_null(self, value: float) -> Optional[float]:
        return value if math.isfinite(value) else None


class QuenchReport(BaseModel):
    """Stdout line of the simulate and quench-time commands."""
    t_hat: float
    bracket: List[float]
    bound: float
    samples: int
    terminal_state: List[float]
    terminal_y2_or_radius: float


class CertificateSummary(BaseModel):
    """Maximum-principle certificate of a search result."""
    max_residual: float
    nontriviality_ratio: float
    terminal_norm: float
    passed: bool


class SearchReport(BaseModel):
    """Search result as written by the optimize command."""
    method: SearchMethod
    best_t: float
    bound: float
    zero_control_t: float
    evaluations: int
    converged: bool
    no_descent: bool = False
    certificate: Optional[CertificateSummary] = None
    best_control: ControlModel
    history: List[List[float]] = Field(default_factory=list)


class SuiteResult(BaseModel):
    """All certificates produced by one verification suite."""
    suite_id: str
    name: str
    description: str
    reports: List[CertificateReport] = Field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)

    @property
    def failures(self) -> List[CertificateReport]:
        return [report for report in self.reports if not report.passed]


class VerificationResults(BaseModel):
    """Results of a verify run across one or more suites."""
    seed: int
    suites: List[SuiteResult] = Field(default_factory=list)
    created_at: datetime = Field(default_factory=datetime.now)

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    @property
    def total_reports(self) -> int:
        return sum(len(suite.reports) for suite in self.suites)


def report_line(report: BaseModel) -> str:
    """One compact JSON line for standard output."""
    return json.dumps(report.model_dump(mode="json"), separators=(",", ":"), allow_nan=False)
