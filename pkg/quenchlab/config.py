"""
Quench Lab - Configuration
==========================
Central configuration for vector fields, integrator and search settings,
verification suites and process-level switches.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from quenchlab.errors import InvalidParameter


# ===== Closed Vocabularies =====

class FieldKind(str, Enum):
    """The three singular vector fields."""
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"


class Branch(str, Enum):
    """Side of the singular set a trajectory lives on."""
    BELOW = "below"
    ABOVE = "above"


class ControlExtension(str, Enum):
    """How a piecewise control continues past its last piece."""
    ZERO = "zero"
    HOLD = "hold"


class SearchMethod(str, Enum):
    """Time-optimal control search methods."""
    BRUTE = "brute"
    SWEEP = "sweep"
    DIRECT = "direct"


# ===== Application Settings =====

APP_CONFIG: Dict[str, Any] = {
    "app_name": "Quench Lab",
    "app_description": "Quenching-time simulation, certificates and time-optimal control search",
    "version": "1.0.0",

    # Field evaluation
    "singular_guard": 1e-14,          # relative distance below which f is not evaluated

    # Controls
    "tie_eps": 1e-12,                 # degenerate maximum condition threshold factor
    "agree_tol": 1e-12,               # componentwise control agreement
    "admissible_slack": 1e-12,

    # Integrator
    "step_cap_fraction": 0.25,        # of singular_distance / ||f(y)||
    "bracket_width_factor": 10.0,     # bracket width <= factor * delta_stop**2
    "min_tail_samples": 3,

    # Analysis
    "certificate_tol": 1e-9,
    "monotone_tol": 1e-12,
    "rate_growth_limit": 0.10,

    # PMP
    "residual_tol": 1e-5,
    "nontriviality_threshold": 0.1,
    "adjoint_rtol": 1e-10,
    "adjoint_atol": 1e-14,

    # Search
    "max_candidates": 1_000_000,
    "max_direct_dimension": 12,
    "move_tol": 1e-6,
    "no_descent_patience": 5,

    # Suites
    "default_seed": 42,
    "random_problems_per_field": 100,
    "sensitivity_pairs": 20,
}


# ===== Integrator Configuration =====

@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and stopping rules for quench integration."""
    rtol: float = 1e-9
    atol: float = 1e-12
    delta_stop: float = 1e-6
    max_step: Optional[float] = None    # None: t_cap / 10
    t_cap: Optional[float] = None       # None: 2 x analytic quench-time bound

    def __post_init__(self):
        for name in ("rtol", "atol", "delta_stop"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameter(f"{name} must be positive, got {value}")
        for name in ("max_step", "t_cap"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidParameter(f"{name} must be positive, got {value}")
        if self.delta_stop <= 100 * self.atol:
            raise InvalidParameter(
                f"delta_stop ({self.delta_stop}) must exceed 100*atol ({100 * self.atol})"
            )

    def with_overrides(self, **overrides: Optional[float]) -> "IntegratorConfig":
        """Return a copy with the non-None overrides applied."""
        values = {
            "rtol": self.rtol,
            "atol": self.atol,
            "delta_stop": self.delta_stop,
            "max_step": self.max_step,
            "t_cap": self.t_cap,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return IntegratorConfig(**values)


# ===== Search Configuration =====

@dataclass(frozen=True)
class SearchConfig:
    """Settings shared by the brute, sweep and direct searches."""
    method: SearchMethod = SearchMethod.SWEEP
    n_intervals: int = 1
    n_directions: int = 8
    include_zero: bool = True
    sweep_damping: float = 0.5
    max_iters: int = 60
    conv_tol: float = 0.01
    seed: int = 42
    n_starts: int = 3
    max_evaluations: int = 2000

    def __post_init__(self):
        if self.n_intervals < 1:
            raise InvalidParameter(f"n_intervals must be >= 1, got {self.n_intervals}")
        if self.n_directions < 2:
            raise InvalidParameter(f"n_directions must be >= 2, got {self.n_directions}")
        if not 0 < self.sweep_damping <= 1:
            raise InvalidParameter(f"sweep_damping must lie in (0, 1], got {self.sweep_damping}")
        if self.max_iters < 1:
            raise InvalidParameter(f"max_iters must be >= 1, got {self.max_iters}")
        if self.conv_tol < 0:
            raise InvalidParameter(f"conv_tol must be >= 0, got {self.conv_tol}")
        if self.n_starts < 1 or self.max_evaluations < 1:
            raise InvalidParameter("n_starts and max_evaluations must be >= 1")


# ===== Process Settings =====

class QuenchSettings(BaseSettings):
    """Environment switches (QUENCH_NO_PARALLEL, QUENCH_MAX_WORKERS, QUENCH_LOG_LEVEL)."""
    model_config = SettingsConfigDict(env_prefix="QUENCH_")

    no_parallel: bool = False
    max_workers: int = 4
    log_level: str = "WARNING"


def get_settings() -> QuenchSettings:
    """Read the environment afresh (tests flip QUENCH_NO_PARALLEL)."""
    return QuenchSettings()


# ===== Verification Suites =====

VERIFY_SUITES = [
    {
        "id": "paper-example",
        "name": "Worked Example",
        "description": "Quench times of the radial f2 example with and without control",
    },
    {
        "id": "bounds",
        "name": "Quench-Time Bounds",
        "description": "Estimated quench times against the analytic bounds on random problems",
    },
    {
        "id": "invariants",
        "name": "Invariant Regions",
        "description": "Invariant regions, monotone approach and f3 ratio bounds",
    },
    {
        "id": "rates",
        "name": "Rate Estimates",
        "description": "Quench-rate ceilings and square-root approach exponent",
    },
    {
        "id": "pmp",
        "name": "Maximum Principle",
        "description": "Sensitivity, adjoint duality and forward-backward sweep certificates",
    },
]

SUITE_IDS = [suite["id"] for suite in VERIFY_SUITES]


def get_suite(suite_id: str) -> Dict[str, str]:
    """Get the description of a verification suite."""
    for suite in VERIFY_SUITES:
        if suite["id"] == suite_id:
            return suite
    raise ValueError(f"Unknown suite: {suite_id}")
