"""Run configuration and result schemas for the experiment studies."""

import math
from enum import Enum
from typing import Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from src.config import config


class Experiment(str, Enum):
    """Studies the CLI can run."""
    MMS = "mms"
    ROUGH = "rough"
    SUPG = "supg"
    CONE = "cone"
    APPROX_CHECK = "approx-check"


class SolverKind(str, Enum):
    VP = "vp"
    VI = "vi"
    BOTH = "both"

    @property
    def kinds(self) -> tuple["SolverKind", ...]:
        return (SolverKind.VP, SolverKind.VI) if self == SolverKind.BOTH else (self,)


CSV_COLUMNS = ("N", "ul2", "cl2", "uh1", "ch1", "uen", "cen")


class ConvergenceRow(BaseModel):
    """One mesh of a convergence table: VP (u*) and VI (c*) errors."""
    N: int = Field(ge=1)
    ul2: float
    cl2: float
    uh1: float
    ch1: float
    uen: float
    cen: float

    @field_validator("ul2", "cl2", "uh1", "ch1", "uen", "cen")
    @classmethod
    def _nonnegative_or_missing(cls, value: float) -> float:
        # NaN marks a run whose solver did not converge
        if not math.isnan(value) and value < 0:
            raise ValueError(f"Error norms are nonnegative (got {value})")
        return value

    @property
    def complete(self) -> bool:
        return not any(math.isnan(getattr(self, c)) for c in CSV_COLUMNS[1:])


class RunConfig(BaseModel):
    """Validated options of one CLI invocation."""
    experiment: Experiment
    degrees: list[int] = Field(default_factory=lambda: [1, 2, 3])
    ns: list[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    solver: SolverKind = SolverKind.BOTH
    tol: float = Field(default=config.VI_TOL, gt=0)
    out_dir: str = config.OUTPUT_DIR
    snapshots: int = Field(default=0, ge=0)
    parallel_assembly: bool = False
    refine: int = Field(default=0, ge=0, le=1)
    scheme: str = "midpoint"
    jobs: int = Field(default=1, ge=1)
    trials: int = Field(default=100, ge=1)
    seed: int = 0

    @field_validator("degrees")
    @classmethod
    def _supported_degrees(cls, degrees: list[int]) -> list[int]:
        bad = [k for k in degrees if k not in (1, 2, 3)]
        if bad or not degrees:
            raise ValueError(f"Degrees must be in {{1, 2, 3}} (got {degrees})")
        return degrees

    @field_validator("ns")
    @classmethod
    def _positive_sizes(cls, ns: list[int]) -> list[int]:
        if not ns or any(n < 1 for n in ns):
            raise ValueError(f"Mesh sizes must be positive (got {ns})")
        return ns

    @model_validator(mode="after")
    def _mms_needs_both(self) -> "RunConfig":
        if self.experiment == Experiment.MMS and self.solver != SolverKind.BOTH:
            raise ValueError("mms tabulates VP and VI errors side by side; use --solver both")
        return self


class FieldStats(BaseModel):
    name: str
    min: float
    max: float
    ndofs: int


class RunSummary(BaseModel):
    """Per-run summary written next to the CSV/VTK outputs."""
    experiment: Experiment
    degree: int
    n: int
    converged: bool = True
    fields: list[FieldStats] = Field(default_factory=list)
    vi_iterations: Optional[int] = None
    metrics: dict[str, Union[float, int, str]] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)
    files: list[str] = Field(default_factory=list)

    def field(self, name: str) -> FieldStats:
        for stats in self.fields:
            if stats.name == name:
                return stats
        raise KeyError(name)
