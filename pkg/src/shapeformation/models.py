import json
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .geometry import ShapeVector
from .graph import Graph
from .simulation import SimConfig


class ConstantMode(BaseModel, populate_by_name=True):
    mode: Literal["constant"] = "constant"
    s_c: float = Field(alias="sC", gt=0)


class ScanMode(BaseModel, populate_by_name=True):
    mode: Literal["scan"] = "scan"
    grid: list[float] = Field(min_length=1)
    include_optimum: bool = Field(alias="includeOptimum", default=True)

    @field_validator("grid")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        if any(s <= 0 for s in value):
            raise ValueError("Scan grid must be strictly positive")
        return value


class VaryingMode(BaseModel):
    mode: Literal["varying"] = "varying"


class ControllableMode(BaseModel, populate_by_name=True):
    mode: Literal["controllable"] = "controllable"
    target_scale: Optional[float] = Field(alias="lambda", default=None, gt=0)
    relative_target: Optional[float] = Field(alias="relativeTarget", default=None, gt=0)
    gain_floor: float = Field(alias="gainFloor", default=1e-3, gt=0)

    @model_validator(mode="after")
    def _check_target(self) -> "ControllableMode":
        if (self.target_scale is None) == (self.relative_target is None):
            raise ValueError("Give exactly one of lambda and relativeTarget")
        return self


ModeConfig = Annotated[
    Union[ConstantMode, ScanMode, VaryingMode, ControllableMode],
    Field(discriminator="mode"),
]


class ShapeConfig(BaseModel):
    values: list[float] = Field(min_length=1)
    squared: bool = False

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[float]) -> list[float]:
        if any(not s > 0 for s in value):
            raise ValueError("Shape entries must be positive")
        return value

    def to_shape(self) -> ShapeVector:
        if self.squared:
            return ShapeVector.from_squared(self.values)
        return ShapeVector.from_lengths(self.values)


def _flatten(value):
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
        return [float(x) for pair in value for x in pair]
    return value


class ExperimentConfig(BaseModel, populate_by_name=True):
    name: str = "experiment"
    graph: Graph
    z0: list[float]
    shape: ShapeConfig
    scale: ModeConfig
    reference: Optional[list[float]] = None
    simulation: SimConfig = Field(default_factory=SimConfig)
    output: Optional[str] = None
    seed: int = 0

    @field_validator("z0", "reference", mode="before")
    @classmethod
    def _flatten_positions(cls, value):
        return _flatten(value)

    @model_validator(mode="after")
    def _check_sizes(self) -> "ExperimentConfig":
        if len(self.shape.values) != self.graph.m:
            raise ValueError(
                f"shape has {len(self.shape.values)} entries, graph has {self.graph.m} edges"
            )
        if len(self.z0) != 2 * self.graph.n:
            raise ValueError(f"z0 has length {len(self.z0)}, expected {2 * self.graph.n}")
        if self.reference is not None and len(self.reference) != 2 * self.graph.n:
            raise ValueError(
                f"reference has length {len(self.reference)}, expected {2 * self.graph.n}"
            )
        if not self.graph.is_connected():
            raise ValueError("Graph is not connected")
        return self

    @property
    def initial(self) -> np.ndarray:
        return np.asarray(self.z0, dtype=float)


class PaperComparison(BaseModel, populate_by_name=True):
    table: str
    row: str
    quantity: str
    paper: float
    computed: Optional[float] = None
    rel_error: Optional[float] = Field(alias="relError", default=None)
    tolerance: Optional[float] = None
    within_tolerance: Optional[bool] = Field(alias="withinTolerance", default=None)

    @classmethod
    def compare(
        cls,
        table: str,
        row: str,
        quantity: str,
        paper: float,
        computed: Optional[float],
        tolerance: Optional[float] = None,
    ) -> "PaperComparison":
        rel_error = None
        if computed is not None and np.isfinite(computed) and paper != 0:
            rel_error = abs(computed - paper) / abs(paper)
        within = None
        if tolerance is not None:
            within = rel_error is not None and rel_error <= tolerance
        return cls(
            table=table,
            row=row,
            quantity=quantity,
            paper=paper,
            computed=computed,
            rel_error=rel_error,
            tolerance=tolerance,
            within_tolerance=within,
        )

    @property
    def failed(self) -> bool:
        return self.within_tolerance is False


class RunSummary(BaseModel, populate_by_name=True):
    name: str
    mode: str
    s_c: Optional[float] = Field(alias="sC", default=None)
    final_scale: Optional[float] = Field(alias="finalScale", default=None)
    J: Optional[float] = None
    closed_form_j: Optional[float] = Field(alias="closedFormJ", default=None)
    path_lengths: list[float] = Field(alias="pathLengths", default_factory=list)
    total_path: Optional[float] = Field(alias="totalPath", default=None)
    max_agent: Optional[int] = Field(alias="maxAgent", default=None)
    rate: Optional[float] = None
    r_squared: Optional[float] = Field(alias="rSquared", default=None)
    flags: list[str] = Field(default_factory=list)
    truncated: bool = False
    termination_reason: str = Field(alias="terminationReason")
    gains: Optional[list[float]] = None
    error: Optional[str] = None
    paper_comparisons: list[PaperComparison] = Field(alias="paperComparisons", default_factory=list)

    @field_validator("final_scale", "J", "rate", "r_squared", "closed_form_j", mode="before")
    @classmethod
    def _finite_or_none(cls, value):
        if value is not None and not np.isfinite(value):
            return None
        return value

    @property
    def ok(self) -> bool:
        return self.error is None and self.termination_reason == "converged"


class Check(BaseModel):
    """A pass/fail property of a reproduction; passed is None when only reported."""

    name: str
    value: Optional[float] = None
    threshold: Optional[float] = None
    passed: Optional[bool] = None

    @field_validator("value", "threshold", mode="before")
    @classmethod
    def _finite_or_none(cls, value):
        if value is not None and not np.isfinite(value):
            return None
        return value


class SuiteSummary(BaseModel, populate_by_name=True):
    name: str
    seed: Optional[int] = None
    runs: list[RunSummary] = Field(default_factory=list)
    paper_comparisons: list[PaperComparison] = Field(alias="paperComparisons", default_factory=list)
    checks: list[Check] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            all(run.ok for run in self.runs)
            and not any(c.failed for c in self.paper_comparisons)
            and not any(check.passed is False for check in self.checks)
        )


def _format_location(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(text: str) -> ExperimentConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(
            "Config is not valid JSON",
            [f"line {error.lineno}, column {error.colno}: {error.msg}"],
        ) from None
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as error:
        diagnostics = [
            f"{_format_location(detail['loc'])}: {detail['msg']}" for detail in error.errors()
        ]
        raise ConfigError("Config failed validation", diagnostics) from None


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
    except OSError as error:
        raise ConfigError(f"Cannot read config: {path}", [str(error)]) from None
    return parse_config(text)
