from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.models import NoiseKind, OptimizerConfig, OptimizerKind
from ..core.problems import (
    Problem,
    make_logistic,
    make_matrix_regression,
    make_quadratic,
    make_rosenbrock,
)

SweepValue = float | int | str | bool


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class QuadraticSpec(StrictModel):
    kind: Literal["quadratic"] = "quadratic"
    d: int = Field(..., ge=1)
    condition_number: float = Field(1.0, ge=1)
    sigma: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)
    L: float = Field(1.0, gt=0)
    n_samples: int = Field(16, ge=1)
    rotate: bool = True
    asymmetry: float = Field(0.0, ge=0, lt=1)
    start_offset: float = 1.0

    def build(self) -> Problem:
        return make_quadratic(**self.model_dump(exclude={"kind"}))


class LogisticSpec(StrictModel):
    kind: Literal["logistic"] = "logistic"
    d: int = Field(..., ge=1)
    n_samples: int = Field(256, ge=1)
    sigma_label_noise: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)

    def build(self) -> Problem:
        return make_logistic(**self.model_dump(exclude={"kind"}))


class RosenbrockSpec(StrictModel):
    kind: Literal["rosenbrock"] = "rosenbrock"
    d: int = Field(..., ge=2)
    seed: int = Field(0, ge=0)

    def build(self) -> Problem:
        return make_rosenbrock(**self.model_dump(exclude={"kind"}))


class MatrixRegressionSpec(StrictModel):
    kind: Literal["matrix_regression"] = "matrix_regression"
    m: int = Field(..., ge=1)
    n: int = Field(..., ge=1)
    rank: int = Field(1, ge=1)
    sigma: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)
    n_samples: int = Field(16, ge=1)
    rows: int | None = Field(None, ge=1)

    def build(self) -> Problem:
        return make_matrix_regression(**self.model_dump(exclude={"kind"}))


ProblemSpec = Annotated[
    QuadraticSpec | LogisticSpec | RosenbrockSpec | MatrixRegressionSpec,
    Field(discriminator="kind"),
]


class OracleSettings(StrictModel):
    delta: float = Field(0.0, ge=0, description="Bound on the corruption of each evaluation")
    noise_kind: NoiseKind = NoiseKind.NONE


class OptimizerBlock(StrictModel):
    kind: OptimizerKind
    config: OptimizerConfig = Field(default_factory=OptimizerConfig)


CheckName = Literal["lemma1", "param-count", "convergence-bound"]
SWEEP_SECTIONS = ("optimizer", "oracle", "problem")


class ExperimentConfig(StrictModel):
    """
    One experiment: a problem, an optimizer, a sweep cross-product and seeds.

    Sweep keys are ``section.field`` with section one of optimizer, oracle or
    problem (``optimizer.kind`` switches the method). A bare field name must
    match exactly one section. Run seeds are never swept, they go in ``seeds``.
    """

    name: str = Field("experiment", min_length=1)
    problem: ProblemSpec
    optimizer: OptimizerBlock
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    sweep: dict[str, list[SweepValue]] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output: str | None = None
    checks: list[CheckName] = Field(default_factory=list)
    max_runs: int | None = Field(None, ge=1)
    tail_fraction: float = Field(0.1, gt=0, le=1)
    master_seed: int | None = Field(None, ge=0)

    def resolve_sweep_key(self, key: str) -> tuple[str, str]:
        section, _, field = key.rpartition(".")
        if section:
            if section not in SWEEP_SECTIONS:
                raise ValueError(f"unknown sweep section {section!r} in {key!r}")
            if section == "optimizer" and field == "seed":
                raise ValueError(f"{key!r} is set per run; list run seeds in 'seeds'")
            if not self._has_field(section, field):
                raise ValueError(f"{section} has no field {field!r}")
            return section, field

        if field == "seed":
            raise ValueError("run seeds go in 'seeds'; sweep the data generator with 'problem.seed'")
        matches = [candidate for candidate in SWEEP_SECTIONS if field != "kind" and self._has_field(candidate, field)]
        if len(matches) > 1:
            qualified = " or ".join(f"{candidate}.{field}" for candidate in matches)
            raise ValueError(f"sweep key {key!r} is ambiguous, use {qualified}")
        if not matches:
            raise ValueError(f"sweep key {key!r} matches no optimizer, oracle or problem field")
        return matches[0], field

    def _has_field(self, section: str, field: str) -> bool:
        if section == "optimizer":
            return field == "kind" or (field in OptimizerConfig.model_fields and field != "seed")
        if section == "oracle":
            return field in OracleSettings.model_fields
        return field in type(self.problem).model_fields and field != "kind"

    @model_validator(mode="after")
    def check_sweep(self) -> "ExperimentConfig":
        errors = []
        for key, values in self.sweep.items():
            if not values:
                errors.append(f"sweep key {key!r} has no values")
                continue
            try:
                self.resolve_sweep_key(key)
            except ValueError as e:
                errors.append(str(e))
        if errors:
            raise ValueError("; ".join(errors))
        return self


class SweepPoint(BaseModel):
    """One cross-product point with its fully resolved blocks."""

    label: str
    overrides: dict[str, SweepValue]
    problem: QuadraticSpec | LogisticSpec | RosenbrockSpec | MatrixRegressionSpec
    optimizer: OptimizerBlock
    oracle: OracleSettings


class SummaryRow(BaseModel):
    point: str
    seed: int
    optimizer: OptimizerKind
    problem: str
    T: int
    gamma: float
    beta: float
    tau: float
    delta: float
    final_f: float
    final_grad_norm: float
    expected_grad_norm: float
    selected_grad_norm: float
    selected_index: int
    final_momentum_err_sq: float
    schedule: str
    theory_bound: float
    noise_floor: float
    oracle_calls: int
    diagnostic_evaluations: int
    persisted_scalars: int
    left_certified_box: bool
    trace_file: str


class GroupSummary(BaseModel):
    point: str
    metric: str
    count: int
    mean: float
    std: float


class RunRecord(BaseModel):
    """Everything a worker sends back for one (point, seed) run."""

    row: SummaryRow
    effective: dict[str, Any]
    checks: dict[str, Any] = Field(default_factory=dict)
