from enum import Enum
from typing import Any, Iterator, Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

Array = NDArray[np.float64]
Shape = tuple[int, ...]


class NoiseKind(str, Enum):
    NONE = "none"
    UNIFORM_BOUNDED = "uniform_bounded"
    ROUNDING = "rounding"


class TuningPreset(str, Enum):
    MANUAL = "manual"
    ARBITRARY = "arbitrary"
    OPTIMAL = "optimal"


class CoordinateMode(str, Enum):
    UNIFORM = "uniform"
    # diagnostics only, never selected by presets
    CYCLIC = "cyclic"


class OptimizerKind(str, Enum):
    JAGUAR_SIGNSGD = "jaguar_signsgd"
    JAGUAR_MUON = "jaguar_muon"
    ZO_MUON = "zo_muon"
    ZO_SGD = "zo_sgd"
    ZO_SIGNSGD = "zo_signsgd"

    @property
    def is_matrix(self) -> bool:
        return self in (OptimizerKind.JAGUAR_MUON, OptimizerKind.ZO_MUON)

    @property
    def uses_jaguar(self) -> bool:
        return self in (OptimizerKind.JAGUAR_SIGNSGD, OptimizerKind.JAGUAR_MUON)


class OracleConfig(BaseModel):
    """
    Zero-order oracle settings.

    Attributes:
        tau: smoothing parameter of the two-point difference, strictly positive
        delta: bound on the corruption added to every evaluation
        noise_kind: how the corruption is produced
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    tau: float = Field(..., gt=0)
    delta: float = Field(0.0, ge=0)
    noise_kind: NoiseKind = NoiseKind.NONE


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(1e-3, ge=0, description="Step size")
    beta: float = Field(0.9, ge=0, le=1, description="Momentum of the coordinate buffer")
    tau: float = Field(1e-2, gt=0, description="Smoothing parameter")
    ns_steps: int = Field(5, ge=0, description="Newton-Schulz iterations (Muon only)")
    T: int = Field(1000, ge=1, description="Iteration budget")
    seed: int = Field(0, ge=0, description="Seed of the run's random substreams")
    tuning_preset: TuningPreset = TuningPreset.MANUAL
    gamma0: float = Field(1.0, gt=0, description="Base step of the arbitrary preset")
    delta0_estimate: float | None = Field(
        None, gt=0, description="f(x0) - f* when the problem does not know f*"
    )
    linear_decay: bool = Field(False, description="Decay gamma linearly to zero over T steps")
    coordinate_mode: CoordinateMode = CoordinateMode.UNIFORM

    @property
    def schedule(self) -> str:
        """``linear_decay`` runs sit outside the constant-step rate bounds."""
        return "linear_decay" if self.linear_decay else "constant"

    def step_size(self, t: int) -> float:
        """Step size of the 0-based iteration t."""
        if self.linear_decay:
            return self.gamma * (1.0 - t / self.T)
        return self.gamma


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class PolarResult(ArrayModel):
    Q: np.ndarray
    iterations_used: int
    residual: float


class RunTrace(ArrayModel):
    """
    Per-iteration record of one optimizer run.

    Row t (1-based) holds f and the gradient norm at the iterate produced by
    step t, the error of the estimate formed during step t and the oracle
    calls consumed so far.
    """

    optimizer: OptimizerKind
    problem_name: str
    shape: Shape
    config: OptimizerConfig
    oracle: OracleConfig
    t: np.ndarray
    f_value: np.ndarray
    grad_norm: np.ndarray
    momentum_err_sq: np.ndarray
    oracle_calls: np.ndarray
    selected_iterate_index: int
    final_point: np.ndarray
    selected_point: np.ndarray
    initial_f: float
    initial_grad_norm: float
    initial_grad_sq: float
    grad_norm_kind: Literal["l1", "s1"] = "l1"
    left_certified_box: bool = False
    diagnostic_evaluations: int = 0
    persisted_scalars: int = 0

    @property
    def T(self) -> int:  # noqa: N802
        return int(self.t.shape[0])

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape))

    @property
    def has_momentum_error(self) -> bool:
        return not bool(np.all(np.isnan(self.momentum_err_sq)))

    def selected_grad_norm(self) -> float:
        return float(self.grad_norm[self.selected_iterate_index - 1])

    def expected_grad_norm(self) -> float:
        """Expectation of the gradient norm at x^{N(T)} over N(T) ~ Uniform{1..T}."""
        return float(np.mean(self.grad_norm))

    def tail_mean(self, column: str, fraction: float = 0.1) -> float:
        values = getattr(self, column)
        start = min(int(len(values) * (1.0 - fraction)), len(values) - 1)
        return float(np.mean(values[start:]))

    def rows(self) -> Iterator[tuple[int, float, float, float, int]]:
        for i in range(self.T):
            yield (
                int(self.t[i]),
                float(self.f_value[i]),
                float(self.grad_norm[i]),
                float(self.momentum_err_sq[i]),
                int(self.oracle_calls[i]),
            )


class BoundReport(BaseModel):
    observed: list[float]
    bound: list[float]
    explicit_bound: list[float]
    violation_fraction: float = Field(..., ge=0, le=1)
    constant: float
    smallest_passing_constant: float
    seeds: int
    constants_used: dict[str, Any]


class CheckResult(BaseModel):
    passed: bool
    margin: float
    lhs: float
    rhs: float
    details: dict[str, float] = Field(default_factory=dict)


class SlopeFit(BaseModel):
    slope: float
    intercept: float
    stderr: float
    axis: Literal["T", "d"]
    points: list[tuple[float, float]]
