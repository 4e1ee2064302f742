from .models import (
    NoiseKind,
    OptimizerConfig,
    OptimizerKind,
    OracleConfig,
    RunTrace,
    TuningPreset,
)
from .optimizers import param_count, resolve_tuning, run

__all__ = [
    "NoiseKind",
    "OptimizerConfig",
    "OptimizerKind",
    "OracleConfig",
    "RunTrace",
    "TuningPreset",
    "param_count",
    "resolve_tuning",
    "run",
]
