import json
from pathlib import Path
from typing import Any

import numpy as np
from click.testing import Result
from typer.testing import CliRunner

from ..core.models import OptimizerConfig, OptimizerKind, OracleConfig, RunTrace
from ..core.problems import QuadraticProblem
from ..main import app


def half_norm_problem(d: int) -> QuadraticProblem:
    """f(x) = 1/2 ||x||^2 with a single sample."""
    return QuadraticProblem(np.eye(d), np.zeros((1, d)))


def minimal_config(**overrides: Any) -> dict[str, Any]:
    config: dict[str, Any] = {
        "name": "minimal",
        "problem": {"kind": "quadratic", "d": 2},
        "optimizer": {"kind": "jaguar_signsgd", "config": {"T": 100, "gamma": 1e-2, "beta": 0.9}},
        "seeds": [0],
    }
    config.update(overrides)
    return config


def write_config(path: Path, payload: dict[str, Any]) -> Path:
    path.write_text(json.dumps(payload))
    return path


def invoke(runner: CliRunner, *args: str) -> Result:
    return runner.invoke(app, ["--log-level", "ERROR", *args])


def synthetic_trace(grad_norm: np.ndarray, shape: tuple[int, ...] = (2,), seed: int = 0) -> RunTrace:
    """A trace with the given gradient-norm column and zeros elsewhere."""
    T = len(grad_norm)
    return RunTrace(
        optimizer=OptimizerKind.JAGUAR_SIGNSGD,
        problem_name="synthetic",
        shape=shape,
        config=OptimizerConfig(T=T, seed=seed),
        oracle=OracleConfig(tau=1e-2),
        t=np.arange(1, T + 1),
        f_value=np.zeros(T),
        grad_norm=np.asarray(grad_norm, dtype=np.float64),
        momentum_err_sq=np.zeros(T),
        oracle_calls=2 * np.arange(1, T + 1),
        selected_iterate_index=1,
        final_point=np.zeros(shape),
        selected_point=np.zeros(shape),
        initial_f=0.0,
        initial_grad_norm=1.0,
        initial_grad_sq=1.0,
    )
