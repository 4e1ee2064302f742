"""
Built-in experiment presets listed by ``zoopt sweep-presets``.
"""
from typing import Callable

import numpy as np

from ..core.models import NoiseKind, OptimizerConfig, OptimizerKind, TuningPreset
from ..storage.models import (
    ExperimentConfig,
    OptimizerBlock,
    OracleSettings,
    QuadraticSpec,
)

BETA_ABLATION_VALUES = [0.0, 0.5, 0.8, 0.9, 0.95, 0.99]
TAU_GRID = [float(t) for t in np.logspace(-5, -1, 9)]
SLOPE_T_VALUES = [1_000, 4_000, 16_000, 64_000]
SLOPE_D_VALUES = [4, 8, 16, 32]
GRID_BETAS = [1e-3, 1e-2, 1e-1, 0.8]
GRID_GAMMAS = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
GRID_TAUS = [1e-1, 1e-2, 1e-3]
TAU_OPTIMUM_DELTA = 1e-6
TAU_OPTIMUM_ASYMMETRY = 0.75


def beta_ablation() -> ExperimentConfig:
    """Noisy 2-d quadratic started at the optimum; final metric over the last half of the run."""
    return ExperimentConfig(
        name="beta-ablation",
        problem=QuadraticSpec(d=2, sigma=1.0, L=1.0, start_offset=0.0),
        optimizer=OptimizerBlock(
            kind=OptimizerKind.JAGUAR_SIGNSGD,
            config=OptimizerConfig(gamma=1e-4, tau=1e-2, T=20_000),
        ),
        sweep={"optimizer.beta": list(BETA_ABLATION_VALUES)},
        seeds=list(range(20)),
        tail_fraction=0.5,
    )


def tau_optimum() -> ExperimentConfig:
    """
    Asymmetric noiseless quadratic with corrupted evaluations, frozen at x*.

    The stationary momentum error is (alpha tau / 4)^2 + delta^2 / (6 tau^2) per
    coordinate, minimized near 1.475 sqrt(delta / L) for alpha = 0.75.
    """
    return ExperimentConfig(
        name="tau-optimum",
        problem=QuadraticSpec(d=4, L=1.0, rotate=False, asymmetry=TAU_OPTIMUM_ASYMMETRY, start_offset=0.0),
        optimizer=OptimizerBlock(
            kind=OptimizerKind.JAGUAR_SIGNSGD,
            config=OptimizerConfig(gamma=1e-9, beta=0.0, T=2_000),
        ),
        oracle=OracleSettings(delta=TAU_OPTIMUM_DELTA, noise_kind=NoiseKind.UNIFORM_BOUNDED),
        sweep={"optimizer.tau": list(TAU_GRID)},
        seeds=list(range(5)),
        tail_fraction=0.5,
    )


def slope_t() -> ExperimentConfig:
    return ExperimentConfig(
        name="slope-T",
        problem=QuadraticSpec(d=8, condition_number=4.0),
        optimizer=OptimizerBlock(
            kind=OptimizerKind.JAGUAR_SIGNSGD,
            config=OptimizerConfig(tuning_preset=TuningPreset.OPTIMAL),
        ),
        sweep={"optimizer.T": list(SLOPE_T_VALUES)},
        seeds=list(range(10)),
    )


def slope_d() -> ExperimentConfig:
    return ExperimentConfig(
        name="slope-d",
        problem=QuadraticSpec(d=8, condition_number=4.0),
        optimizer=OptimizerBlock(
            kind=OptimizerKind.JAGUAR_SIGNSGD,
            config=OptimizerConfig(tuning_preset=TuningPreset.OPTIMAL, T=4_000),
        ),
        sweep={"problem.d": list(SLOPE_D_VALUES)},
        seeds=list(range(10)),
    )


def hyperparameter_grid() -> ExperimentConfig:
    """Step size, momentum and smoothing grid of the fine-tuning experiments."""
    return ExperimentConfig(
        name="hyperparameter-grid",
        problem=QuadraticSpec(d=8, condition_number=4.0, sigma=0.1),
        optimizer=OptimizerBlock(kind=OptimizerKind.JAGUAR_SIGNSGD, config=OptimizerConfig(T=1_000)),
        sweep={
            "optimizer.beta": list(GRID_BETAS),
            "optimizer.gamma": list(GRID_GAMMAS),
            "optimizer.tau": list(GRID_TAUS),
        },
        seeds=[0],
    )


PRESETS: dict[str, tuple[str, Callable[[], ExperimentConfig]]] = {
    "beta-ablation": ("momentum sweep on a noisy quadratic, 20 seeds", beta_ablation),
    "tau-optimum": ("smoothing-parameter sweep under bounded oracle noise", tau_optimum),
    "slope-T": ("optimal tuning, iteration budget sweep for the log-log slope", slope_t),
    "slope-d": ("optimal tuning, dimension sweep for the log-log slope", slope_d),
    "hyperparameter-grid": ("beta x gamma x tau grid search", hyperparameter_grid),
}


def get_preset(name: str) -> ExperimentConfig | None:
    entry = PRESETS.get(name)
    return entry[1]() if entry else None
