"""
Optimizer loops: JAGUAR SignSGD, JAGUAR Muon, ZO-Muon and the Gaussian
ZO-SGD / ZO-SignSGD baselines, plus persisted-state accounting and the
tuning presets.
"""
import logging
import math

import numpy as np

from ..errors import ConfigurationError, DomainError, RunFailure, UnsupportedProblemError, ZooptError
from ..utils import Stream, substream
from .estimators import (
    Coordinate,
    JaguarState,
    gaussian_estimate,
    init_jaguar_state,
    jaguar_update,
)
from .linalg import l1_norm, newton_schulz, schatten1_norm, sign_elementwise
from .models import (
    Array,
    CoordinateMode,
    NoiseKind,
    OptimizerConfig,
    OptimizerKind,
    OracleConfig,
    RunTrace,
    Shape,
    TuningPreset,
)
from .oracle import StochasticOracle
from .problems import Problem

logger = logging.getLogger(__name__)


def step_jaguar_signsgd(
    x: Array,
    state: JaguarState,
    problem: Problem,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    gamma: float,
    coordinate: Coordinate | None = None,
    sample: int | None = None,
    mode: CoordinateMode = CoordinateMode.UNIFORM,
) -> tuple[Array, JaguarState]:
    """One coordinate momentum update, then x - gamma * sign(m) over the full buffer."""
    state = jaguar_update(state, problem, x, oracle, rng, coordinate, sample, mode)
    return x - gamma * sign_elementwise(state.m), state


def muon_direction(m: Array, ns_steps: int) -> Array | None:
    """Newton-Schulz polar approximation of m, or None when m is zero and the step is skipped."""
    if not np.any(m):
        logger.debug("zero momentum matrix, Muon step skipped")
        return None
    return newton_schulz(m, ns_steps).Q


def step_jaguar_muon(
    x: Array,
    state: JaguarState,
    problem: Problem,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    gamma: float,
    ns_steps: int = 5,
    coordinate: Coordinate | None = None,
    sample: int | None = None,
    mode: CoordinateMode = CoordinateMode.UNIFORM,
) -> tuple[Array, JaguarState]:
    if x.ndim != 2:
        raise UnsupportedProblemError("JAGUAR Muon needs a matrix-shaped variable")
    state = jaguar_update(state, problem, x, oracle, rng, coordinate, sample, mode)
    direction = muon_direction(state.m, ns_steps)
    if direction is None:
        return x.copy(), state
    return x - gamma * direction, state


def step_zo_muon(
    x: Array,
    problem: Problem,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    gamma: float,
    ns_steps: int = 5,
    sample: int | None = None,
) -> tuple[Array, Array]:
    """Gaussian full-matrix estimate G, then X - gamma * NS(G). Returns the new point and G."""
    if x.ndim != 2:
        raise UnsupportedProblemError("ZO-Muon needs a matrix-shaped variable")
    estimate = gaussian_estimate(problem, x, oracle, rng, sample)
    direction = muon_direction(estimate, ns_steps)
    if direction is None:
        return x.copy(), estimate
    return x - gamma * direction, estimate


def step_zo_sgd(
    x: Array,
    problem: Problem,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    gamma: float,
    sample: int | None = None,
) -> tuple[Array, Array]:
    estimate = gaussian_estimate(problem, x, oracle, rng, sample)
    return x - gamma * estimate, estimate


def step_zo_signsgd(
    x: Array,
    problem: Problem,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    gamma: float,
    sample: int | None = None,
) -> tuple[Array, Array]:
    estimate = gaussian_estimate(problem, x, oracle, rng, sample)
    return x - gamma * sign_elementwise(estimate), estimate


def live_scalars(x: Array, buffer: JaguarState | Array) -> int:
    """Scalars persisted across iterations: the variable plus the estimator buffer."""
    if isinstance(buffer, JaguarState):
        return int(x.size) + buffer.persisted_scalars()
    return int(x.size) + int(buffer.size)


def _initial_buffer(kind: OptimizerKind, shape: Shape, beta: float) -> JaguarState | Array:
    if kind.uses_jaguar:
        return init_jaguar_state(shape, beta)
    return np.zeros(shape)


def param_count(kind: OptimizerKind, shape: Shape) -> int:
    """
    Persisted scalar count: 2d + 1 for JAGUAR methods, 2d for Gaussian ones.

    The formula is checked against a freshly built live state.
    """
    size = int(np.prod(shape))
    expected = 2 * size + 1 if kind.uses_jaguar else 2 * size
    live = live_scalars(np.zeros(shape), _initial_buffer(kind, shape, 0.0))
    if live != expected:
        raise ZooptError(f"{kind.value}: live state holds {live} scalars, expected {expected}")
    return expected


def _matrix_dims(shape: Shape) -> tuple[int, int]:
    m, n = shape
    return max(m, n), min(m, n)


def _dimension_factor(kind: OptimizerKind, shape: Shape) -> float:
    """d^2 for vector methods, m^{3/2} n^2 (m >= n) for Muon methods."""
    if kind.is_matrix:
        m, n = _matrix_dims(shape)
        return m**1.5 * n**2
    return float(np.prod(shape)) ** 2


def initial_gap(problem: Problem, cfg: OptimizerConfig, x0: Array) -> float:
    """delta_0 = f(x0) - f*, from the problem when it knows f* and otherwise from the user estimate."""
    if problem.f_star is not None:
        return problem.value(x0) - problem.f_star
    if cfg.delta0_estimate is not None:
        logger.warning(
            "problem %s has no known f*, using delta0_estimate=%g for the optimal preset",
            problem.name,
            cfg.delta0_estimate,
        )
        return cfg.delta0_estimate
    raise ConfigurationError(f"optimal tuning needs f* or delta0_estimate for problem {problem.name!r}")


def resolve_tuning(
    kind: OptimizerKind,
    problem: Problem,
    cfg: OptimizerConfig,
    delta: float = 0.0,
    x0: Array | None = None,
) -> OptimizerConfig:
    """
    Effective config after applying the arbitrary or optimal preset.

    tau = sqrt(delta / L) when delta > 0, otherwise the configured tau is kept.
    """
    if cfg.tuning_preset == TuningPreset.MANUAL:
        return cfg

    T, L = cfg.T, problem.L
    tau = math.sqrt(delta / L) if delta > 0 else cfg.tau

    if cfg.tuning_preset == TuningPreset.ARBITRARY:
        size = float(np.prod(problem.shape))
        gamma = cfg.gamma0 * T**-0.75 / size
        beta = 1.0 - T**-0.5
    else:
        gap = initial_gap(problem, cfg, problem.initial_point() if x0 is None else x0)
        if gap <= 0:
            logger.warning("initial gap %g <= 0, optimal preset gives gamma = 0", gap)
            gap = 0.0
        sigma = problem.sigma
        ratio = math.inf if sigma == 0 else math.sqrt(L * gap / (T * sigma**2))
        beta = 1.0 - min(1.0, ratio)
        gamma = math.sqrt(gap * (1.0 - beta) / (_dimension_factor(kind, problem.shape) * L * T))

    resolved = cfg.model_copy(update={"gamma": gamma, "beta": beta, "tau": tau})
    logger.info(
        "%s preset for %s on %s: gamma=%.6g beta=%.6g tau=%.6g",
        cfg.tuning_preset.value,
        kind.value,
        problem.name,
        gamma,
        beta,
        tau,
    )
    return resolved


class _Metrics:
    """Diagnostic evaluations at the iterates; never charged to the oracle."""

    def __init__(self, problem: Problem, matrix_norm: bool) -> None:
        self.problem = problem
        self.matrix_norm = matrix_norm
        self.evaluations = 0
        self.left_box = False

    def at(self, x: Array) -> tuple[float, float, Array | None]:
        problem = self.problem
        if not problem.in_certified_box(x):
            if not self.left_box:
                logger.warning("iterate left the certified box of %s, metrics are clipped", problem.name)
            self.left_box = True
            x = problem.clip_to_box(x)

        value = problem.value(x)
        self.evaluations += 1
        if not problem.has_exact_gradient:
            return value, math.nan, None

        grad = problem.exact_gradient(x)
        self.evaluations += 1
        norm = schatten1_norm(grad) if self.matrix_norm else l1_norm(grad)
        return value, norm, grad


def run(
    kind: OptimizerKind,
    problem: Problem,
    cfg: OptimizerConfig,
    delta: float = 0.0,
    noise_kind: NoiseKind = NoiseKind.NONE,
    x0: Array | None = None,
    master_seed: int = 0,
) -> RunTrace:
    """
    Run exactly cfg.T iterations and record one trace row per iteration.

    Args:
        kind: optimizer to run
        problem: objective, reached by the optimizer only through the oracle
        cfg: optimizer config, presets are resolved here
        delta: oracle corruption bound
        noise_kind: oracle noise model
        x0: starting point, defaults to the problem's initial point
        master_seed: entropy of the per-run substreams

    Returns:
        RunTrace with rows t = 1..T and the drawn index N(T)

    Raises:
        RunFailure: if a step fails, with the 1-based iteration index
    """
    kind = OptimizerKind(kind)
    if kind.is_matrix and not problem.is_matrix:
        raise UnsupportedProblemError(f"{kind.value} needs a single matrix-shaped problem")

    x = problem.initial_point() if x0 is None else problem.check_point(np.array(x0, dtype=np.float64))
    cfg = resolve_tuning(kind, problem, cfg, delta, x)
    oracle_config = OracleConfig(tau=cfg.tau, delta=delta, noise_kind=noise_kind)
    oracle = StochasticOracle(oracle_config, substream(master_seed, cfg.seed, Stream.NOISE))
    samples = substream(master_seed, cfg.seed, Stream.SAMPLES)
    directions = substream(master_seed, cfg.seed, Stream.DIRECTIONS)
    # own stream, so N(T) never perturbs the optimization path
    selected = int(substream(master_seed, cfg.seed, Stream.OUTPUT).integers(1, cfg.T + 1))

    expected_scalars = param_count(kind, problem.shape)
    metrics = _Metrics(problem, kind.is_matrix)
    initial_f, initial_norm, grad = metrics.at(x)
    initial_grad_sq = math.nan if grad is None else float(np.sum(grad * grad))

    T = cfg.T
    f_value = np.empty(T)
    grad_norm = np.empty(T)
    momentum_err_sq = np.empty(T)
    oracle_calls = np.empty(T, dtype=np.int64)
    buffer = _initial_buffer(kind, problem.shape, cfg.beta)
    selected_point = x

    logger.info("run %s on %s: T=%d seed=%d", kind.value, problem.name, T, cfg.seed)
    for t in range(1, T + 1):
        gamma = cfg.step_size(t - 1)
        try:
            if kind == OptimizerKind.JAGUAR_SIGNSGD:
                x, buffer = step_jaguar_signsgd(x, buffer, problem, oracle, samples, gamma, mode=cfg.coordinate_mode)
                estimate = buffer.m
            elif kind == OptimizerKind.JAGUAR_MUON:
                x, buffer = step_jaguar_muon(
                    x, buffer, problem, oracle, samples, gamma, cfg.ns_steps, mode=cfg.coordinate_mode
                )
                estimate = buffer.m
            else:
                sample = problem.draw_sample(samples)
                if kind == OptimizerKind.ZO_MUON:
                    x, buffer = step_zo_muon(x, problem, oracle, directions, gamma, cfg.ns_steps, sample)
                elif kind == OptimizerKind.ZO_SGD:
                    x, buffer = step_zo_sgd(x, problem, oracle, directions, gamma, sample)
                else:
                    x, buffer = step_zo_signsgd(x, problem, oracle, directions, gamma, sample)
                estimate = buffer

            if not np.all(np.isfinite(x)):
                raise DomainError("iterate became non-finite")
            scalars = live_scalars(x, buffer)
            if scalars != expected_scalars:
                raise ZooptError(f"live state holds {scalars} scalars, expected {expected_scalars}")

            # the estimate of step t was formed at x^{t-1}, where grad was evaluated
            momentum_err_sq[t - 1] = math.nan if grad is None else float(np.sum((estimate - grad) ** 2))
            f_value[t - 1], grad_norm[t - 1], grad = metrics.at(x)
            oracle_calls[t - 1] = oracle.eval_counter
        except RunFailure:
            raise
        except Exception as e:
            raise RunFailure(t, e) from e

        if t == selected:
            selected_point = x

    logger.info("finished %s on %s: %d oracle calls", kind.value, problem.name, oracle.eval_counter)
    return RunTrace(
        optimizer=kind,
        problem_name=problem.name,
        shape=problem.shape,
        config=cfg,
        oracle=oracle_config,
        t=np.arange(1, T + 1),
        f_value=f_value,
        grad_norm=grad_norm,
        momentum_err_sq=momentum_err_sq,
        oracle_calls=oracle_calls,
        selected_iterate_index=selected,
        final_point=x,
        selected_point=selected_point,
        initial_f=initial_f,
        initial_grad_norm=initial_norm,
        initial_grad_sq=initial_grad_sq,
        grad_norm_kind="s1" if kind.is_matrix else "l1",
        left_certified_box=metrics.left_box,
        diagnostic_evaluations=metrics.evaluations,
        persisted_scalars=expected_scalars,
    )
