import logging
import math

import numpy as np
import pytest

from ..core.estimators import JaguarState, init_jaguar_state
from ..core.linalg import newton_schulz
from ..core.models import CoordinateMode, OptimizerConfig, OptimizerKind, OracleConfig, TuningPreset
from ..core.optimizers import (
    param_count,
    resolve_tuning,
    run,
    step_jaguar_muon,
    step_jaguar_signsgd,
    step_zo_muon,
    step_zo_sgd,
    step_zo_signsgd,
)
from ..core.oracle import StochasticOracle
from ..core.problems import (
    QuadraticProblem,
    make_function_problem,
    make_matrix_regression,
    make_quadratic,
    make_rosenbrock,
)
from ..errors import ConfigurationError, RunFailure, UnsupportedProblemError


def test_jaguar_signsgd_hand_trace(half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    state = init_jaguar_state((2,), beta=0.0)

    x, state = step_jaguar_signsgd(
        np.array([1.0, -1.0]), state, half_norm, oracle, np.random.default_rng(0), gamma=0.1, coordinate=0, sample=0
    )

    np.testing.assert_allclose(state.m, [1.0, 0.0])
    np.testing.assert_allclose(x, [0.9, -1.0])


def test_jaguar_signsgd_zero_step_keeps_point() -> None:
    problem = make_quadratic(3, sigma=0.5, seed=1)
    trace = run(OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(T=20, gamma=0.0, beta=0.5))

    np.testing.assert_array_equal(trace.final_point, problem.initial_point())
    np.testing.assert_allclose(trace.f_value, trace.initial_f)


def test_jaguar_signsgd_frozen_momentum() -> None:
    problem = make_quadratic(3, seed=2)
    trace = run(OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(T=10, gamma=0.1, beta=1.0))

    np.testing.assert_array_equal(trace.final_point, problem.initial_point())
    np.testing.assert_allclose(trace.momentum_err_sq, trace.initial_grad_sq)


def test_jaguar_signsgd_step_moves_by_gamma() -> None:
    problem = make_quadratic(5, sigma=0.5, seed=3)
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    rng = np.random.default_rng(0)
    state = init_jaguar_state((5,), beta=0.5)
    x = problem.initial_point()

    for _ in range(30):
        new_x, state = step_jaguar_signsgd(x, state, problem, oracle, rng, gamma=0.05)
        moved = np.abs(new_x - x)
        assert np.all(np.isclose(moved, 0.0) | np.isclose(moved, 0.05))
        x = new_x


def test_jaguar_muon_one_by_one() -> None:
    problem = make_function_problem(lambda x: 0.5 * float(x[0, 0] ** 2), (1, 1))
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    x, state = step_jaguar_muon(
        np.array([[2.0]]),
        init_jaguar_state((1, 1), 0.0),
        problem,
        oracle,
        np.random.default_rng(0),
        gamma=0.1,
        coordinate=(0, 0),
        sample=0,
    )

    assert state.m[0, 0] == pytest.approx(2.0)
    assert x[0, 0] == pytest.approx(1.9)


def test_jaguar_muon_skips_zero_momentum() -> None:
    problem = make_matrix_regression(3, 2, seed=0)
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    x = np.ones((3, 2))

    new_x, state = step_jaguar_muon(x, init_jaguar_state((3, 2), 1.0), problem, oracle, np.random.default_rng(0), 0.1)

    np.testing.assert_array_equal(new_x, x)
    assert not np.any(state.m)


def test_jaguar_muon_rejects_vectors(half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    state = JaguarState(m=np.zeros(2), beta=0.5)

    with pytest.raises(UnsupportedProblemError):
        step_jaguar_muon(np.zeros(2), state, half_norm, oracle, np.random.default_rng(0), 0.1)


def test_zo_muon_constant_function_does_not_move() -> None:
    problem = make_function_problem(lambda x: 3.0, (2, 2))
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    x = np.arange(4.0).reshape(2, 2)

    new_x, estimate = step_zo_muon(x, problem, oracle, np.random.default_rng(0), gamma=1.0)

    np.testing.assert_array_equal(new_x, x)
    assert not np.any(estimate)


@pytest.mark.parametrize("step", [step_zo_sgd, step_zo_signsgd])
def test_gaussian_baselines_zero_step(step, half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    x = np.array([0.5, -2.0])

    new_x, estimate = step(x, half_norm, oracle, np.random.default_rng(0), gamma=0.0)

    np.testing.assert_array_equal(new_x, x)
    assert estimate.shape == (2,)
    assert oracle.eval_counter == 2


def test_zo_signsgd_moves_every_coordinate(half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    x = np.array([0.5, -2.0])

    new_x, _ = step_zo_signsgd(x, half_norm, oracle, np.random.default_rng(0), gamma=0.25)

    np.testing.assert_allclose(np.abs(new_x - x), 0.25)


def test_run_single_iteration() -> None:
    trace = run(OptimizerKind.JAGUAR_SIGNSGD, make_quadratic(2), OptimizerConfig(T=1))

    assert trace.T == 1
    assert trace.selected_iterate_index == 1
    assert list(trace.oracle_calls) == [2]


@pytest.mark.parametrize("kind", [OptimizerKind.JAGUAR_SIGNSGD, OptimizerKind.ZO_SGD, OptimizerKind.ZO_SIGNSGD])
def test_run_rows_on_vector_problem(kind: OptimizerKind) -> None:
    problem = make_quadratic(4, condition_number=3.0, sigma=0.2, seed=5)
    trace = run(kind, problem, OptimizerConfig(T=50, gamma=1e-2, beta=0.9, seed=3))

    np.testing.assert_array_equal(trace.t, np.arange(1, 51))
    np.testing.assert_array_equal(trace.oracle_calls, 2 * np.arange(1, 51))
    assert 1 <= trace.selected_iterate_index <= 50
    assert trace.selected_grad_norm() == trace.grad_norm[trace.selected_iterate_index - 1]
    assert trace.grad_norm_kind == "l1"
    assert trace.diagnostic_evaluations == 2 * 51
    assert np.all(trace.momentum_err_sq >= 0)


@pytest.mark.parametrize("kind", [OptimizerKind.JAGUAR_MUON, OptimizerKind.ZO_MUON])
def test_run_muon_methods(kind: OptimizerKind) -> None:
    problem = make_matrix_regression(4, 3, rank=2, sigma=0.1, seed=1)
    trace = run(kind, problem, OptimizerConfig(T=40, gamma=1e-2, beta=0.8))

    assert trace.grad_norm_kind == "s1"
    assert trace.final_point.shape == (4, 3)
    assert trace.persisted_scalars == param_count(kind, (4, 3))
    assert np.all(np.isfinite(trace.grad_norm))


def test_run_is_deterministic() -> None:
    problem = make_quadratic(3, sigma=0.5, seed=7)
    config = OptimizerConfig(T=30, gamma=1e-2, beta=0.9, seed=4)

    first = run(OptimizerKind.JAGUAR_SIGNSGD, problem, config, delta=1e-4, noise_kind="uniform_bounded")
    second = run(OptimizerKind.JAGUAR_SIGNSGD, problem, config, delta=1e-4, noise_kind="uniform_bounded")
    other = run(OptimizerKind.JAGUAR_SIGNSGD, problem, config.model_copy(update={"seed": 5}), delta=1e-4)

    np.testing.assert_array_equal(first.f_value, second.f_value)
    np.testing.assert_array_equal(first.final_point, second.final_point)
    assert first.selected_iterate_index == second.selected_iterate_index
    assert not np.array_equal(first.final_point, other.final_point)


def test_run_cyclic_warmup_descends() -> None:
    d = 4
    problem = make_quadratic(d, rotate=False)
    config = OptimizerConfig(
        T=d + 10, gamma=0.1 / (problem.L * d), beta=0.0, coordinate_mode=CoordinateMode.CYCLIC
    )

    trace = run(OptimizerKind.JAGUAR_SIGNSGD, problem, config, x0=problem.x_star + 1.0)

    values = [trace.initial_f, *trace.f_value]
    assert all(b < a for a, b in zip(values, values[1:])), "every step should decrease f"


def test_run_muon_on_vector_problem(half_norm: QuadraticProblem) -> None:
    with pytest.raises(UnsupportedProblemError):
        run(OptimizerKind.JAGUAR_MUON, half_norm, OptimizerConfig(T=5))


def test_run_failure_carries_iteration() -> None:
    calls = {"n": 0}

    def fragile(x: np.ndarray) -> float:
        calls["n"] += 1
        if calls["n"] == 6:
            raise RuntimeError("evaluation failed")
        return float(np.sum(x * x))

    problem = make_function_problem(fragile, (2,))

    with pytest.raises(RunFailure) as error:
        run(OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(T=5))

    assert error.value.iteration == 2
    assert isinstance(error.value.cause, RuntimeError)


def test_run_without_gradient_has_no_momentum_error() -> None:
    problem = make_function_problem(lambda x: float(np.sum(x * x)), (2,), x0=np.ones(2))
    trace = run(OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(T=5))

    assert not trace.has_momentum_error
    assert np.all(np.isnan(trace.grad_norm))
    assert trace.diagnostic_evaluations == 6


def test_run_clips_metrics_outside_box(caplog: pytest.LogCaptureFixture) -> None:
    problem = make_rosenbrock(2)
    config = OptimizerConfig(T=3, gamma=0.5, beta=0.0, coordinate_mode=CoordinateMode.CYCLIC)

    with caplog.at_level(logging.WARNING):
        trace = run(OptimizerKind.JAGUAR_SIGNSGD, problem, config, x0=np.full(2, 1.9))

    assert trace.left_certified_box
    assert trace.final_point[1] > 2.0
    assert sum("certified box" in r.message for r in caplog.records) == 1


@pytest.mark.parametrize(
    "kind, shape, expected",
    [
        (OptimizerKind.JAGUAR_SIGNSGD, (10,), 21),
        (OptimizerKind.JAGUAR_MUON, (3, 4), 25),
        (OptimizerKind.ZO_SGD, (10,), 20),
        (OptimizerKind.ZO_MUON, (3, 4), 24),
    ],
)
def test_param_count(kind: OptimizerKind, shape: tuple[int, ...], expected: int) -> None:
    assert param_count(kind, shape) == expected


def test_manual_preset_is_untouched() -> None:
    config = OptimizerConfig(gamma=0.3, beta=0.2)

    assert resolve_tuning(OptimizerKind.JAGUAR_SIGNSGD, make_quadratic(2), config, delta=1e-3) is config


def test_arbitrary_preset() -> None:
    problem = make_quadratic(4)
    config = OptimizerConfig(T=10_000, tuning_preset=TuningPreset.ARBITRARY)

    resolved = resolve_tuning(OptimizerKind.JAGUAR_SIGNSGD, problem, config, delta=1e-4)

    assert resolved.gamma == pytest.approx(2.5e-4)
    assert resolved.beta == pytest.approx(0.99)
    assert resolved.tau == pytest.approx(1e-2)


def test_optimal_preset_noiseless() -> None:
    problem = make_quadratic(4, seed=1)
    config = OptimizerConfig(T=400, tau=0.05, tuning_preset=TuningPreset.OPTIMAL)
    gap = problem.value(problem.initial_point()) - problem.f_star

    resolved = resolve_tuning(OptimizerKind.JAGUAR_SIGNSGD, problem, config)

    assert resolved.beta == 0.0
    assert resolved.gamma == pytest.approx(math.sqrt(gap / (16.0 * 400)))
    assert resolved.tau == 0.05


def test_optimal_preset_with_noise() -> None:
    problem = make_quadratic(2, sigma=1.0, seed=2)
    T = 1_000_000
    gap = problem.value(problem.initial_point()) - problem.f_star

    resolved = resolve_tuning(
        OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(T=T, tuning_preset=TuningPreset.OPTIMAL)
    )

    assert 1.0 - resolved.beta == pytest.approx(math.sqrt(gap / T))
    assert resolved.gamma == pytest.approx(math.sqrt(gap * (1.0 - resolved.beta) / (4.0 * T)))


def test_optimal_preset_matrix_factor() -> None:
    problem = make_matrix_regression(2, 4, seed=0)
    config = OptimizerConfig(T=100, tuning_preset=TuningPreset.OPTIMAL)
    gap = problem.value(problem.initial_point()) - problem.f_star

    resolved = resolve_tuning(OptimizerKind.JAGUAR_MUON, problem, config)

    assert resolved.gamma == pytest.approx(math.sqrt(gap / (4**1.5 * 2**2 * problem.L * 100)))


def test_optimal_preset_needs_initial_gap() -> None:
    problem = make_function_problem(lambda x: float(np.sum(x * x)), (2,))

    with pytest.raises(ConfigurationError):
        resolve_tuning(OptimizerKind.JAGUAR_SIGNSGD, problem, OptimizerConfig(tuning_preset=TuningPreset.OPTIMAL))


def test_optimal_preset_uses_gap_estimate(caplog: pytest.LogCaptureFixture) -> None:
    problem = make_function_problem(lambda x: float(np.sum(x * x)), (2,))
    config = OptimizerConfig(T=100, tuning_preset=TuningPreset.OPTIMAL, delta0_estimate=2.0)

    with caplog.at_level(logging.WARNING):
        resolved = resolve_tuning(OptimizerKind.JAGUAR_SIGNSGD, problem, config)

    assert resolved.gamma == pytest.approx(math.sqrt(2.0 / (4.0 * 100)))
    assert "delta0_estimate" in caplog.text


def test_step_size_schedules() -> None:
    decayed = OptimizerConfig(gamma=1.0, T=4, linear_decay=True)
    constant = OptimizerConfig(gamma=0.3, T=4)

    assert [decayed.step_size(t) for t in range(4)] == [1.0, 0.75, 0.5, 0.25]
    assert decayed.schedule == "linear_decay"
    assert [constant.step_size(t) for t in range(4)] == [0.3] * 4
    assert constant.schedule == "constant"


def test_run_linear_decay_hand_trace(half_norm: QuadraticProblem) -> None:
    config = OptimizerConfig(
        T=4, gamma=0.1, beta=0.0, tau=0.1, linear_decay=True, coordinate_mode=CoordinateMode.CYCLIC
    )

    trace = run(OptimizerKind.JAGUAR_SIGNSGD, half_norm, config, x0=np.ones(2))

    # steps 0.1, 0.075, 0.05, 0.025 with the buffer touched on coordinates 0, 1, 0, 1
    np.testing.assert_allclose(trace.final_point, [0.75, 0.85])


def test_jaguar_muon_step_length_bounded_by_polar_factor() -> None:
    problem = make_matrix_regression(3, 2, rank=2, sigma=0.2, seed=4)
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    rng = np.random.default_rng(1)
    state = init_jaguar_state((3, 2), beta=0.7)
    x = problem.initial_point()
    gamma = 0.05

    for _ in range(20):
        new_x, state = step_jaguar_muon(x, state, problem, oracle, rng, gamma)
        residual = newton_schulz(state.m, 5).residual
        assert np.linalg.norm(new_x - x, "fro") <= gamma * np.sqrt(2) * (1.0 + residual) + 1e-12
        x = new_x


def _scalar_newton_schulz(s: float, steps: int) -> float:
    for _ in range(steps):
        s = 1.5 * s - 0.5 * s**3
    return s


def test_jaguar_muon_two_step_hand_trace() -> None:
    problem = make_function_problem(lambda x: 0.5 * float(np.sum(x * x)), (2, 2))
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    rng = np.random.default_rng(0)
    state = init_jaguar_state((2, 2), beta=0.5)
    x = np.diag([2.0, 1.0])

    x, state = step_jaguar_muon(x, state, problem, oracle, rng, 0.1, coordinate=(0, 0), sample=0)

    np.testing.assert_allclose(state.m, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(x, np.diag([1.9, 1.0]))

    x, state = step_jaguar_muon(x, state, problem, oracle, rng, 0.1, coordinate=(1, 1), sample=0)

    norm = np.sqrt(1.25)
    polar = np.diag([_scalar_newton_schulz(1.0 / norm, 5), _scalar_newton_schulz(0.5 / norm, 5)])
    np.testing.assert_allclose(state.m, np.diag([1.0, 0.5]))
    np.testing.assert_allclose(x, np.diag([1.9, 1.0]) - 0.1 * polar, atol=1e-10)
    np.testing.assert_allclose(x, np.diag([1.8, 0.9]), atol=1e-4)


def test_zo_muon_replays_direction_on_linear_function() -> None:
    c = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]])
    problem = make_function_problem(lambda x: float(np.sum(c * x)), (2, 3))
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    x = np.zeros((2, 3))

    new_x, estimate = step_zo_muon(x, problem, oracle, np.random.default_rng(3), gamma=0.2, sample=0)

    direction = np.random.default_rng(3).standard_normal((2, 3))
    slope = float(np.sum(c * direction))
    np.testing.assert_allclose(estimate, slope * direction, rtol=1e-9)
    # rank one, so the polar factor is the normalized estimate
    unit = np.sign(slope) * direction / np.linalg.norm(direction, "fro")
    np.testing.assert_allclose(new_x, x - 0.2 * unit, atol=1e-9)


@pytest.mark.parametrize("step", [step_zo_sgd, step_zo_signsgd])
def test_gaussian_baselines_replay_seed(step, half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    x = np.array([0.5, -2.0])

    new_x, estimate = step(x, half_norm, oracle, np.random.default_rng(9), gamma=0.1, sample=0)

    direction = np.random.default_rng(9).standard_normal(2)
    expected = float(x @ direction) * direction
    np.testing.assert_allclose(estimate, expected, rtol=1e-9)
    moved = expected if step is step_zo_sgd else np.sign(expected)
    np.testing.assert_allclose(new_x, x - 0.1 * moved, rtol=1e-9)
