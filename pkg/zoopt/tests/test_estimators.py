import numpy as np
import pytest
from pydantic import ValidationError

from ..core.estimators import (
    JaguarState,
    full_coordinate_estimate,
    gaussian_estimate,
    init_jaguar_state,
    jaguar_update,
    sample_coordinate,
)
from ..core.models import CoordinateMode, OracleConfig
from ..core.oracle import StochasticOracle
from ..core.problems import QuadraticProblem, make_function_problem, make_quadratic
from ..errors import DomainError
from .helpers import half_norm_problem


def test_init_state_is_zero() -> None:
    state = init_jaguar_state((4, 3), beta=0.9)

    assert state.m.shape == (4, 3)
    assert not np.any(state.m)
    assert state.persisted_scalars() == 13


def test_init_state_rejects_bad_beta() -> None:
    with pytest.raises(DomainError):
        init_jaguar_state((2,), beta=1.5)


def test_update_beta_zero_copies_difference(half_norm: QuadraticProblem) -> None:
    state = JaguarState(m=np.array([7.0, -5.0]), beta=0.0)
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    new = jaguar_update(state, half_norm, np.array([3.0, 4.0]), oracle, np.random.default_rng(0), coordinate=0)

    assert new.m[0] == pytest.approx(3.0)
    assert new.m[1] == -5.0, "untouched coordinates keep their value"
    assert new.t == 1
    assert new.last_coord == 0


def test_update_beta_one_keeps_momentum(half_norm: QuadraticProblem) -> None:
    state = JaguarState(m=np.array([1.0, 2.0]), beta=1.0)
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    new = jaguar_update(state, half_norm, np.array([3.0, 4.0]), oracle, np.random.default_rng(0))

    np.testing.assert_array_equal(new.m, [1.0, 2.0])


def test_update_convex_combination(half_norm: QuadraticProblem) -> None:
    state = JaguarState(m=np.array([1.0, 1.0]), beta=0.5)
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    new = jaguar_update(state, half_norm, np.array([3.0, 0.0]), oracle, np.random.default_rng(0), coordinate=0)

    np.testing.assert_allclose(new.m, [2.0, 1.0])
    assert new.diff == pytest.approx(3.0)


def test_update_does_not_mutate_input(half_norm: QuadraticProblem) -> None:
    state = init_jaguar_state((2,), beta=0.0)
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    jaguar_update(state, half_norm, np.array([1.0, 1.0]), oracle, np.random.default_rng(0))

    assert not np.any(state.m)


def test_update_changes_at_most_one_entry() -> None:
    problem = make_quadratic(6, sigma=0.5, seed=1)
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    rng = np.random.default_rng(2)
    state = init_jaguar_state((6,), beta=0.7)
    x = problem.initial_point()

    for _ in range(50):
        new = jaguar_update(state, problem, x, oracle, rng)
        assert np.count_nonzero(new.m - state.m) <= 1
        state = new


def test_update_matrix_entry() -> None:
    problem = make_function_problem(lambda x: float(np.sum(x * x)) / 2.0, (3, 2))
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    state = init_jaguar_state((3, 2), beta=0.0)
    x = np.arange(6.0).reshape(3, 2)

    new = jaguar_update(state, problem, x, oracle, np.random.default_rng(0), coordinate=(2, 1))

    expected = np.zeros((3, 2))
    expected[2, 1] = 5.0
    np.testing.assert_allclose(new.m, expected, atol=1e-12)
    assert new.last_coord == (2, 1)


def test_update_shape_mismatch(half_norm: QuadraticProblem) -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    with pytest.raises(DomainError):
        jaguar_update(init_jaguar_state((3,), 0.5), half_norm, np.zeros(2), oracle, np.random.default_rng(0))


def test_sample_coordinate_modes() -> None:
    rng = np.random.default_rng(0)

    assert all(0 <= sample_coordinate((5,), rng) < 5 for _ in range(100))
    pairs = {sample_coordinate((2, 3), rng) for _ in range(200)}
    assert pairs == {(i, j) for i in range(2) for j in range(3)}, "every matrix entry should be reachable"
    assert [sample_coordinate((3,), rng, CoordinateMode.CYCLIC, t) for t in range(4)] == [0, 1, 2, 0]


def test_beta_zero_matches_full_coordinate_slice() -> None:
    problem = make_quadratic(4, sigma=0.3, seed=5)
    x = problem.initial_point()
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    full = full_coordinate_estimate(problem, x, oracle, np.random.default_rng(0), sample=3)

    for i in range(4):
        state = jaguar_update(init_jaguar_state((4,), 0.0), problem, x, oracle, np.random.default_rng(0), i, 3)
        assert state.m[i] == full[i]


def test_coordinate_enumeration_reconstructs_full_estimate() -> None:
    problem = make_quadratic(3, condition_number=3.0, seed=2)
    x = problem.initial_point()
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    full = full_coordinate_estimate(problem, x, oracle, np.random.default_rng(0), sample=0)

    average = np.zeros(3)
    for i in range(3):
        state = jaguar_update(init_jaguar_state((3,), 0.0), problem, x, oracle, np.random.default_rng(0), i, 0)
        average += state.m / 3

    np.testing.assert_allclose(3 * average, full, rtol=1e-12)


@pytest.mark.parametrize("d", [2, 16, 64])
@pytest.mark.parametrize("tau", [1e-3, 1e-1])
def test_full_coordinate_exact_on_quadratic(d: int, tau: float) -> None:
    problem = make_quadratic(d, condition_number=10.0, seed=d)
    x = problem.initial_point()
    oracle = StochasticOracle(OracleConfig(tau=tau))

    estimate = full_coordinate_estimate(problem, x, oracle, np.random.default_rng(0))
    grad = problem.exact_gradient(x)

    assert np.linalg.norm(estimate - grad) <= 1e-10 * np.linalg.norm(grad)
    assert oracle.eval_counter == 2 * d


def test_full_coordinate_constant_and_l1() -> None:
    oracle = StochasticOracle(OracleConfig(tau=0.1))
    constant = make_function_problem(lambda x: 1.0, (3,))
    l1 = make_function_problem(lambda x: float(np.sum(np.abs(x))), (3,))

    np.testing.assert_array_equal(full_coordinate_estimate(constant, np.ones(3), oracle, np.random.default_rng(0)), 0.0)
    np.testing.assert_allclose(
        full_coordinate_estimate(l1, np.array([0.5, 1.0, 2.0]), oracle, np.random.default_rng(0)), 1.0
    )


def test_gaussian_estimate_constant_is_zero() -> None:
    problem = make_function_problem(lambda x: 2.0, (3, 2))
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    np.testing.assert_array_equal(gaussian_estimate(problem, np.zeros((3, 2)), oracle, np.random.default_rng(0)), 0.0)


def test_gaussian_estimate_linear_is_exact() -> None:
    c = np.array([[1.0, -1.0], [2.0, 0.5], [0.0, 3.0]])
    problem = make_function_problem(lambda x: float(np.sum(c * x)), (3, 2))
    oracle = StochasticOracle(OracleConfig(tau=0.1))

    estimate = gaussian_estimate(problem, np.ones((3, 2)), oracle, np.random.default_rng(5), sample=0)
    direction = np.random.default_rng(5).standard_normal((3, 2))

    np.testing.assert_allclose(estimate, np.sum(c * direction) * direction, rtol=1e-9, atol=1e-12)


def test_gaussian_estimate_is_unbiased_on_quadratic() -> None:
    problem = half_norm_problem(3)
    x = np.array([1.0, -2.0, 0.5])
    oracle = StochasticOracle(OracleConfig(tau=1e-2))
    rng = np.random.default_rng(11)
    draws = 20_000

    mean = sum(gaussian_estimate(problem, x, oracle, rng) for _ in range(draws)) / draws

    assert np.linalg.norm(mean - x) <= 5.0 * np.linalg.norm(x) * 2.0 / np.sqrt(draws)


def test_state_rejects_malformed_coordinate() -> None:
    with pytest.raises(ValidationError):
        JaguarState(m=np.zeros(2), beta=0.5, last_coord="first")
