"""
Zero-order gradient estimators built on the two-point oracle difference.
"""
import numpy as np

from ..errors import DomainError
from .models import Array, ArrayModel, CoordinateMode, Shape
from .oracle import StochasticOracle
from .problems import Problem

Coordinate = int | tuple[int, int]


class JaguarState(ArrayModel):
    """
    Coordinate momentum buffer.

    Attributes:
        m: momentum, same shape as the optimization variable, starts at zero
        t: number of updates applied so far
        beta: momentum in [0, 1]
        last_coord: coordinate touched by the latest update
        diff: latest scalar two-point difference (the one extra persisted scalar)
    """

    m: np.ndarray
    t: int = 0
    beta: float
    last_coord: Coordinate | None = None
    diff: float = 0.0

    def persisted_scalars(self) -> int:
        return int(self.m.size) + 1


def init_jaguar_state(shape: Shape, beta: float) -> JaguarState:
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    return JaguarState(m=np.zeros(shape), beta=beta)


def sample_coordinate(
    shape: Shape,
    rng: np.random.Generator,
    mode: CoordinateMode = CoordinateMode.UNIFORM,
    t: int = 0,
) -> Coordinate:
    """Uniform with replacement; a matrix entry is two independent uniform draws."""
    if mode == CoordinateMode.CYCLIC:
        index = np.unravel_index(t % int(np.prod(shape)), shape)
        return int(index[0]) if len(shape) == 1 else (int(index[0]), int(index[1]))

    if len(shape) == 1:
        return int(rng.integers(shape[0]))
    return int(rng.integers(shape[0])), int(rng.integers(shape[1]))


def jaguar_update(
    state: JaguarState,
    problem: Problem,
    x: Array,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    coordinate: Coordinate | None = None,
    sample: int | None = None,
    mode: CoordinateMode = CoordinateMode.UNIFORM,
) -> JaguarState:
    """
    One coordinate momentum update m_i <- beta m_i + (1 - beta) diff_i.

    Args:
        state: current buffer, shape must match ``x``
        problem: objective reached only through ``oracle``
        x: current point
        oracle: two-point oracle of the run
        rng: coordinate and sample stream
        coordinate: force the coordinate instead of sampling it
        sample: force the sample id instead of sampling it

    Returns:
        new state with a single entry of m changed and t incremented
    """
    if state.m.shape != np.shape(x):
        raise DomainError(f"momentum has shape {state.m.shape}, point has {np.shape(x)}")

    if coordinate is None:
        coordinate = sample_coordinate(state.m.shape, rng, mode, state.t)
    if sample is None:
        sample = problem.draw_sample(rng)

    diff = oracle.two_point_diff(problem, x, coordinate, sample)
    m = state.m.copy()
    m[coordinate] = state.beta * m[coordinate] + (1.0 - state.beta) * diff
    return JaguarState(m=m, t=state.t + 1, beta=state.beta, last_coord=coordinate, diff=diff)


def gaussian_estimate(
    problem: Problem,
    x: Array,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    sample: int | None = None,
) -> Array:
    """G = (f(x + tau E) - f(x - tau E)) / (2 tau) * E with E standard normal."""
    if sample is None:
        sample = problem.draw_sample(rng)
    direction = rng.standard_normal(problem.shape)
    return oracle.two_point_diff(problem, x, direction, sample) * direction


def full_coordinate_estimate(
    problem: Problem,
    x: Array,
    oracle: StochasticOracle,
    rng: np.random.Generator,
    sample: int | None = None,
) -> Array:
    """Two-point differences along every basis direction with one shared sample (2 * size calls)."""
    if sample is None:
        sample = problem.draw_sample(rng)

    estimate = np.zeros(problem.shape)
    for index in np.ndindex(*problem.shape):
        coordinate = index[0] if len(index) == 1 else index
        estimate[index] = oracle.two_point_diff(problem, x, coordinate, sample)
    return estimate
