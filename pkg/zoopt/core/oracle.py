"""
Zero-order oracle: noisy stochastic evaluations and two-point differences.

Every evaluation returns f(x, xi) + eta with |eta| <= delta. The oracle owns its
noise generator and call counter, so each run must own its oracle.
"""
import logging
import math

import numpy as np

from ..errors import ConfigurationError, DomainError
from .models import Array, NoiseKind, OracleConfig
from .problems import Problem

logger = logging.getLogger(__name__)

Direction = int | tuple[int, int] | Array


class StochasticOracle:
    """
    Attributes:
        config (OracleConfig): tau, delta and noise model
        eval_counter (int): single-point evaluations consumed so far
        max_abs_noise (float): largest corruption emitted so far
    """

    def __init__(self, config: OracleConfig, rng: np.random.Generator | None = None) -> None:
        if config.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {config.tau}")
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.eval_counter = 0
        self.max_abs_noise = 0.0

    def _corrupt(self, value: float) -> float:
        delta = self.config.delta
        if delta == 0.0 or self.config.noise_kind == NoiseKind.NONE:
            return value

        if self.config.noise_kind == NoiseKind.UNIFORM_BOUNDED:
            noisy = value + float(self.rng.uniform(-delta, delta))
        else:
            # decimal grid of pitch 10^floor(log10 delta) <= delta, rounding error at most pitch / 2
            pitch = 10.0 ** math.floor(math.log10(delta))
            noisy = pitch * float(np.round(value / pitch))

        self.max_abs_noise = max(self.max_abs_noise, abs(noisy - value))
        return noisy

    def evaluate(self, problem: Problem, x: Array, sample: int) -> float:
        """
        Noisy f(x, xi_sample).

        Raises:
            DomainError: if x has the wrong shape or the sample id is invalid
        """
        value = problem.sample_value(x, sample)
        self.eval_counter += 1
        return self._corrupt(value)

    def _perturbations(self, x: Array, direction: Direction) -> tuple[Array, Array]:
        tau = self.config.tau
        plus = np.array(x, dtype=np.float64, copy=True)
        minus = plus.copy()

        if isinstance(direction, np.ndarray):
            if direction.shape != plus.shape:
                raise DomainError(f"direction has shape {direction.shape}, point has {plus.shape}")
            if not np.any(direction):
                raise DomainError("direction must be nonzero")
            plus += tau * direction
            minus -= tau * direction
        else:
            # one-hot index: int for vectors, (i, j) for matrices
            if np.any(np.asarray(direction) < 0):
                raise DomainError(f"invalid coordinate {direction!r} for shape {plus.shape}")
            try:
                plus[direction] += tau
                minus[direction] -= tau
            except (IndexError, TypeError) as e:
                raise DomainError(f"invalid coordinate {direction!r} for shape {plus.shape}") from e
            if plus[direction].ndim != 0:
                raise DomainError(f"coordinate {direction!r} does not address a single entry")

        return plus, minus

    def two_point_diff(self, problem: Problem, x: Array, direction: Direction, sample: int) -> float:
        """
        (f(x + tau e, xi) - f(x - tau e, xi)) / (2 tau) with the same sample for both points.

        The two evaluations draw independent noise.
        """
        tau = self.config.tau
        if tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {tau}")

        plus, minus = self._perturbations(x, direction)
        return (self.evaluate(problem, plus, sample) - self.evaluate(problem, minus, sample)) / (2.0 * tau)
