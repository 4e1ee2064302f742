"""
Synthetic finite-sum objectives f(x) = mean_k f(x, xi_k) with certified constants.

Every problem knows its smoothness constant L, a bound sigma on the gradient
variance and, where available, f* and x*. Exact gradients exist for
diagnostics only; optimizers reach problems through the oracle.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Callable

import numpy as np
import scipy.linalg
from scipy.special import expit

from ..errors import ConfigurationError, DomainError, UnsupportedProblemError
from .models import Array, Shape

logger = logging.getLogger(__name__)

CERTIFICATION_POINTS = 100
# Gershgorin bound of the Rosenbrock Hessian on [-2, 2]^d
ROSENBROCK_BOX = (-2.0, 2.0)
ROSENBROCK_L = 1200.0 * 4.0 + 800.0 + 202.0 + 2.0 * 800.0


class Problem(ABC):
    """
    Abstract stochastic objective.

    Attributes:
        name (str): constructor name, e.g. "quadratic"
        shape (tuple): shape of the optimization variable, (d,) or (m, n)
        sample_count (int): number of stored samples xi
        L (float): smoothness constant, E[L(xi)^2] <= L^2
        sigma (float): bound on the gradient variance
        f_star (float | None): optimal value when known
        x_star (ndarray | None): a minimizer when known
        generator_seed (int): seed used to generate the data
        lipschitz_box (tuple | None): box outside which L is not certified
    """

    has_exact_gradient = True

    def __init__(
        self,
        name: str,
        shape: Shape,
        sample_count: int,
        L: float,
        sigma: float,
        x0: Array,
        f_star: float | None = None,
        x_star: Array | None = None,
        generator_seed: int = 0,
        lipschitz_box: tuple[float, float] | None = None,
        spec: dict[str, Any] | None = None,
    ) -> None:
        if sample_count < 1:
            raise DomainError("a problem needs at least one sample")
        self.name = name
        self.shape = tuple(int(s) for s in shape)
        self.sample_count = sample_count
        self.L = float(L)
        self.sigma = float(sigma)
        self.f_star = f_star
        self.x_star = x_star
        self.generator_seed = generator_seed
        self.lipschitz_box = lipschitz_box
        self.spec = spec or {"kind": name}
        self._x0 = np.asarray(x0, dtype=np.float64).reshape(self.shape)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_matrix(self) -> bool:
        return len(self.shape) == 2

    def check_point(self, x: Array) -> Array:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise DomainError(f"point has shape {x.shape}, problem expects {self.shape}")
        return x

    def check_sample(self, sample: int) -> int:
        if isinstance(sample, bool) or not isinstance(sample, (int, np.integer)):
            raise DomainError(f"sample id must be an integer, got {sample!r}")
        if not 0 <= sample < self.sample_count:
            raise DomainError(f"sample id {sample} outside [0, {self.sample_count})")
        return int(sample)

    def draw_sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.sample_count))

    def initial_point(self) -> Array:
        return self._x0.copy()

    def sample_value(self, x: Array, sample: int) -> float:
        """Noiseless f(x, xi_sample)."""
        return self._sample_value(self.check_point(x), self.check_sample(sample))

    def value(self, x: Array) -> float:
        """Noiseless full objective f(x)."""
        return self._value(self.check_point(x))

    def sample_gradient(self, x: Array, sample: int) -> Array:
        return self._sample_gradients(self.check_point(x))[self.check_sample(sample)]

    def exact_gradient(self, x: Array) -> Array:
        """Full-batch gradient. Never called by optimizers."""
        return self._gradient(self.check_point(x))

    def sample_lipschitz(self, sample: int) -> float:
        self.check_sample(sample)
        return self.L

    def gradient_variance(self, x: Array) -> float:
        grads = self._sample_gradients(self.check_point(x))
        centred = grads - grads.mean(axis=0)
        return float(np.mean(np.sum(centred.reshape(self.sample_count, -1) ** 2, axis=1)))

    def in_certified_box(self, x: Array) -> bool:
        if self.lipschitz_box is None:
            return True
        low, high = self.lipschitz_box
        return bool(np.all((x >= low) & (x <= high)))

    def clip_to_box(self, x: Array) -> Array:
        if self.lipschitz_box is None:
            return x
        return np.clip(x, *self.lipschitz_box)

    def describe(self) -> dict[str, Any]:
        return {
            **self.spec,
            "shape": list(self.shape),
            "L": self.L,
            "sigma": self.sigma,
            "f_star": self.f_star,
            "sample_count": self.sample_count,
        }

    def _value(self, x: Array) -> float:
        return float(np.mean([self._sample_value(x, k) for k in range(self.sample_count)]))

    def _gradient(self, x: Array) -> Array:
        return self._sample_gradients(x).mean(axis=0)

    @abstractmethod
    def _sample_value(self, x: Array, sample: int) -> float:
        pass

    @abstractmethod
    def _sample_gradients(self, x: Array) -> Array:
        """Stacked per-sample gradients, shape (sample_count, *shape)."""


class QuadraticProblem(Problem):
    """
    f(x, xi_k) = 1/2 (x - b_k)^T A (x - b_k), optionally with asymmetric curvature.

    With asymmetry alpha > 0 the eigen-coordinate u_i = q_i^T (x - b_k) is
    weighted by lambda_i when u_i >= 0 and by (1 - alpha) lambda_i otherwise.
    The columns q_i come from ``basis`` when given. Otherwise they are the
    eigenvectors of the hessian, each signed so its largest-magnitude entry is
    positive.
    """

    def __init__(
        self,
        hessian: Array,
        centers: Array,
        asymmetry: float = 0.0,
        x0: Array | None = None,
        generator_seed: int = 0,
        spec: dict[str, Any] | None = None,
        basis: Array | None = None,
    ) -> None:
        hessian = np.atleast_2d(np.asarray(hessian, dtype=np.float64))
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        d = hessian.shape[0]
        if hessian.shape != (d, d) or centers.shape[1] != d:
            raise DomainError("hessian must be d x d and centers n x d")
        if not 0.0 <= asymmetry < 1.0:
            raise DomainError(f"asymmetry must lie in [0, 1), got {asymmetry}")

        if basis is None:
            eigenvalues, basis = _signed_eigh(hessian)
        else:
            basis = np.asarray(basis, dtype=np.float64)
            if basis.shape != (d, d) or not np.allclose(basis.T @ basis, np.eye(d)):
                raise DomainError("basis must be an orthogonal d x d matrix")
            eigenvalues = np.einsum("ij,ik,kj->j", basis, hessian, basis)
            if not np.allclose((basis * eigenvalues) @ basis.T, hessian):
                raise DomainError("basis does not diagonalise the hessian")
        if eigenvalues.min() <= 0:
            raise DomainError("hessian must be positive definite")

        self.hessian = hessian
        self.eigenvalues = eigenvalues
        self.basis = basis
        self.centers = centers
        self.asymmetry = float(asymmetry)
        center_mean = centers.mean(axis=0)
        shifts = centers - center_mean
        self._center_mean = center_mean
        self._offset = 0.5 * float(np.mean(np.einsum("ki,ij,kj->k", shifts, hessian, shifts)))

        sigma = float(np.sqrt(np.mean(np.sum((shifts @ hessian) ** 2, axis=1))))
        if self.asymmetry > 0 and sigma > 0:
            raise DomainError("asymmetric curvature requires identical samples (sigma = 0)")

        super().__init__(
            name="quadratic",
            shape=(d,),
            sample_count=centers.shape[0],
            L=float(eigenvalues.max()),
            sigma=sigma,
            x0=center_mean + 1.0 if x0 is None else x0,
            f_star=self._offset,
            x_star=center_mean.copy(),
            generator_seed=generator_seed,
            spec=spec,
        )

    def _weights(self, u: Array) -> Array:
        if self.asymmetry == 0.0:
            return np.broadcast_to(self.eigenvalues, u.shape)
        return self.eigenvalues * np.where(u >= 0.0, 1.0, 1.0 - self.asymmetry)

    def _sample_value(self, x: Array, sample: int) -> float:
        u = self.basis.T @ (x - self.centers[sample])
        return 0.5 * float(np.sum(self._weights(u) * u * u))

    def _value(self, x: Array) -> float:
        if self.asymmetry > 0:
            return super()._value(x)
        r = x - self._center_mean
        return 0.5 * float(r @ self.hessian @ r) + self._offset

    def _sample_gradients(self, x: Array) -> Array:
        u = (x - self.centers) @ self.basis
        return (self._weights(u) * u) @ self.basis.T

    def _gradient(self, x: Array) -> Array:
        if self.asymmetry > 0:
            return super()._gradient(x)
        return self.hessian @ (x - self._center_mean)


class LogisticProblem(Problem):
    """Binary logistic loss log(1 + exp(-y_k z_k^T w)) over stored features."""

    def __init__(
        self,
        features: Array,
        labels: Array,
        x0: Array | None = None,
        generator_seed: int = 0,
        spec: dict[str, Any] | None = None,
    ) -> None:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        n, d = features.shape
        self.features = features
        self.labels = labels
        self._sample_l = 0.25 * np.sum(features**2, axis=1)
        self.L_full = float(scipy.linalg.eigvalsh(0.25 * features.T @ features / n)[-1])

        super().__init__(
            name="logistic",
            shape=(d,),
            sample_count=n,
            L=max(self.L_full, float(np.sqrt(np.mean(self._sample_l**2)))),
            # ||grad f(w, xi_k)|| <= ||z_k||, a bound valid at every w
            sigma=float(np.sqrt(np.mean(np.sum(features**2, axis=1)))),
            x0=np.zeros(d) if x0 is None else x0,
            generator_seed=generator_seed,
            spec=spec,
        )

    def _margins(self, w: Array) -> Array:
        return self.labels * (self.features @ w)

    def _sample_value(self, x: Array, sample: int) -> float:
        margin = self.labels[sample] * float(self.features[sample] @ x)
        return float(np.logaddexp(0.0, -margin))

    def _value(self, x: Array) -> float:
        return float(np.mean(np.logaddexp(0.0, -self._margins(x))))

    def _sample_gradients(self, x: Array) -> Array:
        weights = -self.labels * expit(-self._margins(x))
        return weights[:, None] * self.features

    def _gradient(self, x: Array) -> Array:
        weights = -self.labels * expit(-self._margins(x))
        return self.features.T @ weights / self.sample_count

    def sample_lipschitz(self, sample: int) -> float:
        return float(self._sample_l[self.check_sample(sample)])


class RosenbrockProblem(Problem):
    """Deterministic Rosenbrock sum of 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2."""

    def __init__(self, x0: Array, generator_seed: int = 0, spec: dict[str, Any] | None = None) -> None:
        x0 = np.asarray(x0, dtype=np.float64)
        d = x0.shape[0]
        if d < 2:
            raise DomainError("Rosenbrock needs d >= 2")
        super().__init__(
            name="rosenbrock",
            shape=(d,),
            sample_count=1,
            L=ROSENBROCK_L,
            sigma=0.0,
            x0=x0,
            f_star=0.0,
            x_star=np.ones(d),
            generator_seed=generator_seed,
            lipschitz_box=ROSENBROCK_BOX,
            spec=spec,
        )

    def _sample_value(self, x: Array, sample: int) -> float:
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    def _value(self, x: Array) -> float:
        return self._sample_value(x, 0)

    def _sample_gradients(self, x: Array) -> Array:
        grad = np.zeros_like(x)
        inner = x[1:] - x[:-1] ** 2
        grad[:-1] += -400.0 * x[:-1] * inner - 2.0 * (1.0 - x[:-1])
        grad[1:] += 200.0 * inner
        return grad[None, :]


class MatrixRegressionProblem(Problem):
    """f(X, xi_k) = 1/2 ||A X - B_k||_F^2 with a shared design A."""

    def __init__(
        self,
        design: Array,
        targets: Array,
        x_star: Array | None = None,
        x0: Array | None = None,
        generator_seed: int = 0,
        spec: dict[str, Any] | None = None,
    ) -> None:
        design = np.atleast_2d(np.asarray(design, dtype=np.float64))
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim == 2:
            targets = targets[None]
        p, m = design.shape
        if targets.shape[1] != p:
            raise DomainError("targets must have as many rows as the design")
        n = targets.shape[2]

        self.design = design
        self.targets = targets
        self._gram = design.T @ design
        target_mean = targets.mean(axis=0)
        self._target_mean = target_mean
        self._rhs = design.T @ target_mean
        self._offset = 0.5 * float(np.mean(np.sum(targets**2, axis=(1, 2))))
        noise = design.T @ (targets - target_mean)
        sigma = float(np.sqrt(np.mean(np.sum(noise**2, axis=(1, 2)))))

        f_star = None
        if x_star is not None:
            f_star = 0.5 * float(np.mean(np.sum((design @ x_star - targets) ** 2, axis=(1, 2))))

        super().__init__(
            name="matrix_regression",
            shape=(m, n),
            sample_count=targets.shape[0],
            L=float(scipy.linalg.eigvalsh(self._gram)[-1]),
            sigma=sigma,
            x0=np.zeros((m, n)) if x0 is None else x0,
            f_star=f_star,
            x_star=x_star,
            generator_seed=generator_seed,
            spec=spec,
        )

    def _sample_value(self, x: Array, sample: int) -> float:
        r = self.design @ x - self.targets[sample]
        return 0.5 * float(np.sum(r * r))

    def _value(self, x: Array) -> float:
        ax = self.design @ x
        return 0.5 * float(np.sum(ax * ax)) - float(np.sum(ax * self._target_mean)) + self._offset

    def _sample_gradients(self, x: Array) -> Array:
        residuals = self.design @ x - self.targets
        return np.einsum("pm,kpn->kmn", self.design, residuals)

    def _gradient(self, x: Array) -> Array:
        return self._gram @ x - self._rhs


class FunctionProblem(Problem):
    """Single-sample wrapper around a plain callable."""

    def __init__(
        self,
        fn: Callable[[Array], float],
        shape: Shape,
        gradient: Callable[[Array], Array] | None = None,
        L: float = 1.0,
        f_star: float | None = None,
        x0: Array | None = None,
        name: str = "function",
    ) -> None:
        self._fn = fn
        self._grad = gradient
        self.has_exact_gradient = gradient is not None
        super().__init__(
            name=name,
            shape=shape,
            sample_count=1,
            L=L,
            sigma=0.0,
            x0=np.zeros(shape) if x0 is None else x0,
            f_star=f_star,
            spec={"kind": name},
        )

    def _sample_value(self, x: Array, sample: int) -> float:
        return float(self._fn(x))

    def _value(self, x: Array) -> float:
        return float(self._fn(x))

    def _sample_gradients(self, x: Array) -> Array:
        if self._grad is None:
            raise UnsupportedProblemError(f"problem {self.name!r} has no exact gradient")
        return np.asarray(self._grad(x), dtype=np.float64)[None]


def _random_orthogonal(rng: np.random.Generator, rows: int, cols: int) -> Array:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _signed_eigh(hessian: Array) -> tuple[Array, Array]:
    eigenvalues, basis = scipy.linalg.eigh(hessian)
    pivots = basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])]
    return eigenvalues, basis * np.where(pivots < 0, -1.0, 1.0)


def _calibrate(shifts: Array, operator: Callable[[Array], Array], sigma: float) -> Array:
    """Centre the shifts and rescale them so mean ||operator(shift)||^2 equals sigma^2."""
    shifts = shifts - shifts.mean(axis=0)
    if sigma == 0.0:
        return np.zeros_like(shifts)
    spread = float(np.mean([np.sum(operator(s) ** 2) for s in shifts]))
    return shifts * (sigma / np.sqrt(spread))


def make_quadratic(
    d: int,
    condition_number: float = 1.0,
    sigma: float = 0.0,
    seed: int = 0,
    L: float = 1.0,
    n_samples: int = 16,
    rotate: bool = True,
    asymmetry: float = 0.0,
    start_offset: float = 1.0,
) -> QuadraticProblem:
    """
    Quadratic with eigenvalues spread geometrically over [L / condition_number, L].

    Per-sample centres b_k are calibrated so the gradient variance equals
    sigma^2 at every point.
    """
    if d < 1 or condition_number < 1 or L <= 0 or sigma < 0:
        raise ConfigurationError("make_quadratic needs d >= 1, condition_number >= 1, L > 0, sigma >= 0")
    if sigma > 0 and n_samples < 2:
        raise ConfigurationError("a noisy quadratic needs at least two samples")

    rng = np.random.default_rng(seed)
    eigenvalues = L * np.geomspace(1.0 / condition_number, 1.0, d)
    basis = _random_orthogonal(rng, d, d) if rotate else np.eye(d)
    hessian = (basis * eigenvalues) @ basis.T
    hessian = 0.5 * (hessian + hessian.T)

    center = rng.standard_normal(d)
    count = n_samples if sigma > 0 else 1
    shifts = _calibrate(rng.standard_normal((count, d)), lambda s: hessian @ s, sigma)
    x0 = center + start_offset * rng.standard_normal(d)

    spec = {
        "kind": "quadratic",
        "d": d,
        "condition_number": condition_number,
        "sigma": sigma,
        "seed": seed,
        "L": L,
        "n_samples": count,
        "rotate": rotate,
        "asymmetry": asymmetry,
        "start_offset": start_offset,
    }
    problem = QuadraticProblem(hessian, center + shifts, asymmetry, x0, seed, spec, basis=basis)
    certify_variance(problem, rng)
    return problem


def make_logistic(d: int, n_samples: int = 256, sigma_label_noise: float = 0.0, seed: int = 0) -> LogisticProblem:
    if d < 1 or n_samples < 1 or sigma_label_noise < 0:
        raise ConfigurationError("make_logistic needs d >= 1, n_samples >= 1, sigma_label_noise >= 0")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n_samples, d))
    weights = rng.standard_normal(d)
    scores = features @ weights + sigma_label_noise * rng.standard_normal(n_samples)
    labels = np.where(scores >= 0.0, 1.0, -1.0)
    spec = {"kind": "logistic", "d": d, "n_samples": n_samples, "sigma_label_noise": sigma_label_noise, "seed": seed}
    problem = LogisticProblem(features, labels, generator_seed=seed, spec=spec)
    certify_variance(problem, rng)
    return problem


def make_rosenbrock(d: int, seed: int = 0) -> RosenbrockProblem:
    if d < 2:
        raise ConfigurationError("make_rosenbrock needs d >= 2")
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1.5, 1.5, size=d)
    return RosenbrockProblem(x0, seed, {"kind": "rosenbrock", "d": d, "seed": seed})


def make_matrix_regression(
    m: int,
    n: int,
    rank: int = 1,
    sigma: float = 0.0,
    seed: int = 0,
    n_samples: int = 16,
    rows: int | None = None,
) -> MatrixRegressionProblem:
    """
    Least squares 1/2 ||A X - B_k||_F^2 with a rank-``rank`` solution X*.

    The design A has ``rows`` (default 4m) Gaussian rows scaled by 1/sqrt(rows),
    which keeps A^T A well conditioned.
    """
    if m < 1 or n < 1 or not 1 <= rank <= min(m, n) or sigma < 0:
        raise ConfigurationError("make_matrix_regression needs m, n >= 1, 1 <= rank <= min(m, n), sigma >= 0")
    if sigma > 0 and n_samples < 2:
        raise ConfigurationError("a noisy regression needs at least two samples")

    rng = np.random.default_rng(seed)
    p = rows or 4 * m
    design = rng.standard_normal((p, m)) / np.sqrt(p)
    left = _random_orthogonal(rng, m, rank)
    right = _random_orthogonal(rng, n, rank)
    x_true = (left * np.linspace(2.0, 1.0, rank)) @ right.T

    count = n_samples if sigma > 0 else 1
    shifts = _calibrate(rng.standard_normal((count, p, n)), lambda s: design.T @ s, sigma)
    targets = design @ x_true + shifts

    spec = {
        "kind": "matrix_regression",
        "m": m,
        "n": n,
        "rank": rank,
        "sigma": sigma,
        "seed": seed,
        "n_samples": count,
        "rows": p,
    }
    problem = MatrixRegressionProblem(design, targets, x_star=x_true, generator_seed=seed, spec=spec)
    certify_variance(problem, rng)
    return problem


def make_function_problem(
    fn: Callable[[Array], float],
    shape: Shape,
    gradient: Callable[[Array], Array] | None = None,
    **kwargs: Any,
) -> FunctionProblem:
    return FunctionProblem(fn, shape, gradient, **kwargs)


def exact_gradient(problem: Problem, x: Array) -> Array:
    if not problem.has_exact_gradient:
        raise UnsupportedProblemError(f"problem {problem.name!r} has no exact gradient")
    return problem.exact_gradient(x)


def certification_points(problem: Problem, rng: np.random.Generator, count: int = CERTIFICATION_POINTS) -> Array:
    center = problem.x_star if problem.x_star is not None else problem.initial_point()
    points = center + rng.standard_normal((count, *problem.shape))
    if problem.lipschitz_box is not None:
        points = np.clip(points, *problem.lipschitz_box)
    return points


def certify_variance(problem: Problem, rng: np.random.Generator, count: int = CERTIFICATION_POINTS) -> float:
    """Largest empirical gradient variance over random certification points; raises if it exceeds sigma^2."""
    worst = max(problem.gradient_variance(x) for x in certification_points(problem, rng, count))
    if worst > problem.sigma**2 * (1.0 + 1e-9) + 1e-12:
        raise ConfigurationError(
            f"variance certificate failed for {problem.name}: {worst:.6g} > sigma^2 = {problem.sigma**2:.6g}"
        )
    return worst


def certify_smoothness(problem: Problem, rng: np.random.Generator, pairs: int = 100) -> bool:
    """Check ||grad f(x, xi) - grad f(y, xi)|| <= L(xi) ||x - y|| on random pairs for every sample."""
    xs = certification_points(problem, rng, pairs)
    ys = certification_points(problem, rng, pairs)
    limits = np.array([problem.sample_lipschitz(k) for k in range(problem.sample_count)])
    for x, y in zip(xs, ys, strict=True):
        gx = problem._sample_gradients(x).reshape(problem.sample_count, -1)
        gy = problem._sample_gradients(y).reshape(problem.sample_count, -1)
        lhs = np.linalg.norm(gx - gy, axis=1)
        if np.any(lhs > limits * np.linalg.norm(x - y) * (1.0 + 1e-9) + 1e-12):
            return False
    return True


def finite_difference_gradient(problem: Problem, x: Array, step: float = 1e-5) -> Array:
    """Central differences of the noiseless objective."""
    x = problem.check_point(x)
    grad = np.zeros_like(x)
    for index in np.ndindex(*problem.shape):
        h = step * max(1.0, abs(float(x[index])))
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        grad[index] = (problem.value(plus) - problem.value(minus)) / (2.0 * h)
    return grad
