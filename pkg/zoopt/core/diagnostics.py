"""
Theory-verification instruments.

Bounds are evaluated from the problem and run constants only and are never
fitted to observations. Expectations are replaced by seed averages.
"""
import logging
import math
from collections import defaultdict
from typing import Literal

import numpy as np
from scipy.stats import linregress

from ..config import harness_settings
from ..errors import InsufficientDataError, UnsupportedProblemError
from .linalg import frobenius_norm, l1_norm, polar_reference, schatten1_norm, sign_elementwise, singular_values
from .models import Array, BoundReport, CheckResult, RunTrace, Shape, SlopeFit
from .problems import Problem, exact_gradient

logger = logging.getLogger(__name__)

CHECK_TOLERANCE = 1e-9


def _ratio(numerator: float, denominator: float) -> float:
    # 0 / 0 terms vanish (gamma = 0 with beta = 1), x / 0 terms are unbounded
    if numerator == 0.0:
        return 0.0
    if denominator == 0.0:
        return math.inf
    return numerator / denominator


def lemma1_terms(
    d: int,
    L: float,
    sigma: float,
    delta: float,
    tau: float,
    gamma: float,
    beta: float,
    t: int | Array,
    grad0_sq: float,
) -> dict[str, float | Array]:
    """The five terms of the momentum-error bound at iteration t, without the constant."""
    return {
        "drift": _ratio(d**3 * L**2 * gamma**2, (1.0 - beta) ** 2),
        "variance": (1.0 - beta) * d * sigma**2,
        "smoothing": d * L**2 * tau**2,
        "corruption": 2.0 * d * delta**2 / tau**2,
        "decay": (1.0 - (1.0 - beta) / (2.0 * d)) ** np.asarray(t, dtype=np.float64) * grad0_sq,
    }


def lemma1_explicit_bound(
    d: int,
    L: float,
    sigma: float,
    delta: float,
    tau: float,
    gamma: float,
    beta: float,
    t: int | Array,
    grad0_sq: float,
) -> Array:
    """Unrolled recursion with explicit constants, simplified so beta = 1 stays finite where it should."""
    one_plus = 1.0 + beta
    drift = _ratio(8.0 * d**3 * L**2 * gamma**2, (1.0 - beta) ** 2 * one_plus)
    variance = 4.0 * (1.0 - beta) * d * sigma**2 / one_plus
    smoothing = 6.0 * (d * L**2 * tau**2 + 2.0 * d * delta**2 / tau**2) / one_plus
    decay = (1.0 - (1.0 - beta**2) / (2.0 * d)) ** np.asarray(t, dtype=np.float64) * grad0_sq
    return np.asarray(drift + variance + smoothing + decay, dtype=np.float64)


def track_momentum_error(
    traces: RunTrace | list[RunTrace],
    problem: Problem,
    constant: float | None = None,
) -> BoundReport:
    """
    Compare the seed-averaged momentum error with C times the sum of the bound terms.

    Args:
        traces: runs of one configuration over different seeds
        problem: the problem the runs were recorded on
        constant: absolute constant C, defaults to the harness setting

    Returns:
        BoundReport with the per-iteration series and the violation fraction

    Raises:
        UnsupportedProblemError: if the runs carry no momentum error
    """
    if isinstance(traces, RunTrace):
        traces = [traces]
    if not traces or not problem.has_exact_gradient or not all(tr.has_momentum_error for tr in traces):
        raise UnsupportedProblemError("momentum-error tracking needs exact gradients")

    C = harness_settings.lemma1_constant if constant is None else constant
    first = traces[0]
    cfg, oracle = first.config, first.oracle
    d = first.dimension
    grad0_sq = float(np.mean([tr.initial_grad_sq for tr in traces]))
    observed = np.mean([tr.momentum_err_sq for tr in traces], axis=0)

    constants = {
        "L": problem.L,
        "sigma": problem.sigma,
        "delta": oracle.delta,
        "tau": oracle.tau,
        "gamma": cfg.gamma,
        "beta": cfg.beta,
        "d": d,
        "shape": list(first.shape),
    }
    args = (d, problem.L, problem.sigma, oracle.delta, oracle.tau, cfg.gamma, cfg.beta, first.t, grad0_sq)
    terms = lemma1_terms(*args)
    total = np.asarray(sum(np.broadcast_to(v, observed.shape) for v in terms.values()), dtype=np.float64)
    bound = C * total
    explicit = lemma1_explicit_bound(*args)

    with np.errstate(divide="ignore", invalid="ignore"):
        needed = np.where(observed > 0, observed / total, 0.0)
    violations = float(np.mean(observed > bound))
    if violations > 0:
        logger.info("momentum-error bound violated on %.3g of the iterations with C=%g", violations, C)

    return BoundReport(
        observed=observed.tolist(),
        bound=bound.tolist(),
        explicit_bound=explicit.tolist(),
        violation_fraction=violations,
        constant=C,
        smallest_passing_constant=float(np.max(needed)) if needed.size else 0.0,
        seeds=len(traces),
        constants_used=constants,
    )


def check_polar_inner_product(a: Array, b: Array, tol: float = CHECK_TOLERANCE) -> CheckResult:
    """
    |<A, polar(A) - polar(B)>| <= 2 ||A - B||_S1 <= 2 sqrt(rank(A - B)) ||A - B||_F.

    The margin is 2 ||A - B||_S1 minus the left-hand side.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lhs = abs(float(np.sum(a * (polar_reference(a) - polar_reference(b)))))

    gap = a - b
    spectrum = singular_values(gap)
    rank = int(np.sum(spectrum > 1e-12 * spectrum[0])) if spectrum.size and spectrum[0] > 0 else 0
    rhs = 2.0 * float(np.sum(spectrum))
    rank_form = 2.0 * math.sqrt(rank) * frobenius_norm(gap)

    passed = lhs <= rhs + tol and rhs <= rank_form + tol
    return CheckResult(
        passed=passed,
        margin=rhs - lhs,
        lhs=lhs,
        rhs=rhs,
        details={"rank_form": rank_form, "rank": float(rank)},
    )


def _smoothness_step(lhs: float, descent: float, error_term: float, curvature: float, tol: float) -> CheckResult:
    rhs = -descent + error_term + curvature
    return CheckResult(
        passed=lhs <= rhs + tol,
        margin=rhs - lhs,
        lhs=lhs,
        rhs=rhs,
        details={"descent": descent, "error_term": error_term, "curvature": curvature},
    )


def check_step_lemma(
    x: Array, m: Array, problem: Problem, gamma: float, tol: float = CHECK_TOLERANCE
) -> CheckResult:
    """
    f(X - gamma polar(M)) - f(X) <= -gamma ||grad||_S1 + 2 sqrt(n) gamma ||grad - M||_F + L n gamma^2 / 2,
    with the exact polar factor and n the smaller side of X.
    """
    if not problem.is_matrix:
        raise UnsupportedProblemError("the Muon step lemma needs a matrix-shaped problem")
    x = problem.check_point(x)
    grad = exact_gradient(problem, x)
    n = min(problem.shape)

    moved = x - gamma * polar_reference(m)
    lhs = problem.value(moved) - problem.value(x)
    return _smoothness_step(
        lhs,
        gamma * schatten1_norm(grad),
        2.0 * math.sqrt(n) * gamma * frobenius_norm(grad - m),
        problem.L * n * gamma**2 / 2.0,
        tol,
    )


def check_sign_step_lemma(
    x: Array, m: Array, problem: Problem, gamma: float, tol: float = CHECK_TOLERANCE
) -> CheckResult:
    """f(x - gamma sign(m)) - f(x) <= -gamma ||grad||_1 + 2 sqrt(d) gamma ||m - grad||_2 + d L gamma^2 / 2."""
    x = problem.check_point(x)
    grad = exact_gradient(problem, x)
    d = problem.dimension

    moved = x - gamma * sign_elementwise(m)
    lhs = problem.value(moved) - problem.value(x)
    return _smoothness_step(
        lhs,
        gamma * l1_norm(grad),
        2.0 * math.sqrt(d) * gamma * frobenius_norm(m - grad),
        d * problem.L * gamma**2 / 2.0,
        tol,
    )


def trace_metric(trace: RunTrace, metric: Literal["expected", "selected", "tail"] = "expected") -> float:
    if metric == "selected":
        return trace.selected_grad_norm()
    if metric == "tail":
        return trace.tail_mean("grad_norm")
    return trace.expected_grad_norm()


def fit_convergence_slope(
    traces: list[RunTrace],
    axis: Literal["T", "d"] = "T",
    metric: Literal["expected", "selected", "tail"] = "expected",
    min_groups: int = 4,
    min_seeds: int = 10,
) -> SlopeFit:
    """
    Least-squares slope of log(mean gradient norm) against log(T) or log(d).

    Raises:
        InsufficientDataError: with fewer than ``min_groups`` axis values or
            fewer than ``min_seeds`` runs in any group
    """
    groups: dict[int, list[float]] = defaultdict(list)
    for trace in traces:
        key = trace.T if axis == "T" else trace.dimension
        groups[key].append(trace_metric(trace, metric))

    if len(groups) < min_groups:
        raise InsufficientDataError(f"need {min_groups} groups along {axis}, got {len(groups)}")
    thin = sorted(k for k, v in groups.items() if len(v) < min_seeds)
    if thin:
        raise InsufficientDataError(f"groups {thin} have fewer than {min_seeds} seeds")

    points = [(float(k), float(np.mean(v))) for k, v in sorted(groups.items())]
    if any(y <= 0 for _, y in points):
        raise InsufficientDataError("slope fit needs strictly positive metrics")

    fit = linregress(np.log([p[0] for p in points]), np.log([p[1] for p in points]))
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        stderr=float(fit.stderr),
        axis=axis,
        points=points,
    )


def _scales(shape: Shape, matrix: bool) -> tuple[float, float]:
    """(d, d^2) for vectors, (m^{1/2} n, m^{3/2} n^2) with m >= n for matrices."""
    if matrix and len(shape) == 2:
        m, n = max(shape), min(shape)
        return math.sqrt(m) * n, m**1.5 * n**2
    d = float(np.prod(shape))
    return d, d * d


def rate_terms(
    shape: Shape,
    T: int,
    gamma: float,
    beta: float,
    tau: float,
    L: float,
    sigma: float,
    delta: float,
    delta0: float,
    grad0_norm: float,
    matrix: bool = False,
) -> dict[str, float]:
    """The six terms bounding the expected gradient norm at the returned iterate."""
    linear, quadratic = _scales(shape, matrix)
    return {
        "gap": _ratio(delta0, gamma * T),
        "initial_error": _ratio(linear * grad0_norm, T * math.sqrt(1.0 - beta)),
        "drift": _ratio(quadratic * L * gamma, 1.0 - beta),
        "variance": math.sqrt(1.0 - beta) * linear * sigma,
        "smoothing": linear * L * tau,
        "corruption": linear * delta / tau,
    }


def convergence_bound(trace: RunTrace, problem: Problem) -> float:
    """Theory-predicted neighbourhood of the gradient norm for a recorded run (no constant)."""
    cfg, oracle = trace.config, trace.oracle
    if problem.f_star is not None:
        delta0 = trace.initial_f - problem.f_star
    elif cfg.delta0_estimate is not None:
        delta0 = cfg.delta0_estimate
    else:
        return math.nan

    terms = rate_terms(
        trace.shape,
        trace.T,
        cfg.gamma,
        cfg.beta,
        oracle.tau,
        problem.L,
        problem.sigma,
        oracle.delta,
        max(delta0, 0.0),
        math.sqrt(trace.initial_grad_sq),
        matrix=trace.grad_norm_kind == "s1",
    )
    return float(sum(terms.values()))


def irreducible_error(shape: Shape, L: float, delta: float, matrix: bool | None = None) -> float:
    """Error floor d sqrt(delta L) left by oracle corruption (m^{1/2} n sqrt(delta L) for matrices)."""
    linear, _ = _scales(shape, len(shape) == 2 if matrix is None else matrix)
    return linear * math.sqrt(delta * L)
