"""
Property suites behind ``zoopt check``. Each suite returns a SuiteResult and
passes only when every check in it passes. ``quick`` shrinks sizes and seed
counts for smoke runs.
"""
import logging
import math
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel, Field

from ..core.diagnostics import (
    check_polar_inner_product,
    check_sign_step_lemma,
    check_step_lemma,
    fit_convergence_slope,
    track_momentum_error,
)
from ..core.estimators import full_coordinate_estimate
from ..core.linalg import frobenius_norm, newton_schulz, polar_reference, schatten1_norm
from ..core.models import NoiseKind, OptimizerConfig, OptimizerKind, OracleConfig, TuningPreset
from ..core.optimizers import param_count, run
from ..core.oracle import StochasticOracle
from ..core.problems import exact_gradient, make_matrix_regression, make_quadratic
from ..errors import ZooptError
from .presets import (
    SLOPE_T_VALUES,
    TAU_GRID,
    TAU_OPTIMUM_ASYMMETRY,
    TAU_OPTIMUM_DELTA,
)

logger = logging.getLogger(__name__)

SLOPE_TARGET = -0.5
SLOPE_TOLERANCE = 0.15


class CheckOutcome(BaseModel):
    name: str
    passed: bool
    detail: dict[str, Any] = Field(default_factory=dict)


class SuiteResult(BaseModel):
    suite: str
    passed: bool
    checks: list[CheckOutcome]


def _suite(name: str, checks: list[CheckOutcome]) -> SuiteResult:
    passed = all(c.passed for c in checks)
    logger.info("suite %s: %s (%d checks)", name, "pass" if passed else "FAIL", len(checks))
    return SuiteResult(suite=name, passed=passed, checks=checks)


def _random_matrix(rng: np.random.Generator, m: int, n: int, condition: float) -> np.ndarray:
    u, _ = np.linalg.qr(rng.standard_normal((m, n)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (u * np.geomspace(1.0, condition, n)) @ v.T


def param_count_suite(quick: bool = False) -> SuiteResult:
    dims = [1, 10] if quick else [1, 10, 1000]
    shapes = [(1, 1), (4, 3)] if quick else [(1, 1), (4, 3), (64, 32)]
    checks = []

    for d in dims:
        for kind, expected in (
            (OptimizerKind.JAGUAR_SIGNSGD, 2 * d + 1),
            (OptimizerKind.ZO_SGD, 2 * d),
            (OptimizerKind.ZO_SIGNSGD, 2 * d),
        ):
            problem = make_quadratic(d, seed=0)
            trace = run(kind, problem, OptimizerConfig(T=3))
            count = param_count(kind, (d,))
            checks.append(
                CheckOutcome(
                    name=f"{kind.value} d={d}",
                    passed=count == expected == trace.persisted_scalars,
                    detail={"expected": expected, "param_count": count, "audited": trace.persisted_scalars},
                )
            )

    for m, n in shapes:
        for kind, expected in (
            (OptimizerKind.JAGUAR_MUON, 2 * m * n + 1),
            (OptimizerKind.ZO_MUON, 2 * m * n),
        ):
            problem = make_matrix_regression(m, n, rank=1, seed=0)
            trace = run(kind, problem, OptimizerConfig(T=3))
            count = param_count(kind, (m, n))
            checks.append(
                CheckOutcome(
                    name=f"{kind.value} {m}x{n}",
                    passed=count == expected == trace.persisted_scalars,
                    detail={"expected": expected, "param_count": count, "audited": trace.persisted_scalars},
                )
            )
    return _suite("param-count", checks)


def estimators_suite(quick: bool = False) -> SuiteResult:
    checks = []
    for d in [2, 8] if quick else [2, 8, 32, 64]:
        problem = make_quadratic(d, condition_number=10.0, seed=d)
        x = problem.initial_point()
        grad = exact_gradient(problem, x)
        for tau in (1e-3, 1e-1):
            oracle = StochasticOracle(OracleConfig(tau=tau))
            estimate = full_coordinate_estimate(problem, x, oracle, np.random.default_rng(0))
            error = float(np.linalg.norm(estimate - grad) / np.linalg.norm(grad))
            checks.append(
                CheckOutcome(
                    name=f"full-coordinate d={d} tau={tau:g}",
                    passed=error <= 1e-10 and oracle.eval_counter == 2 * d,
                    detail={"relative_error": error, "oracle_calls": oracle.eval_counter},
                )
            )
    return _suite("estimators", checks)


def newton_schulz_suite(quick: bool = False) -> SuiteResult:
    rng = np.random.default_rng(0)
    checks = []
    for i in range(20 if quick else 100):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(n, 17))
        a = _random_matrix(rng, m, n, float(rng.uniform(1.0, 10.0)))
        reference = polar_reference(a)

        errors = [frobenius_norm(newton_schulz(a, k).Q - reference) for k in range(1, 61)]
        monotone = all(later <= earlier + 1e-12 for earlier, later in zip(errors, errors[1:]))
        residual_1 = newton_schulz(a, 1).residual
        residual_5 = newton_schulz(a, 5).residual
        checks.append(
            CheckOutcome(
                name=f"matrix {i} ({m}x{n})",
                passed=monotone and errors[-1] <= 1e-6 and residual_5 <= residual_1,
                detail={"error_k60": errors[-1], "residual_k1": residual_1, "residual_k5": residual_5},
            )
        )
    return _suite("newton-schulz", checks)


def lemma1_suite(quick: bool = False) -> SuiteResult:
    """Momentum-error bound over gamma x beta x d on a noisy quadratic, Delta = 0, tau = 1e-2."""
    seeds = 5 if quick else 20
    checks = []
    for d in [2, 8] if quick else [2, 8, 32]:
        problem = make_quadratic(d, sigma=1.0, seed=d)
        for gamma in (1e-3, 1e-2):
            for beta in (0.0, 0.9, 0.99):
                cfg = OptimizerConfig(gamma=gamma, beta=beta, tau=1e-2, T=5 * d * d)
                traces = [
                    run(OptimizerKind.JAGUAR_SIGNSGD, problem, cfg.model_copy(update={"seed": s}))
                    for s in range(seeds)
                ]
                report = track_momentum_error(traces, problem)
                checks.append(
                    CheckOutcome(
                        name=f"d={d} gamma={gamma:g} beta={beta:g}",
                        passed=report.violation_fraction == 0.0,
                        detail={
                            "violation_fraction": report.violation_fraction,
                            "smallest_passing_constant": report.smallest_passing_constant,
                        },
                    )
                )
    return _suite("lemma1", checks)


def lemma2_suite(quick: bool = False) -> SuiteResult:
    rng = np.random.default_rng(1)
    instances = 100 if quick else 1000
    violations = []
    worst = math.inf
    for i in range(instances):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        a = rng.standard_normal((m, n))
        b = rng.standard_normal((m, n))
        result = check_polar_inner_product(a, b)
        worst = min(worst, result.margin)
        if not result.passed:
            violations.append(i)

    checks = [
        CheckOutcome(name="random pairs", passed=not violations, detail={"violations": violations, "min_margin": worst})
    ]

    a = rng.standard_normal((6, 4))
    same = check_polar_inner_product(a, a)
    checks.append(CheckOutcome(name="B = A", passed=same.passed and same.lhs == 0.0, detail={"lhs": same.lhs}))

    opposite = check_polar_inner_product(a, -a)
    sharp = abs(opposite.lhs - 2.0 * schatten1_norm(a)) <= 1e-9 * max(1.0, opposite.lhs)
    checks.append(
        CheckOutcome(
            name="B = -A",
            passed=opposite.passed and sharp,
            detail={"lhs": opposite.lhs, "two_s1_of_a": 2.0 * schatten1_norm(a), "rhs": opposite.rhs},
        )
    )
    return _suite("lemma2", checks)


def lemma3_suite(quick: bool = False) -> SuiteResult:
    rng = np.random.default_rng(2)
    instances = 100 if quick else 1000
    muon_violations, sign_violations = [], []

    for i in range(instances):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 6))
        problem = make_matrix_regression(m, n, rank=1, seed=i)
        x = rng.standard_normal((m, n))
        grad = exact_gradient(problem, x)
        momentum = grad + float(rng.uniform(0.0, 1.0)) * rng.standard_normal((m, n))
        gamma = float(10.0 ** rng.uniform(-4, 0))
        if not check_step_lemma(x, momentum, problem, gamma).passed:
            muon_violations.append(i)

        vector = make_quadratic(m * n, condition_number=5.0, seed=i)
        v = vector.initial_point()
        m_vec = exact_gradient(vector, v) + rng.standard_normal(m * n)
        if not check_sign_step_lemma(v, m_vec, vector, gamma).passed:
            sign_violations.append(i)

    return _suite(
        "lemma3",
        [
            CheckOutcome(name="muon step", passed=not muon_violations, detail={"violations": muon_violations}),
            CheckOutcome(name="sign step", passed=not sign_violations, detail={"violations": sign_violations}),
        ],
    )


def slope_suite(quick: bool = False) -> SuiteResult:
    budgets = [250, 1_000, 4_000, 16_000] if quick else list(SLOPE_T_VALUES)
    problem = make_quadratic(8, condition_number=4.0, seed=0)
    traces = []
    for T in budgets:
        cfg = OptimizerConfig(tuning_preset=TuningPreset.OPTIMAL, T=T)
        traces.extend(
            run(OptimizerKind.JAGUAR_SIGNSGD, problem, cfg.model_copy(update={"seed": s})) for s in range(10)
        )

    fit = fit_convergence_slope(traces, axis="T")
    return _suite(
        "slope",
        [
            CheckOutcome(
                name="log-log slope in T",
                passed=abs(fit.slope - SLOPE_TARGET) <= SLOPE_TOLERANCE,
                detail={"slope": fit.slope, "stderr": fit.stderr, "points": fit.points},
            )
        ],
    )


def tau_optimum_suite(quick: bool = False) -> SuiteResult:
    problem = make_quadratic(4, L=1.0, rotate=False, asymmetry=TAU_OPTIMUM_ASYMMETRY, start_offset=0.0)
    seeds = 2 if quick else 5
    errors = []
    for tau in TAU_GRID:
        cfg = OptimizerConfig(gamma=1e-9, beta=0.0, tau=tau, T=500 if quick else 2_000)
        runs = [
            run(
                OptimizerKind.JAGUAR_SIGNSGD,
                problem,
                cfg.model_copy(update={"seed": s}),
                delta=TAU_OPTIMUM_DELTA,
                noise_kind=NoiseKind.UNIFORM_BOUNDED,
            )
            for s in range(seeds)
        ]
        errors.append(float(np.mean([tr.tail_mean("momentum_err_sq", 0.5) for tr in runs])))

    predicted = math.sqrt(TAU_OPTIMUM_DELTA / problem.L)
    best = int(np.argmin(errors))
    target = int(np.argmin(np.abs(np.log(TAU_GRID) - np.log(predicted))))
    return _suite(
        "tau-optimum",
        [
            CheckOutcome(
                name="minimizer near sqrt(delta / L)",
                passed=abs(best - target) <= 1,
                detail={"best_tau": TAU_GRID[best], "predicted_tau": predicted, "errors": errors},
            )
        ],
    )


def beta_ablation_suite(quick: bool = False) -> SuiteResult:
    problem = make_quadratic(2, sigma=1.0, L=1.0, start_offset=0.0)
    seeds = 10 if quick else 20
    T = 5_000 if quick else 20_000

    def final_metrics(beta: float) -> np.ndarray:
        cfg = OptimizerConfig(gamma=1e-4, beta=beta, tau=1e-2, T=T)
        return np.array(
            [
                run(OptimizerKind.JAGUAR_SIGNSGD, problem, cfg.model_copy(update={"seed": s})).tail_mean("grad_norm", 0.5)
                for s in range(seeds)
            ]
        )

    plain, momentum = final_metrics(0.0), final_metrics(0.9)
    pooled_se = math.sqrt(plain.var(ddof=1) / seeds + momentum.var(ddof=1) / seeds)
    gap = float(plain.mean() - momentum.mean())
    return _suite(
        "beta-ablation",
        [
            CheckOutcome(
                name="beta=0.9 below beta=0",
                passed=gap >= 2.0 * pooled_se and gap > 0,
                detail={"beta0": float(plain.mean()), "beta09": float(momentum.mean()), "pooled_se": pooled_se},
            )
        ],
    )


def muon_suite(quick: bool = False) -> SuiteResult:
    problem = make_matrix_regression(8, 4, rank=2, seed=0)
    T = 20_000 if quick else 200_000
    factor = 10.0 if quick else 100.0
    checks = []
    for seed in range(2 if quick else 5):
        cfg = OptimizerConfig(tuning_preset=TuningPreset.OPTIMAL, T=T, seed=seed)
        trace = run(OptimizerKind.JAGUAR_MUON, problem, cfg)
        final = trace.tail_mean("grad_norm")
        checks.append(
            CheckOutcome(
                name=f"seed {seed}",
                passed=final * factor <= trace.initial_grad_norm,
                detail={"initial_s1": trace.initial_grad_norm, "final_s1": final},
            )
        )
    return _suite("muon", checks)


SUITES: dict[str, Callable[[bool], SuiteResult]] = {
    "param-count": param_count_suite,
    "estimators": estimators_suite,
    "newton-schulz": newton_schulz_suite,
    "lemma1": lemma1_suite,
    "lemma2": lemma2_suite,
    "lemma3": lemma3_suite,
    "slope": slope_suite,
    "tau-optimum": tau_optimum_suite,
    "beta-ablation": beta_ablation_suite,
    "muon": muon_suite,
}


def run_suites(name: str, quick: bool = False) -> list[SuiteResult] | dict[str, Any]:
    """Run one suite, or every suite for ``all``. Unknown names give an error dict."""
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        return {"error": f"Unknown suite {name}. Available: all, {', '.join(SUITES)}", "code": 404}

    results = []
    for suite in names:
        try:
            results.append(SUITES[suite](quick))
        except ZooptError as e:
            logger.error("suite %s failed: %s", suite, e)
            failure = CheckOutcome(name="error", passed=False, detail={"error": str(e)})
            results.append(SuiteResult(suite=suite, passed=False, checks=[failure]))
    return results
