"""
Matrix kernels shared by the Muon-type optimizers and the diagnostics.

Newton-Schulz uses the cubic map A <- 3/2 A - 1/2 A A^T A after Frobenius
normalization. The iteration count is exactly ``steps``; a loop written as
``k = 0..K`` inclusive would run one more.
"""
import numpy as np
import scipy.linalg

from ..errors import DomainError
from .models import Array, PolarResult

DEFAULT_NS_STEPS = 5
RANK_TOLERANCE = 1e-12


def _require_finite(a: Array, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} has non-finite entries")


def _as_matrix(a: Array) -> Array:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DomainError(f"expected a matrix, got an array of shape {a.shape}")
    return a


def orthogonality_residual(q: Array) -> float:
    """||Q^T Q - I_n||_F for tall Q (the wide case uses Q Q^T)."""
    m, n = q.shape
    gram = q.T @ q if m >= n else q @ q.T
    return float(np.linalg.norm(gram - np.eye(gram.shape[0]), "fro"))


def newton_schulz(a: Array, steps: int = DEFAULT_NS_STEPS) -> PolarResult:
    """
    Approximate the polar factor U_A V_A^T with the cubic Newton-Schulz iteration.

    Args:
        a: nonzero matrix with finite entries
        steps: number of cubic iterations K >= 0

    Returns:
        PolarResult with Q = A^K of the same shape as ``a``

    Raises:
        DomainError: if ``a`` is zero, non-finite or not a matrix
    """
    a = _as_matrix(a)
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    _require_finite(a, "Newton-Schulz input")

    norm = np.linalg.norm(a, "fro")
    if norm == 0.0:
        raise DomainError("Newton-Schulz is undefined for the zero matrix")

    # work with m >= n
    transposed = a.shape[0] < a.shape[1]
    x = (a.T if transposed else a) / norm
    for _ in range(steps):
        x = 1.5 * x - 0.5 * x @ (x.T @ x)

    q = x.T if transposed else x
    return PolarResult(Q=q, iterations_used=steps, residual=orthogonality_residual(q))


def singular_values(a: Array) -> Array:
    a = _as_matrix(a)
    _require_finite(a, "matrix")
    return scipy.linalg.svdvals(a)


def polar_reference(a: Array) -> Array:
    """
    Exact U V^T from a reduced SVD. Directions whose singular value falls
    below RANK_TOLERANCE * sigma_max are dropped.
    """
    a = _as_matrix(a)
    _require_finite(a, "polar input")
    u, s, vt = scipy.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DomainError("polar factor is undefined for the zero matrix")

    keep = s > RANK_TOLERANCE * s[0]
    return u[:, keep] @ vt[keep, :]


def l1_norm(x: Array) -> float:
    x = np.asarray(x, dtype=np.float64)
    _require_finite(x, "vector")
    return float(np.sum(np.abs(x)))


def frobenius_norm(a: Array) -> float:
    a = np.asarray(a, dtype=np.float64)
    _require_finite(a, "matrix")
    return float(np.sqrt(np.sum(a * a)))


def schatten1_norm(a: Array) -> float:
    return float(np.sum(singular_values(a)))


def sign_elementwise(x: Array) -> Array:
    # np.sign maps 0 to 0, so dead coordinates do not move
    return np.sign(np.asarray(x, dtype=np.float64))
