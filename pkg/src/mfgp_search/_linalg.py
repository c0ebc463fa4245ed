"""Shared dense linear-algebra helpers (jittered Cholesky, triangular solves)."""

import numpy as np
from scipy.linalg import solve_triangular

DEFAULT_JITTER = 1e-10


class NumericalError(RuntimeError):
    """Covariance factorization failed even after diagonal jitter.

    Carries the absolute jitter that was on the diagonal when the
    factorization was attempted.
    """

    def __init__(self, message: str, jitter: float):
        super().__init__(f"{message} (jitter={jitter:g})")
        self.jitter = jitter


def jittered_cholesky(cov: np.ndarray, jitter_scale: float = DEFAULT_JITTER):
    """Lower Cholesky factor of ``cov + jitter*I``.

    The jitter is ``jitter_scale`` times the largest diagonal entry, the
    standard safeguard for nearly-PSD kernel matrices.  Returns
    ``(L, jitter)``; raises NumericalError if the factorization still fails.
    """
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    jitter = jitter_scale * float(np.max(np.diagonal(cov)))
    try:
        L = np.linalg.cholesky(cov + jitter * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance not positive definite: {exc}", jitter) from exc
    return L, jitter


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b for lower-triangular L."""
    if L.shape[0] == 0:
        return np.zeros_like(b)
    return solve_triangular(L, b, lower=True, check_finite=False)
