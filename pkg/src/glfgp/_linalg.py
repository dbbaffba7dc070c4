"""Small dense linear-algebra helpers shared by the solvers and diagnostics."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import ConditioningError

MAX_JITTER_ESCALATIONS = 3


def cholesky_jittered(A: np.ndarray, *, what: str = "matrix"):
    """Lower Cholesky factor of a Hermitian matrix.

    On failure a diagonal jitter of ``1e-12 * trace / n`` is added and grown by
    a factor 100 at most three times.  Returns ``(L, jitter)``.
    """
    n = A.shape[0]
    try:
        return linalg.cholesky(A, lower=True, check_finite=True), 0.0
    except linalg.LinAlgError:
        pass
    base = 1e-12 * abs(np.real(np.trace(A))) / max(n, 1)
    jitter = base if base > 0 else 1e-300
    for _ in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True)
            return L, jitter
        except linalg.LinAlgError:
            jitter *= 100.0
    raise ConditioningError(f"{what} is not positive definite even with jitter {jitter / 100:.3g}")


def logdet_from_cholesky(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(L)))))
