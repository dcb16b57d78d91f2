from __future__ import annotations

import math

import numpy as np

from .errors import NotPSDError

PIVOT_TOL = 1e-12


def cholesky_psd(a: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive semi-definite matrix.

    Pivots in ``[-tol, 0]`` are clamped to zero and the corresponding column
    below the diagonal is zeroed, so singular correlation matrices (e.g. two
    perfectly correlated drivers) are accepted.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("square matrix required")
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - math.fsum(low[j, k] ** 2 for k in range(j))
        if pivot < -tol:
            raise NotPSDError()
        d = math.sqrt(pivot) if pivot > 0.0 else 0.0
        low[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j] - math.fsum(low[i, k] * low[j, k] for k in range(j))
            if d > 0.0:
                low[i, j] = s / d
            elif abs(s) > math.sqrt(tol):
                # zero pivot with a non-zero off-diagonal residual cannot be PSD
                raise NotPSDError()
    return low
