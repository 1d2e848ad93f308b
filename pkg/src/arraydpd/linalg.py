"""Small dense Cholesky routines for Gram matrices of SNL regressors.

The matrices here are at most a handful of rows, so a plain loop
implementation is used; it reports which pivot collapsed, which the
callers translate into a nonlinearity order.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConditioningError

# Relative pivot floor on a unit-diagonal Gram matrix.
PIVOT_TOL = 1e-13


def cholesky_lower(gram, tol=PIVOT_TOL, labels=None):
    """Lower-triangular ``L`` with ``gram = L @ L^H``.

    The Gram matrix is equilibrated to unit diagonal before factoring so
    that ``tol`` is scale free.  ``labels`` maps column index to a name
    (e.g. the nonlinearity order) used in the error message.
    """
    g = np.asarray(gram, dtype=complex)
    n = g.shape[0]
    diag = np.real(np.diag(g))
    if np.any(diag <= 0):
        k = int(np.argmin(diag))
        label = labels[k] if labels is not None else k
        raise ConditioningError(f"zero-energy regressor for order {label}", order=label)
    s = 1 / np.sqrt(diag)
    a = g * s[:, None] * s[None, :]
    low = np.zeros((n, n), dtype=complex)
    for j in range(n):
        pivot = np.real(a[j, j] - np.vdot(low[j, :j], low[j, :j]))
        if pivot <= tol:
            label = labels[j] if labels is not None else j
            raise ConditioningError(
                f"regressor for order {label} is numerically dependent on lower orders "
                f"(relative pivot {pivot:.3e})", order=label)
        low[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            low[i, j] = (a[i, j] - np.dot(low[i, :j], np.conj(low[j, :j]))) / low[j, j]
    return low / s[:, None]


def cholesky_solve(low, rhs):
    """Solve ``(L L^H) x = rhs`` by two triangular substitutions."""
    y = solve_triangular(low, rhs, lower=True)
    return solve_triangular(low.conj().T, y, lower=False)
