"""Shared sparse-factorization caching and small dense solve helpers."""

import threading
from collections import OrderedDict

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConditioningError, LocalSolverError

CHOLESKY_PIVOT_FLOOR = 1e-13


class FactorCache:
    """LRU cache of sparse LU factorizations, safe for concurrent readers."""

    def __init__(self, maxsize=512):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key, builder):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = builder()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def invalidate(self, predicate=None):
        with self._lock:
            if predicate is None:
                self._data.clear()
            else:
                for key in [k for k in self._data if predicate(k)]:
                    del self._data[key]

    def __len__(self):
        return len(self._data)


def factorize(matrix_csc, context=""):
    try:
        return spla.splu(matrix_csc.tocsc())
    except RuntimeError as exc:
        raise LocalSolverError(f"sparse factorization failed {context}: {exc}") from exc


def submatrix(matrix_csr, rows, cols=None):
    """Extract a (rows, cols) block of a CSR matrix; cols defaults to rows."""
    if cols is None:
        cols = rows
    return matrix_csr[rows, :][:, cols]


def spd_factor(dense_sym):
    """Cholesky factor with a relative pivot floor; raises ConditioningError."""
    if dense_sym.shape[0] == 0:
        return None
    try:
        chol = sla.cho_factor(dense_sym, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"reduced system not positive definite: {exc}") from exc
    diag = np.diagonal(chol[0])
    scale = float(np.max(diag)) ** 2
    if scale > 0 and float(np.min(diag)) ** 2 < CHOLESKY_PIVOT_FLOOR * scale:
        raise ConditioningError("reduced system pivot below floor "
                                f"({float(np.min(diag))**2:.3e} < {CHOLESKY_PIVOT_FLOOR} * {scale:.3e})")
    return chol


def spd_solve(chol, rhs):
    if chol is None:
        return np.zeros_like(rhs)
    return sla.cho_solve(chol, rhs, check_finite=False)


class SubspaceGram:
    """Dual norms on dof subsets of a fixed symmetric positive definite Gram.

    ||f||_{O'} = sqrt(f^T G_OO^{-1} f) for the functional restricted to the
    subset O; factorizations are cached per subset key.
    """

    def __init__(self, gram_csr, maxsize=256):
        self.gram = gram_csr.tocsr()
        self._cache = FactorCache(maxsize=maxsize)

    def factor(self, key, dofs):
        return self._cache.get(key, lambda: factorize(submatrix(self.gram, dofs),
                                                      context=f"gram block {key}"))

    def riesz(self, key, dofs, values):
        """Riesz representatives of one or more functionals (columns)."""
        if len(dofs) == 0:
            return np.zeros_like(values)
        return self.factor(key, dofs).solve(values)

    def dual_norm(self, key, dofs, values):
        if len(dofs) == 0:
            return np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
        rep = self.riesz(key, dofs, values)
        sq = np.einsum("i...,i...->...", values, rep)
        return np.sqrt(np.maximum(sq, 0.0))

    def norm(self, key, dofs, coeffs):
        """V-norm of coefficient vectors supported on the subset."""
        if len(dofs) == 0:
            return np.zeros(coeffs.shape[1:]) if coeffs.ndim > 1 else 0.0
        g = submatrix(self.gram, dofs)
        sq = np.einsum("i...,i...->...", coeffs, g @ coeffs)
        return np.sqrt(np.maximum(sq, 0.0))
