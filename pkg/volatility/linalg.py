"""
Small dense symmetric linear algebra for conditional covariance matrices.

Sized for n <= ~8 assets. Cholesky goes through LAPACK ``dpotrf`` so a
failure reports the offending pivot.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import NotPositiveDefinite, ShapeMismatch

SYMMETRY_RTOL = 1e-12
PIVOT_FLOOR = 1e-12
JITTER_SCALE = 1e-10


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric positive-definite conditional covariance with a cached factor."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"Covariance must be square, got shape {m.shape}")
        scale = max(float(np.max(np.abs(m))), 1.0)
        if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
            raise ValueError("Covariance matrix is not symmetric")
        object.__setattr__(self, "entries", symmetrize(m))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def chol(self) -> np.ndarray:
        return cholesky(self.entries)

    def logdet_and_quadform(self, v: np.ndarray) -> Tuple[float, float]:
        return _logdet_quadform_from_factor(self.chol, v)


MatrixLike = Union[CovMatrix, np.ndarray]


def _as_array(m: MatrixLike) -> np.ndarray:
    if isinstance(m, CovMatrix):
        return m.entries
    return np.asarray(m, dtype=float)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _potrf(m: np.ndarray) -> Tuple[np.ndarray, int]:
    factor, info = dpotrf(m, lower=1, clean=1)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    return factor, info


def _weak_pivot(factor: np.ndarray, info: int) -> int:
    """Index of the first failed or tiny pivot, -1 when the factor is sound."""
    if info > 0:
        return info - 1
    pivots = np.diag(factor) ** 2
    weak = np.flatnonzero(pivots < PIVOT_FLOOR)
    return int(weak[0]) if weak.size else -1


def cholesky(m: MatrixLike) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == m.

    The input is symmetrized first. A failed or near-zero pivot gets one
    retry with jitter 1e-10 * trace / n on the diagonal.

    Raises:
        NotPositiveDefinite: with the index of the failing pivot.
    """
    a = _as_array(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"Cholesky needs a square matrix, got {a.shape}")
    a = symmetrize(a)
    factor, info = _potrf(a)
    pivot = _weak_pivot(factor, info)
    if pivot < 0:
        return np.tril(factor)

    n = a.shape[0]
    jitter = JITTER_SCALE * np.trace(a) / n
    if jitter > 0:
        factor, info = _potrf(a + jitter * np.eye(n))
        retry_pivot = _weak_pivot(factor, info)
        if retry_pivot < 0:
            return np.tril(factor)
        pivot = retry_pivot
    raise NotPositiveDefinite(pivot)


def _logdet_quadform_from_factor(factor: np.ndarray, v: np.ndarray) -> Tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.shape != (factor.shape[0],):
        raise ShapeMismatch(f"Vector shape {v.shape} does not match n={factor.shape[0]}")
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor))))
    w = solve_triangular(factor, v, lower=True)
    return logdet, float(w @ w)


def logdet_and_quadform(m: MatrixLike, v: np.ndarray) -> Tuple[float, float]:
    """Return (log|m|, v' m^-1 v) through the Cholesky factor."""
    if isinstance(m, CovMatrix):
        return m.logdet_and_quadform(v)
    return _logdet_quadform_from_factor(cholesky(m), v)


def is_positive_definite(m: MatrixLike) -> bool:
    try:
        cholesky(m)
    except NotPositiveDefinite:
        return False
    return True


def batch_logdet_and_quadform(
    sigmas: np.ndarray, vectors: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised logdet / quadratic form over a (T, n, n) stack.

    Falls back to the scalar path on failure so the error names the
    offending time index.
    """
    sigmas = 0.5 * (sigmas + np.swapaxes(sigmas, -1, -2))
    try:
        factors = np.linalg.cholesky(sigmas)
    except LinAlgError:
        factors = np.empty_like(sigmas)
        for t in range(sigmas.shape[0]):
            try:
                factors[t] = cholesky(sigmas[t])
            except NotPositiveDefinite:
                raise NotPositiveDefinite(t, what="time index") from None
    logdets = 2.0 * np.sum(np.log(np.diagonal(factors, axis1=-2, axis2=-1)), axis=-1)
    solved = np.stack([solve_triangular(f, v, lower=True) for f, v in zip(factors, vectors)])
    return logdets, np.sum(solved**2, axis=-1)


def vech(m: MatrixLike) -> np.ndarray:
    """Upper-triangle entries in row-major order (s11, s12, ..., snn)."""
    a = _as_array(m)
    return a[np.triu_indices(a.shape[0])]
