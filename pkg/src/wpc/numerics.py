"""Dense symmetric linear algebra used by every estimator.

All routines take and return plain ``numpy`` arrays. Symmetric inputs are
symmetrized by averaging with the transpose before any factorization, so
round-off asymmetry of order 1e-16 never changes which branch LAPACK takes.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray

from .exceptions import DefinitenessError, DimensionError, NumericalError

__all__ = [
    "EigenPairs",
    "symmetrize",
    "fix_signs",
    "sym_eigs",
    "pd_inverse",
    "pd_solve",
    "min_eigenvalue",
]


class EigenPairs(NamedTuple):
    """Leading eigenpairs: ``values`` descending, ``vectors`` as columns."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]


def symmetrize(S: ArrayLike) -> NDArray[np.float64]:
    """Return ``(S + S') / 2`` as a float64 array, checking shape and finiteness."""
    A = np.asarray(S, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError("matrix contains non-finite entries")
    return 0.5 * (A + A.T)


def fix_signs(vectors: NDArray[np.float64]) -> NDArray[np.float64]:
    """Flip columns so that the entry of largest magnitude is nonnegative.

    Ties in magnitude go to the lowest row index (``argmax`` semantics).
    """
    V = np.array(vectors, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0.0, -1.0, 1.0)
    return V * signs


def sym_eigs(S: ArrayLike, k: int) -> EigenPairs:
    """Top-``k`` eigenpairs of a symmetric matrix.

    The full spectrum is computed with LAPACK's divide-and-conquer driver and
    the ``k`` algebraically largest pairs are returned in descending order,
    with signs fixed by :func:`fix_signs`.

    Parameters
    ----------
    S : array_like, shape (n, n)
        Symmetric matrix; symmetrized by averaging.
    k : int
        Number of pairs, ``0 <= k <= n``. ``k = 0`` returns empty arrays.

    Raises
    ------
    DimensionError
        If ``k`` is out of range.
    NumericalError
        If the eigensolver does not converge.
    """
    A = symmetrize(S)
    n = A.shape[0]
    if not 0 <= k <= n:
        raise DimensionError(f"k={k} out of range for a {n}x{n} matrix")
    if k == 0:
        return EigenPairs(np.empty(0), np.empty((n, 0)))
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigendecomposition did not converge: {exc}", iterations=None) from exc
    order = np.argsort(w, kind="stable")[::-1][:k]
    return EigenPairs(w[order].copy(), fix_signs(V[:, order]))


def _cholesky(A: NDArray[np.float64]) -> NDArray[np.float64]:
    c, info = sla.lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(
            f"matrix is not positive definite (pivot {info - 1} failed)", pivot=info - 1
        )
    if info < 0:  # pragma: no cover - argument error in LAPACK call
        raise NumericalError(f"dpotrf argument {-info} invalid")
    return c


def pd_inverse(S: ArrayLike) -> NDArray[np.float64]:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    The factorization itself certifies definiteness: a failed pivot raises
    :class:`DefinitenessError` carrying its zero-based index.
    """
    A = symmetrize(S)
    if A.shape[0] == 0:
        return A.copy()
    L = _cholesky(A)
    inv, info = sla.lapack.dpotri(L, lower=1)
    if info != 0:  # pragma: no cover - singular after a successful dpotrf
        raise DefinitenessError("Cholesky factor is singular", pivot=info - 1 if info > 0 else None)
    inv = np.tril(inv) + np.tril(inv, -1).T
    return inv


def pd_solve(S: ArrayLike, B: ArrayLike) -> NDArray[np.float64]:
    """Solve ``S X = B`` for symmetric positive definite ``S``."""
    A = symmetrize(S)
    L = _cholesky(A)
    return sla.cho_solve((L, True), np.asarray(B, dtype=np.float64))


def min_eigenvalue(S: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    A = symmetrize(S)
    return float(sla.eigvalsh(A, subset_by_index=[0, 0])[0])
