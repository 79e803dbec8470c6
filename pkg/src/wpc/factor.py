"""Weighted principal components for approximate factor models.

A panel ``Y`` is stored as an ``N x T`` array: row ``i`` is series ``i`` and
column ``t`` is period ``t``. Every estimator here solves

    min_{Lambda, F} sum_t (Y_t - Lambda f_t)' W (Y_t - Lambda f_t)

subject to ``F'F / T = I`` and ``Lambda' W Lambda`` diagonal, whose solution
takes ``F / sqrt(T)`` as the leading eigenvectors of ``Y' W Y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DefinitenessError, DegenerateSeriesError, DimensionError
from .numerics import pd_inverse, sym_eigs, symmetrize

if TYPE_CHECKING:
    from .sparsecov import SparseCovEstimate, ThresholdConfig

__all__ = [
    "ObservationPanel",
    "WeightSpec",
    "FactorEstimate",
    "as_panel",
    "wpc_fit",
    "pc_fit",
    "hwpc_fit",
    "ewpc_fit",
    "common_components",
    "residual_matrix",
    "rotation_matrix",
]


@dataclass(frozen=True, eq=False)
class ObservationPanel:
    """Observed ``N x T`` data matrix."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        Y = np.asarray(self.values, dtype=np.float64)
        if Y.ndim != 2:
            raise DimensionError(f"panel must be 2-D, got shape {Y.shape}")
        if Y.shape[0] < 2 or Y.shape[1] < 2:
            raise DimensionError(f"panel needs N >= 2 and T >= 2, got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise DimensionError("panel contains non-finite values")
        Y.setflags(write=False)
        object.__setattr__(self, "values", Y)

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]


PanelLike = Union[ObservationPanel, ArrayLike]


def as_panel(Y: PanelLike) -> NDArray[np.float64]:
    """Validate ``Y`` and return its ``N x T`` array."""
    if isinstance(Y, ObservationPanel):
        return Y.values
    return ObservationPanel(np.asarray(Y, dtype=np.float64)).values


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Weight matrix ``W_T``: identity, diagonal or a full PD matrix.

    Use :meth:`identity`, :meth:`diagonal` or :meth:`full` rather than the
    constructor. ``matrix`` holds the diagonal vector for ``kind='diagonal'``
    and the dense matrix for ``kind='full'``.
    """

    kind: Literal["identity", "diagonal", "full"]
    n: int
    matrix: NDArray[np.float64] | None = field(default=None, repr=False)

    @classmethod
    def identity(cls, n: int) -> WeightSpec:
        return cls("identity", int(n))

    @classmethod
    def diagonal(cls, w: ArrayLike) -> WeightSpec:
        d = np.asarray(w, dtype=np.float64).ravel()
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            bad = int(np.flatnonzero(~(d > 0))[0]) if np.any(~(d > 0)) else None
            raise DefinitenessError("diagonal weights must be finite and positive", pivot=bad)
        d.setflags(write=False)
        return cls("diagonal", d.size, d)

    @classmethod
    def full(cls, W: ArrayLike, *, certify: bool = True) -> WeightSpec:
        M = symmetrize(W)
        if certify:
            pd_inverse(M)
        M.setflags(write=False)
        return cls("full", M.shape[0], M)

    @classmethod
    def coerce(cls, W: WeightSpec | ArrayLike | None, n: int) -> WeightSpec:
        """Interpret ``None`` as identity, 1-D arrays as diagonal, 2-D as full."""
        if W is None:
            return cls.identity(n)
        if isinstance(W, WeightSpec):
            spec = W
        else:
            arr = np.asarray(W, dtype=np.float64)
            spec = cls.diagonal(arr) if arr.ndim == 1 else cls.full(arr)
        if spec.n != n:
            raise DimensionError(f"weight has order {spec.n}, panel has N={n}")
        return spec

    def dense(self) -> NDArray[np.float64]:
        """The weight as an ``N x N`` array."""
        if self.kind == "identity":
            return np.eye(self.n)
        if self.kind == "diagonal":
            return np.diag(self.matrix)
        return np.array(self.matrix)

    def apply(self, A: NDArray[np.float64]) -> NDArray[np.float64]:
        """Left-multiply ``A`` (N rows) by ``W``."""
        if self.kind == "identity":
            return A
        if self.kind == "diagonal":
            return self.matrix[:, None] * A if A.ndim == 2 else self.matrix * A
        return self.matrix @ A

    def quad(self, A: NDArray[np.float64], B: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
        """``A' W B`` (``B`` defaults to ``A``)."""
        B = A if B is None else B
        return A.T @ self.apply(B)

    def scaled(self, c: float) -> WeightSpec:
        """The weight ``c * W`` as a concrete (diagonal or full) spec."""
        if self.kind == "identity":
            return WeightSpec.diagonal(np.full(self.n, float(c)))
        if self.kind == "diagonal":
            return WeightSpec.diagonal(c * self.matrix)
        return WeightSpec.full(c * self.matrix)


@dataclass(frozen=True, eq=False)
class FactorEstimate:
    """Result of a (weighted) principal components fit.

    Attributes
    ----------
    factors : ndarray, shape (T, r)
        Estimated factors, normalized so ``factors.T @ factors / T == I``.
    loadings : ndarray, shape (N, r)
        Estimated loadings ``Y @ factors / T``.
    eig_diag : ndarray, shape (r,)
        Leading eigenvalues of ``Y W Y' / (T N)``, descending.
    weight : WeightSpec
        The weight used.
    """

    factors: NDArray[np.float64]
    loadings: NDArray[np.float64]
    eig_diag: NDArray[np.float64]
    weight: WeightSpec

    @property
    def r(self) -> int:
        return self.factors.shape[1]

    @property
    def n_series(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_periods(self) -> int:
        return self.factors.shape[0]


def wpc_fit(Y: PanelLike, r: int, W: WeightSpec | ArrayLike | None = None) -> FactorEstimate:
    """Weighted principal components estimate with ``r`` factors.

    The columns of ``F / sqrt(T)`` are the top-``r`` eigenvectors of the
    ``T x T`` matrix ``Y' W Y``; loadings are ``Y F / T``.

    Parameters
    ----------
    Y : array_like or ObservationPanel, shape (N, T)
    r : int
        Number of factors, ``0 <= r <= min(N, T)``.
    W : WeightSpec, array_like or None
        ``None`` gives regular PC; a vector is a diagonal weight; a matrix a
        full positive definite weight.
    """
    Yv = as_panel(Y)
    N, T = Yv.shape
    if not 0 <= r <= min(N, T):
        raise DimensionError(f"r={r} must lie in [0, min(N, T)] = [0, {min(N, T)}]")
    spec = WeightSpec.coerce(W, N)
    if r == 0:
        return FactorEstimate(np.empty((T, 0)), np.empty((N, 0)), np.empty(0), spec)
    M = spec.quad(Yv)
    vals, vecs = sym_eigs(M, r)
    F = np.sqrt(T) * vecs
    Lam = Yv @ F / T
    return FactorEstimate(F, Lam, vals / (T * N), spec)


def pc_fit(Y: PanelLike, r: int) -> FactorEstimate:
    """Regular principal components (``W = I``)."""
    Yv = as_panel(Y)
    return wpc_fit(Yv, r, WeightSpec.identity(Yv.shape[0]))


def common_components(est: FactorEstimate) -> NDArray[np.float64]:
    """Estimated common component ``Lambda F'`` (``N x T``); zeros when ``r = 0``."""
    return est.loadings @ est.factors.T


def residual_matrix(Y: PanelLike, est: FactorEstimate) -> NDArray[np.float64]:
    """Idiosyncratic residuals ``Y - Lambda F'``."""
    Yv = as_panel(Y)
    if Yv.shape != (est.n_series, est.n_periods):
        raise DimensionError(f"panel shape {Yv.shape} does not match the estimate")
    return Yv - common_components(est)


def hwpc_fit(Y: PanelLike, r: int) -> FactorEstimate:
    """Heteroskedastic WPC.

    A regular PC fit supplies residual variances
    ``s_i = mean_t (y_it - C_it)^2``; the second step is WPC with the diagonal
    weight ``1 / s_i``.

    Raises
    ------
    DegenerateSeriesError
        If some series has zero residual variance.
    """
    Yv = as_panel(Y)
    pc = pc_fit(Yv, r)
    s = np.mean(residual_matrix(Yv, pc) ** 2, axis=1)
    zero = np.flatnonzero(s <= 0.0)
    if zero.size:
        i = int(zero[0])
        raise DegenerateSeriesError(f"series {i} has zero residual variance", series=i)
    return wpc_fit(Yv, r, WeightSpec.diagonal(1.0 / s))


def ewpc_fit(
    Y: PanelLike, r: int, thr: ThresholdConfig | None = None
) -> tuple[FactorEstimate, SparseCovEstimate]:
    """Efficient WPC with the thresholded inverse error covariance as weight.

    Returns the factor estimate together with the covariance estimate whose
    inverse was used as ``W_T``.
    """
    from .sparsecov import ThresholdConfig, threshold_from_pc

    Yv = as_panel(Y)
    cov = threshold_from_pc(Yv, r, thr if thr is not None else ThresholdConfig())
    W = WeightSpec.full(cov.inverse, certify=False)
    return wpc_fit(Yv, r, W), cov


def rotation_matrix(
    est: FactorEstimate,
    F_true: ArrayLike,
    Lambda_true: ArrayLike,
    W: WeightSpec | ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Rotation ``H_W = V^-1 (F_hat' F)(Lambda' W Lambda) / (N T)``.

    Only meaningful when the true parameters are known (simulation). ``W``
    defaults to the weight stored in ``est``.
    """
    F = np.asarray(F_true, dtype=np.float64)
    Lam = np.asarray(Lambda_true, dtype=np.float64)
    N, T = est.n_series, est.n_periods
    if F.shape[0] != T or Lam.shape[0] != N or F.shape[1] != Lam.shape[1]:
        raise DimensionError("true factors/loadings are not conformable with the estimate")
    spec = est.weight if W is None else WeightSpec.coerce(W, N)
    if np.any(est.eig_diag <= 0):
        raise DefinitenessError("eigenvalue matrix V is singular")
    return (est.factors.T @ F) @ spec.quad(Lam) / (N * T) / est.eig_diag[:, None]
