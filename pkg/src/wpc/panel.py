"""Panel regression with interactive effects, estimated by (weighted) PC.

Model: ``y_it = X_it' beta + lambda_i' f_t + u_it``. The regressor tensor
``x`` has shape ``(N, T, d)``; ``x[:, t, :]`` is the ``N x d`` slice ``X_t``.
Estimation alternates a GLS step for ``beta`` given the factors with a
(weighted) principal components step for the factors given ``beta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DimensionError, RankError
from .factor import FactorEstimate, WeightSpec, wpc_fit
from .inference import normal_quantile
from .numerics import pd_inverse, symmetrize
from .sparsecov import SparseCovEstimate, ThresholdConfig, remove_leading_components, threshold_covariance

__all__ = [
    "PanelRegression",
    "IterationConfig",
    "PanelFit",
    "gls_beta",
    "pc_panel_fit",
    "wpc_panel_fit",
    "residual_cov_from_beta",
    "gamma_estimate",
    "rank_criteria",
    "select_rank",
    "double_demean",
    "detrend_project",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PanelRegression:
    """Observed outcome ``y`` (``N x T``) and regressors ``x`` (``N x T x d``)."""

    y: NDArray[np.float64]
    x: NDArray[np.float64]

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if y.ndim != 2 or x.ndim != 3 or x.shape[:2] != y.shape:
            raise DimensionError(f"y {y.shape} and x {x.shape} are not conformable")
        if x.shape[2] < 1:
            raise DimensionError("need at least one regressor")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DimensionError("panel contains non-finite values")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    def xbeta(self, beta: ArrayLike) -> NDArray[np.float64]:
        """The ``N x T`` matrix with entries ``X_it' beta``."""
        return self.x @ np.asarray(beta, dtype=np.float64)


@dataclass(frozen=True)
class IterationConfig:
    r: int = 2
    max_iter: int = 500
    tol: float = 1e-7

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.r < 0 or self.max_iter < 1:
            raise ValueError("r must be >= 0 and max_iter >= 1")


@dataclass(frozen=True, eq=False)
class PanelFit:
    """Estimated coefficients with their variance.

    ``se_k = sqrt([gamma^-1]_kk / (N T))``. For the PC fit ``gamma`` uses the
    identity in place of ``Sigma_u^-1`` and is not a sandwich variance.
    ``objective`` records the weighted objective after every half-step.
    """

    beta: NDArray[np.float64]
    factor_part: FactorEstimate
    cov: SparseCovEstimate | None
    gamma: NDArray[np.float64]
    se: NDArray[np.float64]
    iterations: int
    converged: bool
    method: str
    objective: tuple[float, ...] = field(default=(), repr=False)
    sigma2: float = float("nan")

    def conf_int(self, level: float = 0.95) -> NDArray[np.float64]:
        """``d x 2`` array of normal-theory intervals for ``beta``."""
        z = normal_quantile(0.5 + 0.5 * level)
        return np.column_stack([self.beta - z * self.se, self.beta + z * self.se])


WeightLike = Union[WeightSpec, SparseCovEstimate, ArrayLike, None]


def _as_weight(W: WeightLike, N: int) -> WeightSpec:
    if isinstance(W, SparseCovEstimate):
        return WeightSpec.full(W.inverse, certify=False)
    return WeightSpec.coerce(W, N)


class _GLS:
    """Caches ``W X_t`` and the normal matrix for repeated ``beta`` solves."""

    def __init__(self, p: PanelRegression, W: WeightSpec) -> None:
        N, T, d = p.x.shape
        if W.kind == "identity":
            WX = p.x
        elif W.kind == "diagonal":
            WX = W.matrix[:, None, None] * p.x
        else:
            WX = (W.matrix @ p.x.reshape(N, T * d)).reshape(N, T, d)
        A = symmetrize(np.einsum("itk,itl->kl", p.x, WX))
        scale = np.max(np.abs(np.diag(A))) if A.size else 0.0
        if scale == 0.0 or np.linalg.cond(A) > 1e13:
            raise RankError("sum_t X_t' W X_t is singular")
        self.WX = WX
        self.A_inv = pd_inverse(A)

    def solve(self, target: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.A_inv @ np.einsum("itk,it->k", self.WX, target)


def gls_beta(
    p: PanelRegression,
    loadings: ArrayLike | None,
    factors: ArrayLike | None,
    W: WeightLike = None,
) -> NDArray[np.float64]:
    """``beta = (sum_t X_t' W X_t)^-1 sum_t X_t' W (Y_t - Lambda f_t)``.

    ``loadings``/``factors`` may be ``None`` (no factor structure), which gives
    pooled (weighted) least squares.
    """
    target = np.array(p.y)
    if loadings is not None and factors is not None:
        Lam = np.asarray(loadings, dtype=np.float64)
        F = np.asarray(factors, dtype=np.float64)
        if Lam.size:
            target = target - Lam @ F.T
    return _GLS(p, _as_weight(W, p.N)).solve(target)


def _objective(E: NDArray[np.float64], W: WeightSpec) -> float:
    return float(np.sum(E * W.apply(E)))


def _iterate(
    p: PanelRegression, cfg: IterationConfig, W: WeightSpec, beta0: NDArray[np.float64]
) -> tuple[NDArray[np.float64], FactorEstimate, int, bool, list[float]]:
    if not 0 <= cfg.r < min(p.N, p.T):
        raise DimensionError(f"r={cfg.r} must be smaller than min(N, T)")
    solver = _GLS(p, W)
    beta = np.asarray(beta0, dtype=np.float64)
    path: list[float] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        est = wpc_fit(p.y - p.xbeta(beta), cfg.r, W)
        common = est.loadings @ est.factors.T
        path.append(_objective(p.y - p.xbeta(beta) - common, W))
        beta_new = solver.solve(p.y - common)
        path.append(_objective(p.y - p.xbeta(beta_new) - common, W))
        step = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if step < cfg.tol:
            converged = True
            break
    if not converged:
        log.warning("iteration stopped after %d steps without reaching tol=%g", it, cfg.tol)
    est = wpc_fit(p.y - p.xbeta(beta), cfg.r, W)
    return beta, est, it, converged, path


def _se(gamma: NDArray[np.float64], N: int, T: int) -> NDArray[np.float64]:
    return np.sqrt(np.diag(pd_inverse(gamma)) / (N * T))


def _sigma2(p: PanelRegression, beta: NDArray[np.float64], est: FactorEstimate) -> float:
    E = p.y - p.xbeta(beta) - est.loadings @ est.factors.T
    return float(np.mean(E * E))


def pc_panel_fit(p: PanelRegression, cfg: IterationConfig | None = None) -> PanelFit:
    """Regular PC estimator (``W = I``), started from pooled OLS.

    Non-convergence within ``max_iter`` is reported through ``converged``;
    the last iterate is returned.
    """
    cfg = cfg if cfg is not None else IterationConfig()
    W = WeightSpec.identity(p.N)
    beta0 = gls_beta(p, None, None, W)
    beta, est, it, conv, path = _iterate(p, cfg, W, beta0)
    gamma = gamma_estimate(p, est.factors, est.loadings, None)
    return PanelFit(
        beta=beta,
        factor_part=est,
        cov=None,
        gamma=gamma,
        se=_se(gamma, p.N, p.T),
        iterations=it,
        converged=conv,
        method="PC",
        objective=tuple(path),
        sigma2=_sigma2(p, beta, est),
    )


def residual_cov_from_beta(
    p: PanelRegression, beta0: ArrayLike, r: int, thr: ThresholdConfig | None = None
) -> SparseCovEstimate:
    """Thresholded covariance of ``Y_t - X_t beta0`` after removing ``r`` components.

    The raw second-moment matrix ``T^-1 sum_t e_t e_t'`` is not demeaned.
    """
    E = p.y - p.xbeta(beta0)
    U, R = remove_leading_components(E, r)
    return threshold_covariance(R, p.T, thr, residuals=U)


def wpc_panel_fit(
    p: PanelRegression,
    cfg: IterationConfig | None = None,
    thr: ThresholdConfig | None = None,
    initial: PanelFit | None = None,
) -> PanelFit:
    """Feasible efficient WPC estimator of ``beta``.

    A regular PC fit (or ``initial``) gives ``beta_0``; its residuals give
    the thresholded ``Sigma_u``, whose inverse stays fixed while ``beta`` and
    the factors are alternated. Standard errors come from
    :func:`gamma_estimate`.
    """
    cfg = cfg if cfg is not None else IterationConfig()
    pc = initial if initial is not None else pc_panel_fit(p, cfg)
    cov = residual_cov_from_beta(p, pc.beta, cfg.r, thr)
    W = WeightSpec.full(cov.inverse, certify=False)
    beta, est, it, conv, path = _iterate(p, cfg, W, pc.beta)
    gamma = gamma_estimate(p, est.factors, est.loadings, cov)
    return PanelFit(
        beta=beta,
        factor_part=est,
        cov=cov,
        gamma=gamma,
        se=_se(gamma, p.N, p.T),
        iterations=it,
        converged=conv,
        method="WPC",
        objective=tuple(path),
        sigma2=_sigma2(p, beta, est),
    )


def gamma_estimate(
    p: PanelRegression,
    factors: ArrayLike,
    loadings: ArrayLike,
    cov: SparseCovEstimate | ArrayLike | None,
) -> NDArray[np.float64]:
    """``Gamma = (NT)^-1 Z' (B kron M_F) Z`` without forming the ``NT x NT`` matrix.

    ``B = S - S Lambda (Lambda' S Lambda)^-1 Lambda' S`` with ``S`` the inverse
    error covariance (``cov.inverse``, an explicit matrix, or the identity
    when ``None``), and ``M_F = I - F (F'F)^-1 F'``. Row ``(i, t)`` of ``Z``
    is ``X_it'``, ordered unit-major.
    """
    N, T, d = p.x.shape
    F = np.asarray(factors, dtype=np.float64).reshape(T, -1)
    Lam = np.asarray(loadings, dtype=np.float64).reshape(N, -1)
    if isinstance(cov, SparseCovEstimate):
        S = cov.inverse
    elif cov is None:
        S = np.eye(N)
    else:
        S = symmetrize(cov)
    B = np.array(S)
    if Lam.shape[1]:
        SL = S @ Lam
        LSL = symmetrize(Lam.T @ SL)
        if np.linalg.matrix_rank(LSL) < LSL.shape[0]:
            raise RankError("Lambda' Sigma^-1 Lambda is singular")
        B = B - SL @ np.linalg.solve(LSL, SL.T)
    X = p.x
    if F.shape[1]:
        FF = F.T @ F
        if np.linalg.matrix_rank(FF) < FF.shape[0]:
            raise RankError("F'F is singular")
        coef = np.linalg.solve(FF, np.einsum("ta,itk->aik", F, X).reshape(F.shape[1], -1))
        MX = X - np.einsum("ta,aik->itk", F, coef.reshape(F.shape[1], N, d))
    else:
        MX = X
    BMX = (B @ MX.reshape(N, T * d)).reshape(N, T, d)
    return symmetrize(np.einsum("itk,itl->kl", MX, BMX) / (N * T))


def rank_criteria(
    p: PanelRegression, k_bar: int, cfg: IterationConfig | None = None
) -> dict[str, NDArray[np.float64]]:
    """``sigma2``, ``CP`` and ``IC`` for ``k = 0..k_bar`` from PC panel fits."""
    N, T = p.N, p.T
    if not 0 <= k_bar < min(N, T):
        raise DimensionError(f"k_bar={k_bar} must be smaller than min(N, T)")
    base = cfg if cfg is not None else IterationConfig()
    sigma2 = np.array([pc_panel_fit(p, replace(base, r=k)).sigma2 for k in range(k_bar + 1)])
    k = np.arange(k_bar + 1)
    pen = (k * (N + T) - k**2) * math.log(N * T) / (N * T)
    return {
        "k": k,
        "sigma2": sigma2,
        "CP": sigma2 + sigma2[-1] * pen,
        "IC": np.log(sigma2) + pen,
    }


def select_rank(
    p: PanelRegression,
    k_bar: int,
    criterion: Literal["CP", "IC"] = "IC",
    cfg: IterationConfig | None = None,
) -> int:
    """Number of factors minimizing CP or IC over ``0..k_bar`` (ties: smallest)."""
    crit = criterion.upper()
    if crit not in ("CP", "IC"):
        raise ValueError("criterion must be 'CP' or 'IC'")
    table = rank_criteria(p, k_bar, cfg)
    return int(np.argmin(table[crit]))


def double_demean(M: ArrayLike) -> NDArray[np.float64]:
    """Two-way within transformation over the first two axes.

    ``m_it - mean_t m_it - mean_i m_it + mean_it m_it``; a trailing regressor
    axis is handled slice by slice.
    """
    A = np.asarray(M, dtype=np.float64)
    if A.ndim not in (2, 3):
        raise DimensionError("expected an N x T matrix or N x T x d tensor")
    row = A.mean(axis=1, keepdims=True)
    col = A.mean(axis=0, keepdims=True)
    grand = A.mean(axis=(0, 1), keepdims=True)
    return A - row - col + grand


def detrend_project(M: ArrayLike, trend_degree: int = 1) -> NDArray[np.float64]:
    """Remove polynomial time trends ``t, t^2, ..., t^degree`` from each unit.

    Each time path is multiplied by ``P = I - B (B'B)^-1 B'`` where the basis
    ``B`` has columns ``t^k`` for ``t = 1..T``. Degree 0 is a no-op. Works on
    ``N x T`` matrices and ``N x T x d`` tensors.
    """
    A = np.asarray(M, dtype=np.float64)
    if A.ndim not in (2, 3):
        raise DimensionError("expected an N x T matrix or N x T x d tensor")
    if trend_degree < 0:
        raise ValueError("trend_degree must be nonnegative")
    if trend_degree == 0:
        return A.copy()
    T = A.shape[1]
    t = np.arange(1, T + 1, dtype=np.float64)
    basis = np.column_stack([(t / T) ** k for k in range(1, trend_degree + 1)])
    Q, R = np.linalg.qr(basis)
    if T <= trend_degree or np.min(np.abs(np.diag(R))) < 1e-10 * np.max(np.abs(np.diag(R))):
        raise RankError("trend basis is rank deficient")
    # P is symmetric, so right-multiplying time paths by P projects each one
    return A - np.einsum("ts,is...->it...", Q @ Q.T, A)
