"""Variance estimators and confidence intervals for efficient WPC.

Covers the factor variance ``V_e^-1``, the Newey-West long-run variance
of ``f_t u_jt`` used for loadings, the two pieces of the common-component
variance, and the comparison of ``Xi_W`` against the efficient ``Xi_e``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import ndtri

from .exceptions import BandwidthError, DefinitenessError, DimensionError, NumericalError, RankError
from .factor import FactorEstimate, PanelLike, as_panel, residual_matrix
from .numerics import pd_inverse, symmetrize
from .sparsecov import SparseCovEstimate

__all__ = [
    "HacConfig",
    "VarianceReport",
    "CommonComponentInterval",
    "normal_quantile",
    "auto_bandwidth",
    "ve_inverse",
    "hac_loading_variance",
    "variance_report",
    "common_component_interval",
    "xi_comparison",
]

_NEG_TOL = 1e-10


@dataclass(frozen=True)
class HacConfig:
    """Bartlett-kernel bandwidth ``K``; ``'auto'`` uses ``floor(min(T, N)^(1/4)) - 1``."""

    bandwidth_K: Union[int, Literal["auto"]] = "auto"

    def resolve(self, T: int, N: int) -> int:
        if self.bandwidth_K == "auto":
            return auto_bandwidth(T, N)
        K = int(self.bandwidth_K)
        if K < 0:
            raise BandwidthError("bandwidth must be nonnegative")
        return K


def auto_bandwidth(T: int, N: int) -> int:
    return max(int(math.floor(min(T, N) ** 0.25)) - 1, 0)


@dataclass(frozen=True, eq=False)
class VarianceReport:
    """Estimated asymptotic variances for an efficient WPC fit.

    Attributes
    ----------
    ve_inv : ndarray, shape (r, r)
        Estimated asymptotic variance of ``sqrt(N)(f_hat_t - H f_t)``.
    psi : ndarray, shape (N, r, r)
        HAC estimate for each loading, variance of ``sqrt(T)(lambda_hat_j - ...)``.
    theta1 : ndarray, shape (N,)
    theta2 : ndarray, shape (N, T)
    bandwidth_K : int
    """

    ve_inv: NDArray[np.float64]
    psi: NDArray[np.float64]
    theta1: NDArray[np.float64]
    theta2: NDArray[np.float64]
    bandwidth_K: int


@dataclass(frozen=True)
class CommonComponentInterval:
    center: float
    half_width: float
    theta1: float
    theta2: float
    level: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width


def normal_quantile(p: float) -> float:
    """Standard normal quantile (``scipy.special.ndtri``)."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    return float(ndtri(p))


def _clamp_nonneg(x: NDArray[np.float64] | float, what: str):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < -_NEG_TOL):
        raise NumericalError(f"negative variance estimate in {what}: {float(arr.min()):.3e}")
    out = np.maximum(arr, 0.0)
    return float(out) if out.ndim == 0 else out


def ve_inverse(est: FactorEstimate, cov: SparseCovEstimate | ArrayLike) -> NDArray[np.float64]:
    """``V_e^-1 = N^-1 V^-1 Lambda' Sigma^-1 Lambda V^-1`` with ``V = diag(eig_diag)``.

    ``cov`` is the covariance estimate whose inverse was used as weight, or
    the inverse covariance itself.
    """
    inv = cov.inverse if isinstance(cov, SparseCovEstimate) else np.asarray(cov, dtype=np.float64)
    if np.any(est.eig_diag <= 0):
        raise DefinitenessError("eigenvalue matrix V has a nonpositive entry")
    N = est.n_series
    Lam = est.loadings
    G = Lam.T @ inv @ Lam / N
    vinv = 1.0 / est.eig_diag
    return symmetrize(vinv[:, None] * G * vinv[None, :])


def hac_loading_variance(
    f_hat: ArrayLike, u_hat_j: ArrayLike, cfg: HacConfig | int | None = None, N: int | None = None
) -> NDArray[np.float64]:
    """Newey-West estimate of the long-run covariance of ``f_t u_jt``.

    ``Psi = T^-1 sum_t u_t^2 f_t f_t' + sum_{l=1}^K (1 - l/(K+1)) T^-1
    sum_{t>l} u_t u_{t-l} (f_t f_{t-l}' + f_{t-l} f_t')``.

    ``cfg`` may be a plain integer bandwidth. ``N`` only matters for the
    automatic bandwidth (defaults to ``T``).
    """
    F = np.asarray(f_hat, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    u = np.asarray(u_hat_j, dtype=np.float64).ravel()
    T = F.shape[0]
    if u.size != T:
        raise DimensionError("factor and residual series have different lengths")
    if cfg is None:
        cfg = HacConfig()
    elif isinstance(cfg, (int, np.integer)):
        cfg = HacConfig(int(cfg))
    K = cfg.resolve(T, T if N is None else N)
    if K >= T:
        raise BandwidthError(f"bandwidth K={K} must be smaller than T={T}")
    g = F * u[:, None]
    psi = g.T @ g / T
    for lag in range(1, K + 1):
        gamma = g[lag:].T @ g[:-lag] / T
        psi += (1.0 - lag / (K + 1.0)) * (gamma + gamma.T)
    return symmetrize(psi)


def variance_report(
    Y: PanelLike,
    est: FactorEstimate,
    cov: SparseCovEstimate,
    cfg: HacConfig | None = None,
) -> VarianceReport:
    """All variance pieces for an efficient WPC fit of ``Y``."""
    Yv = as_panel(Y)
    cfg = cfg if cfg is not None else HacConfig()
    N, T = Yv.shape
    K = cfg.resolve(T, N)
    if K >= T:
        raise BandwidthError(f"bandwidth K={K} must be smaller than T={T}")
    ve = ve_inverse(est, cov)
    U = residual_matrix(Yv, est)
    F = est.factors
    # all series at once: g[j, t, :] = f_t u_jt
    g = U[:, :, None] * F[None, :, :]
    psi = np.einsum("jta,jtb->jab", g, g) / T
    for lag in range(1, K + 1):
        gamma = np.einsum("jta,jtb->jab", g[:, lag:], g[:, :-lag]) / T
        psi += (1.0 - lag / (K + 1.0)) * (gamma + np.swapaxes(gamma, 1, 2))
    psi = 0.5 * (psi + np.swapaxes(psi, 1, 2))
    Lam = est.loadings
    theta1 = _clamp_nonneg(np.einsum("ia,ab,ib->i", Lam, ve, Lam), "theta1")
    theta2 = _clamp_nonneg(np.einsum("ta,iab,tb->it", F, psi, F), "theta2")
    return VarianceReport(ve, psi, theta1, theta2, K)


def common_component_interval(
    Y: PanelLike,
    est: FactorEstimate,
    cov: SparseCovEstimate,
    i: int,
    t: int,
    level: float = 0.95,
    cfg: HacConfig | None = None,
    report: VarianceReport | None = None,
) -> CommonComponentInterval:
    """Two-sided interval for the common component ``lambda_i' f_t``.

    ``half_width = z * sqrt(theta1_i / N + theta2_it / T)`` with ``z`` the
    ``(1 + level) / 2`` normal quantile. Pass a precomputed ``report`` to
    build many intervals from one fit.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    Yv = as_panel(Y)
    N, T = Yv.shape
    if not (0 <= i < N and 0 <= t < T):
        raise DimensionError(f"cell ({i}, {t}) outside a {N}x{T} panel")
    rep = report if report is not None else variance_report(Yv, est, cov, cfg)
    center = float(est.loadings[i] @ est.factors[t])
    th1 = float(rep.theta1[i])
    th2 = float(rep.theta2[i, t])
    z = normal_quantile(0.5 + 0.5 * level)
    half = z * math.sqrt(th1 / N + th2 / T)
    return CommonComponentInterval(center, half, th1, th2, level)


def xi_comparison(
    loadings: ArrayLike, sigma_u: ArrayLike, W: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64], float]:
    """Compare the common-component variance factor under weight ``W`` with the optimum.

    Returns ``(Xi_W, Xi_e, min_eig)`` where
    ``Xi_W = S^-1 (Lambda' W Sigma_u W Lambda / N) S^-1`` with
    ``S = Lambda' W Lambda / N``, ``Xi_e = (Lambda' Sigma_u^-1 Lambda / N)^-1``
    and ``min_eig`` is the smallest eigenvalue of ``Xi_W - Xi_e``.
    """
    Lam = np.asarray(loadings, dtype=np.float64)
    if Lam.ndim == 1:
        Lam = Lam[:, None]
    N, r = Lam.shape
    if np.linalg.matrix_rank(Lam) < r:
        raise RankError("loading matrix is rank deficient")
    Su = symmetrize(sigma_u)
    Wm = symmetrize(W)
    if Su.shape != (N, N) or Wm.shape != (N, N):
        raise DimensionError("sigma_u and W must be N x N")
    pd_inverse(Wm)
    Su_inv = pd_inverse(Su)
    WL = Wm @ Lam
    S_inv = pd_inverse(Lam.T @ WL / N)
    xi_w = symmetrize(S_inv @ (WL.T @ Su @ WL / N) @ S_inv)
    xi_e = pd_inverse(Lam.T @ Su_inv @ Lam / N)
    min_eig = float(np.linalg.eigvalsh(symmetrize(xi_w - xi_e))[0])
    return xi_w, xi_e, min_eig
