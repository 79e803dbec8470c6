"""Thresholded estimation of a sparse idiosyncratic covariance.

The residual covariance ``R`` left after removing the leading principal
components is shrunk entrywise off the diagonal with the entry-dependent
threshold ``tau_ij = C * sqrt(R_ii R_jj) * omega_T``; its diagonal is kept.
Soft-thresholding ``R`` with this ``tau`` is the same as soft-thresholding
the correlation matrix of ``R`` at level ``C * omega_T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DefinitenessError, DimensionError
from .factor import PanelLike, as_panel
from .numerics import min_eigenvalue, pd_inverse, sym_eigs, symmetrize

__all__ = [
    "ThresholdConfig",
    "SparseCovEstimate",
    "omega_T",
    "pc_residual_cov",
    "apply_rule",
    "threshold_matrix",
    "threshold_covariance",
    "threshold_from_pc",
    "sparsity_m",
    "remove_leading_components",
]

Rule = Literal["hard", "soft", "scad"]


def _default_grid() -> NDArray[np.float64]:
    return np.round(np.arange(1, 31) * 0.1, 10)


@dataclass(frozen=True)
class ThresholdConfig:
    """Thresholding rule and how the constant ``C`` is chosen.

    ``constant_C='auto'`` selects ``C`` from ``cv_grid`` by ``cv_folds``-fold
    contiguous-block cross-validation. Whatever ``C`` is selected, it is then
    raised along the grid until the estimate has minimum eigenvalue at least
    ``pd_epsilon``.
    """

    rule: Rule = "soft"
    constant_C: Union[float, Literal["auto"]] = "auto"
    cv_folds: int = 5
    cv_grid: tuple[float, ...] = field(default_factory=lambda: tuple(_default_grid()))
    pd_epsilon: float = 1e-6
    scad_a: float = 3.7

    def __post_init__(self) -> None:
        if self.rule not in ("hard", "soft", "scad"):
            raise ValueError(f"unknown thresholding rule {self.rule!r}")
        grid = np.asarray(self.cv_grid, dtype=np.float64)
        if grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
            raise ValueError("cv_grid must be nonempty, positive and strictly increasing")
        object.__setattr__(self, "cv_grid", tuple(float(g) for g in grid))
        if self.constant_C != "auto":
            c = float(self.constant_C)
            if not c > 0:
                raise ValueError("constant_C must be positive or 'auto'")
            object.__setattr__(self, "constant_C", c)
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.rule == "scad" and not self.scad_a > 2:
            raise ValueError("SCAD parameter a must exceed 2")
        if not self.pd_epsilon > 0:
            raise ValueError("pd_epsilon must be positive")


@dataclass(frozen=True, eq=False)
class SparseCovEstimate:
    """Thresholded covariance and its certified inverse.

    ``constant_C`` is the constant actually used (after any definiteness
    repair); ``cv_constant`` is the cross-validated choice before repair, or
    ``None`` when ``C`` was fixed. ``nonzero_count`` counts surviving
    off-diagonal pairs ``i < j``.
    """

    sigma: NDArray[np.float64]
    inverse: NDArray[np.float64]
    constant_C: float
    omega: float
    rule: str
    nonzero_count: int
    residual_cov: NDArray[np.float64] = field(repr=False)
    n_periods: int = 0
    cv_constant: float | None = None

    @property
    def thresholds(self) -> NDArray[np.float64]:
        """Entrywise thresholds ``tau_ij`` used for the off-diagonal."""
        d = np.diag(self.residual_cov)
        return self.constant_C * self.omega * np.sqrt(np.outer(d, d))


def omega_T(N: float, T: float) -> float:
    """Threshold rate ``sqrt(log N / T) + 1 / sqrt(N)`` (natural log)."""
    return math.sqrt(math.log(N) / T) + 1.0 / math.sqrt(N)


def apply_rule(z, tau, rule: Rule = "soft", a: float = 3.7):
    """Shrink ``z`` with threshold ``tau`` (both may be arrays, broadcast).

    hard: ``z * 1{|z| > tau}``; soft: ``sign(z) max(|z| - tau, 0)``; scad:
    soft below ``2 tau``, linear interpolation up to ``a tau``, identity
    beyond.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    t = np.asarray(tau, dtype=np.float64)
    az = np.abs(z_arr)
    if rule == "hard":
        out = np.where(az > t, z_arr, 0.0)
    elif rule == "soft":
        out = np.sign(z_arr) * np.maximum(az - t, 0.0)
    elif rule == "scad":
        soft = np.sign(z_arr) * np.maximum(az - t, 0.0)
        mid = ((a - 1.0) * z_arr - np.sign(z_arr) * a * t) / (a - 2.0)
        out = np.where(az <= 2.0 * t, soft, np.where(az <= a * t, mid, z_arr))
    else:
        raise ValueError(f"unknown thresholding rule {rule!r}")
    if np.ndim(out) == 0:
        return float(out)
    return out


def remove_leading_components(U: NDArray[np.float64], r: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Project the top-``r`` eigenvectors of ``U U' / T`` out of ``U``.

    Returns ``(U_perp, R)`` with ``R = U_perp U_perp' / T``, which equals
    ``U U' / T`` minus its leading ``r`` spectral terms.
    """
    N, T = U.shape
    if not 0 <= r < N:
        raise DimensionError(f"r={r} must satisfy 0 <= r < N={N}")
    S = U @ U.T / T
    if r == 0:
        return U, symmetrize(S)
    vals, vecs = sym_eigs(S, r)
    U_perp = U - vecs @ (vecs.T @ U)
    R = S - (vecs * vals) @ vecs.T
    return U_perp, symmetrize(R)


def pc_residual_cov(Y: PanelLike, r: int) -> NDArray[np.float64]:
    """Residual covariance ``R = S_y - sum_{i<=r} nu_i xi_i xi_i'``.

    ``S_y`` is the sample covariance of the columns of ``Y`` (demeaned over
    ``t``, divisor ``T``).
    """
    Yv = as_panel(Y)
    Yc = Yv - Yv.mean(axis=1, keepdims=True)
    return remove_leading_components(Yc, r)[1]


def threshold_matrix(R: ArrayLike, C: float, T: int, rule: Rule = "soft", a: float = 3.7) -> NDArray[np.float64]:
    """Apply the thresholding rule off the diagonal of ``R`` with constant ``C``."""
    Rm = symmetrize(R)
    N = Rm.shape[0]
    d = np.diag(Rm).copy()
    tau = C * omega_T(N, T) * np.sqrt(np.outer(d, d))
    S = apply_rule(Rm, tau, rule, a)
    S[np.diag_indices(N)] = d
    return 0.5 * (S + S.T)


def _cv_constant(U: NDArray[np.float64], cfg: ThresholdConfig) -> float:
    N, T = U.shape
    blocks = np.array_split(np.arange(T), cfg.cv_folds)
    grid = np.asarray(cfg.cv_grid)
    loss = np.zeros(grid.size)
    for b in blocks:
        mask = np.ones(T, dtype=bool)
        mask[b] = False
        U_tr, U_va = U[:, mask], U[:, ~mask]
        T_tr = U_tr.shape[1]
        R_tr = U_tr @ U_tr.T / T_tr
        R_va = U_va @ U_va.T / U_va.shape[1]
        for k, C in enumerate(grid):
            diff = threshold_matrix(R_tr, C, T_tr, cfg.rule, cfg.scad_a) - R_va
            loss[k] += np.sum(diff * diff)
    return float(grid[int(np.argmin(loss))])


def threshold_covariance(
    R: ArrayLike,
    T: int,
    cfg: ThresholdConfig | None = None,
    residuals: NDArray[np.float64] | None = None,
) -> SparseCovEstimate:
    """Threshold a residual covariance and certify the inverse.

    Parameters
    ----------
    R : array_like, shape (N, N)
        Residual covariance (diagonal is preserved).
    T : int
        Number of periods behind ``R``; sets ``omega_T``.
    cfg : ThresholdConfig
    residuals : ndarray, shape (N, T), optional
        Residual panel with ``R = residuals residuals' / T``. Required when
        ``cfg.constant_C == 'auto'``.
    """
    cfg = cfg if cfg is not None else ThresholdConfig()
    Rm = symmetrize(R)
    N = Rm.shape[0]
    if cfg.constant_C == "auto":
        if residuals is None:
            raise ValueError("cross-validated C needs the residual panel")
        if T < cfg.cv_folds + 1:
            raise DimensionError(f"T={T} too small for {cfg.cv_folds}-fold cross-validation")
        C0 = _cv_constant(np.asarray(residuals, dtype=np.float64), cfg)
        cv_constant: float | None = C0
    else:
        C0 = float(cfg.constant_C)
        cv_constant = None
    grid = np.asarray(cfg.cv_grid)
    candidates = [C0] + [float(g) for g in grid if g > C0 + 1e-12]
    sigma = None
    for C in candidates:
        S = threshold_matrix(Rm, C, T, cfg.rule, cfg.scad_a)
        if min_eigenvalue(S) >= cfg.pd_epsilon:
            sigma = S
            break
    if sigma is None:
        raise DefinitenessError(
            f"no threshold constant in [{candidates[0]:g}, {candidates[-1]:g}] gives a "
            f"covariance with minimum eigenvalue >= {cfg.pd_epsilon:g}"
        )
    inverse = pd_inverse(sigma)
    nnz = int(np.count_nonzero(np.triu(sigma, 1)))
    return SparseCovEstimate(
        sigma=sigma,
        inverse=inverse,
        constant_C=C,
        omega=omega_T(N, T),
        rule=cfg.rule,
        nonzero_count=nnz,
        residual_cov=Rm,
        n_periods=int(T),
        cv_constant=cv_constant,
    )


def threshold_from_pc(Y: PanelLike, r: int, cfg: ThresholdConfig | None = None) -> SparseCovEstimate:
    """Thresholded covariance of the residuals of an ``r``-factor PC fit."""
    Yv = as_panel(Y)
    N, T = Yv.shape
    Yc = Yv - Yv.mean(axis=1, keepdims=True)
    U, R = remove_leading_components(Yc, r)
    return threshold_covariance(R, T, cfg, residuals=U)


def sparsity_m(S: ArrayLike, q: float = 0.0) -> float:
    """Generalized sparsity ``max_i sum_j |S_ij|^q``; ``q = 0`` counts nonzeros."""
    if not 0.0 <= q < 0.5:
        raise ValueError("q must lie in [0, 0.5)")
    A = np.asarray(S, dtype=np.float64)
    if q == 0.0:
        return float(np.max(np.count_nonzero(A, axis=1)))
    return float(np.max(np.sum(np.abs(A) ** q, axis=1)))
