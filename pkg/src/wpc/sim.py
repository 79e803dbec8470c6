"""Simulation designs, accuracy metrics and the Monte Carlo driver.

Design 1 is a two-factor model whose idiosyncratic errors are a moving
average across the cross-section, so ``Sigma_u`` is banded with three
nonzero off-diagonals and heteroskedastic. Design 2 adds two regressors that
load on the factors and loadings.

Randomness is keyed by ``(master_seed, replication, stream)`` through
``numpy.random.SeedSequence`` feeding a counter-based Philox generator, so
every replication is reproducible on its own and independent of execution
order.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DimensionError, RankError, WPCError
from .factor import common_components, ewpc_fit, hwpc_fit, pc_fit
from .panel import IterationConfig, PanelRegression, pc_panel_fit, wpc_panel_fit
from .sparsecov import ThresholdConfig

__all__ = [
    "Design1Truth",
    "rng_for",
    "gen_design1",
    "gen_design2",
    "design1_sigma_u",
    "smallest_canonical_correlation",
    "common_rmse",
    "weighted_convergence_stat",
    "McConfig",
    "McReport",
    "run_replication",
    "run_monte_carlo",
    "format_table",
    "records_csv",
]

log = logging.getLogger(__name__)

# stream ids inside one replication
_LOADINGS, _FACTORS, _COEFS, _EPS, _ETA = range(5)

SeedLike = Union[int, np.random.SeedSequence]


def rng_for(seed: SeedLike, *path: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an integer path (e.g. rep, stream)."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Design1Truth:
    """One draw of Design 1: data and every true parameter.

    ``ma_coefs`` stacks the MA coefficients ``(a, b, c)`` as a ``3 x N``
    array; ``ma_matrix`` is the lower-triangular ``B`` with ``U = B eps``.
    """

    Y: NDArray[np.float64]
    loadings: NDArray[np.float64]
    factors: NDArray[np.float64]
    sigma_u: NDArray[np.float64]
    U: NDArray[np.float64]
    ma_coefs: NDArray[np.float64]
    ma_matrix: NDArray[np.float64]

    @property
    def common(self) -> NDArray[np.float64]:
        return self.loadings @ self.factors.T


def _ma_matrix(a: NDArray[np.float64], b: NDArray[np.float64], c: NDArray[np.float64]) -> NDArray[np.float64]:
    # zero-based: u_k = eps_k + a[k-1] eps_{k-1} + b[k-2] eps_{k-2} + c[k-3] eps_{k-3}
    N = a.size
    B = np.eye(N)
    k = np.arange(N)
    B[k[1:], k[1:] - 1] = a[: N - 1]
    B[k[2:], k[2:] - 2] = b[: N - 2]
    B[k[3:], k[3:] - 3] = c[: N - 3]
    return B


def design1_sigma_u(ma_coefs: ArrayLike) -> NDArray[np.float64]:
    """Closed-form ``Sigma_u = B B'`` from the ``3 x N`` MA coefficients."""
    a, b, c = np.asarray(ma_coefs, dtype=np.float64)
    B = _ma_matrix(a, b, c)
    S = B @ B.T
    # exact zeros beyond the third off-diagonal
    S[np.abs(np.subtract.outer(np.arange(a.size), np.arange(a.size))) > 3] = 0.0
    return S


def gen_design1(N: int, T: int, seed: SeedLike, r: int = 2, ma_scale: float = 1.0) -> Design1Truth:
    """Draw Design 1: ``y_it = lambda_i' f_t + u_it``.

    Loadings are uniform on ``[0, 1]``, factors and ``eps`` standard normal,
    and the MA coefficients ``a_i, b_i, c_i`` standard normal, all redrawn
    for every seed. The first three series use the truncated recursions.

    ``ma_scale`` multiplies the MA coefficients (standard deviation of
    ``a_i, b_i, c_i``). The default 1 is the design as stated; smaller values
    weaken the cross-sectional dependence of the errors.
    """
    if N < 4 or T < 2:
        raise DimensionError("Design 1 needs N >= 4 and T >= 2")
    Lam = rng_for(seed, _LOADINGS).uniform(0.0, 1.0, size=(N, r))
    F = rng_for(seed, _FACTORS).standard_normal((T, r))
    if not ma_scale >= 0:
        raise ValueError("ma_scale must be nonnegative")
    coefs = ma_scale * rng_for(seed, _COEFS).standard_normal((3, N))
    eps = rng_for(seed, _EPS).standard_normal((N, T))
    B = _ma_matrix(*coefs)
    U = B @ eps
    Y = Lam @ F.T + U
    return Design1Truth(Y, Lam, F, design1_sigma_u(coefs), U, coefs, B)


def gen_design2(N: int, T: int, beta: ArrayLike = (1.0, 3.0), seed: SeedLike = 0, ma_scale: float = 1.0):
    """Draw Design 2: Design 1 plus two regressors correlated with the factors.

    ``X_1 = 2.5 l_1 f_1 - 0.2 l_2 f_2 - 1 + eta_1`` and
    ``X_2 = l_1 f_1 - 2 l_2 f_2 + 1 + eta_2``; ``y = X beta + Lambda F' + U``.

    Returns
    -------
    (PanelRegression, Design1Truth)
        The truth's ``Y`` is the factor-plus-error part ``Lambda F' + U``.
    """
    b = np.asarray(beta, dtype=np.float64)
    if b.shape != (2,):
        raise DimensionError("Design 2 has exactly two regressors")
    truth = gen_design1(N, T, seed, ma_scale=ma_scale)
    Lam, F = truth.loadings, truth.factors
    eta = rng_for(seed, _ETA).standard_normal((2, N, T))
    g1 = np.outer(Lam[:, 0], F[:, 0])
    g2 = np.outer(Lam[:, 1], F[:, 1])
    X = np.empty((N, T, 2))
    X[:, :, 0] = 2.5 * g1 - 0.2 * g2 - 1.0 + eta[0]
    X[:, :, 1] = g1 - 2.0 * g2 + 1.0 + eta[1]
    y = X @ b + truth.Y
    return PanelRegression(y, X), truth


def smallest_canonical_correlation(A: ArrayLike, B: ArrayLike) -> float:
    """Smallest canonical correlation between the column spaces of ``A`` and ``B``.

    The squared canonical correlations are the eigenvalues of
    ``(A'A)^-1 A'B (B'B)^-1 B'A``, solved here in the symmetric form
    ``L^-1 A'B (B'B)^-1 B'A L^-T`` with ``A'A = L L'``. Columns are not
    centered. The result is clamped to ``[0, 1]``.
    """
    Am = np.asarray(A, dtype=np.float64)
    Bm = np.asarray(B, dtype=np.float64)
    if Am.ndim == 1:
        Am = Am[:, None]
    if Bm.ndim == 1:
        Bm = Bm[:, None]
    n = Am.shape[0]
    if Bm.shape[0] != n:
        raise DimensionError("A and B must have the same number of rows")
    if n <= max(Am.shape[1], Bm.shape[1]):
        raise DimensionError("need more rows than columns")
    for M, name in ((Am, "A"), (Bm, "B")):
        if np.linalg.matrix_rank(M) < M.shape[1]:
            raise RankError(f"{name} is rank deficient")
    L = np.linalg.cholesky(Am.T @ Am)
    AB = Am.T @ Bm
    inner = AB @ np.linalg.solve(Bm.T @ Bm, AB.T)
    Linv_inner = np.linalg.solve(L, inner)
    M = np.linalg.solve(L, Linv_inner.T).T
    M = 0.5 * (M + M.T)
    rho2 = np.linalg.eigvalsh(M)[0]
    rho = float(np.sqrt(max(rho2, 0.0)))
    if rho > 1.0 + 1e-8 or rho2 < -1e-8:
        raise AssertionError(f"canonical correlation {rho} needed a clamp larger than 1e-8")
    return min(max(rho, 0.0), 1.0)


def common_rmse(est_cc: ArrayLike, true_cc: ArrayLike) -> float:
    """Root mean squared entrywise difference of two common-component matrices."""
    E = np.asarray(est_cc, dtype=np.float64)
    G = np.asarray(true_cc, dtype=np.float64)
    if E.shape != G.shape:
        raise DimensionError("common components are not conformable")
    return float(np.sqrt(np.mean((E - G) ** 2)))


def weighted_convergence_stat(
    loadings: ArrayLike, inv_true: ArrayLike, inv_est: ArrayLike, U: ArrayLike
) -> float:
    """Mean over ``t`` of ``|| N^-1/2 Lambda' (inv_est - inv_true) u_t ||``."""
    Lam = np.asarray(loadings, dtype=np.float64)
    D = np.asarray(inv_est, dtype=np.float64) - np.asarray(inv_true, dtype=np.float64)
    Um = np.asarray(U, dtype=np.float64)
    N = Lam.shape[0]
    V = Lam.T @ (D @ Um) / np.sqrt(N)
    return float(np.mean(np.linalg.norm(V, axis=0)))


ESTIMATORS_D1 = ("PC", "HWPC", "EWPC")
ESTIMATORS_D2 = ("PC-panel", "WPC-panel")


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo configuration.

    ``estimators`` defaults to every estimator of the chosen design. ``jobs``
    only affects wall time, never the report.
    """

    design: int = 1
    N: int = 150
    T: int = 100
    replications: int = 100
    master_seed: int = 0
    estimators: tuple[str, ...] | None = None
    beta_true: tuple[float, ...] = (1.0, 3.0)
    r: int = 2
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    iteration: IterationConfig = field(default_factory=IterationConfig)
    ma_scale: float = 1.0
    level: float = 0.95

    def __post_init__(self) -> None:
        if self.design not in (1, 2):
            raise ValueError("design must be 1 or 2")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        allowed = ESTIMATORS_D1 if self.design == 1 else ESTIMATORS_D2
        est = allowed if self.estimators is None else tuple(self.estimators)
        bad = [e for e in est if e not in allowed]
        if bad or not est:
            raise ValueError(f"estimators {bad or est} not available for design {self.design}; choose from {allowed}")
        object.__setattr__(self, "estimators", est)
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        if self.iteration.r != self.r:
            object.__setattr__(self, "iteration", replace(self.iteration, r=self.r))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        d["beta_true"] = list(self.beta_true)
        d["threshold"]["cv_grid"] = list(self.threshold.cv_grid)
        return d


@dataclass(frozen=True, eq=False)
class McReport:
    """Aggregated Monte Carlo results.

    ``aggregates`` maps each estimator to its summary. Design 1 keys:
    ``cc_loadings``, ``cc_factors``, ``rmse`` (means over successful
    replications). Design 2 keys: ``beta_mean``, ``beta_sd``,
    ``normalized_se`` (sample SD times ``sqrt(NT)``), ``se_mean_normalized``
    (mean reported SE times ``sqrt(NT)``), ``coverage``, and for
    ``WPC-panel`` also ``relative_efficiency`` = var(WPC) / var(PC).
    Every summary carries ``n_ok`` and ``failures``.
    """

    config: McConfig
    aggregates: dict[str, dict[str, Any]]
    records: tuple[dict[str, Any], ...] = field(repr=False)

    def to_dict(self, include_records: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {"config": self.config.to_dict(), "aggregates": self.aggregates}
        if include_records:
            out["records"] = list(self.records)
        return out


def _rep_seed(master: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(rep),))


def _failure(rep: int, name: str, exc: BaseException) -> dict[str, Any]:
    return {"rep": rep, "estimator": name, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_design1(cfg: McConfig, rep: int) -> list[dict[str, Any]]:
    truth = gen_design1(cfg.N, cfg.T, _rep_seed(cfg.master_seed, rep), r=cfg.r, ma_scale=cfg.ma_scale)
    common = truth.common
    out = []
    for name in cfg.estimators:
        try:
            if name == "PC":
                est = pc_fit(truth.Y, cfg.r)
            elif name == "HWPC":
                est = hwpc_fit(truth.Y, cfg.r)
            else:
                est = ewpc_fit(truth.Y, cfg.r, cfg.threshold)[0]
            out.append(
                {
                    "rep": rep,
                    "estimator": name,
                    "ok": True,
                    "cc_loadings": smallest_canonical_correlation(est.loadings, truth.loadings),
                    "cc_factors": smallest_canonical_correlation(est.factors, truth.factors),
                    "rmse": common_rmse(common_components(est), common),
                }
            )
        except (WPCError, np.linalg.LinAlgError) as exc:
            out.append(_failure(rep, name, exc))
    return out


def _run_design2(cfg: McConfig, rep: int) -> list[dict[str, Any]]:
    p, _ = gen_design2(cfg.N, cfg.T, cfg.beta_true, _rep_seed(cfg.master_seed, rep), ma_scale=cfg.ma_scale)
    truth = np.asarray(cfg.beta_true)
    out = []
    pc = None
    pc_exc: BaseException | None = None
    try:
        pc = pc_panel_fit(p, cfg.iteration)
    except (WPCError, np.linalg.LinAlgError) as exc:
        pc_exc = exc
    for name in cfg.estimators:
        try:
            if pc is None:
                raise pc_exc  # type: ignore[misc]
            fit = pc if name == "PC-panel" else wpc_panel_fit(p, cfg.iteration, cfg.threshold, initial=pc)
            ci = fit.conf_int(cfg.level)
            out.append(
                {
                    "rep": rep,
                    "estimator": name,
                    "ok": True,
                    "beta": fit.beta.tolist(),
                    "se": fit.se.tolist(),
                    "covered": ((ci[:, 0] <= truth) & (truth <= ci[:, 1])).tolist(),
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                }
            )
        except (WPCError, np.linalg.LinAlgError) as exc:
            out.append(_failure(rep, name, exc))
    return out


def run_replication(cfg: McConfig, rep: int) -> list[dict[str, Any]]:
    """All estimator records for replication ``rep`` (pure function of its inputs)."""
    return _run_design1(cfg, rep) if cfg.design == 1 else _run_design2(cfg, rep)


def _aggregate(cfg: McConfig, records: list[dict[str, Any]]) -> dict[str, dict[str, Any]]:
    agg: dict[str, dict[str, Any]] = {}
    nt_root = math.sqrt(cfg.N * cfg.T)
    for name in cfg.estimators:
        rows = [r for r in records if r["estimator"] == name]
        ok = [r for r in rows if r["ok"]]
        summary: dict[str, Any] = {"n_ok": len(ok), "failures": len(rows) - len(ok)}
        if cfg.design == 1:
            for key in ("cc_loadings", "cc_factors", "rmse"):
                summary[key] = float(np.mean([r[key] for r in ok])) if ok else float("nan")
        else:
            B = np.array([r["beta"] for r in ok], dtype=np.float64).reshape(len(ok), -1)
            S = np.array([r["se"] for r in ok], dtype=np.float64).reshape(len(ok), -1)
            cov = np.array([r["covered"] for r in ok], dtype=np.float64).reshape(len(ok), -1)
            sd = B.std(axis=0, ddof=1) if len(ok) > 1 else np.full(B.shape[1], np.nan)
            summary.update(
                beta_mean=B.mean(axis=0).tolist() if ok else [],
                beta_sd=sd.tolist(),
                normalized_se=(sd * nt_root).tolist(),
                se_mean_normalized=(S.mean(axis=0) * nt_root).tolist() if ok else [],
                coverage=cov.mean(axis=0).tolist() if ok else [],
                not_converged=int(sum(not r["converged"] for r in ok)),
            )
        agg[name] = summary
    if cfg.design == 2 and "PC-panel" in agg and "WPC-panel" in agg:
        v_pc = np.asarray(agg["PC-panel"]["beta_sd"]) ** 2
        v_w = np.asarray(agg["WPC-panel"]["beta_sd"]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            agg["WPC-panel"]["relative_efficiency"] = (v_w / v_pc).tolist()
    return agg


def run_monte_carlo(cfg: McConfig, jobs: int | None = 1) -> McReport:
    """Run ``cfg.replications`` replications and aggregate them.

    Replication ``k`` draws from ``SeedSequence(master_seed, spawn_key=(k,))``.
    With ``jobs > 1`` replications run in worker processes; results are
    folded in replication order, so the report does not depend on ``jobs``.
    Estimator failures are kept as records and counted, never resampled.
    """
    reps = range(cfg.replications)
    n_jobs = (os.cpu_count() or 1) if jobs is None else int(jobs)
    if n_jobs > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, cfg.replications)) as pool:
            per_rep = list(pool.map(run_replication, [cfg] * cfg.replications, reps))
    else:
        per_rep = [run_replication(cfg, k) for k in reps]
    records = [rec for batch in per_rep for rec in batch]
    for rec in records:
        if not rec["ok"]:
            log.warning("replication %d, %s failed: %s", rec["rep"], rec["estimator"], rec["error"])
    return McReport(cfg, _aggregate(cfg, records), tuple(records))


def _fmt(x: float, width: int = 7) -> str:
    return f"{x:>{width}.3f}"


def format_table(reports: list[McReport]) -> str:
    """Aligned plain-text table, one row per ``(T, N)`` cell.

    Design 1: loadings and factors canonical correlations and RMSE for each
    estimator. Design 2: mean and normalized SE of each coefficient.
    """
    if not reports:
        return ""
    design = reports[0].config.design
    if any(r.config.design != design for r in reports):
        raise ValueError("cannot mix designs in one table")
    ests = reports[0].config.estimators
    if design == 1:
        groups = [("Loadings", "cc_loadings"), ("Factors", "cc_factors"), ("RMSE", "rmse")]
        w = 8 * len(ests)
        head1 = f"{'T':>5} {'N':>5} | " + " | ".join(f"{g:^{w - 1}}" for g, _ in groups)
        head2 = f"{'':>5} {'':>5} | " + " | ".join("".join(f"{e:>8}" for e in ests)[1:] for _ in groups)
        lines = [head1, head2, "-" * len(head2)]
        for rep in reports:
            c = rep.config
            cells = [
                "".join(" " + _fmt(rep.aggregates[e][key]) for e in ests)[1:] for _, key in groups
            ]
            lines.append(f"{c.T:>5} {c.N:>5} | " + " | ".join(cells))
        return "\n".join(lines)
    d = len(reports[0].config.beta_true)
    cols = [(e, k) for e in ests for k in range(d)]
    labels = "".join(f"{e.split('-')[0] + ' b' + str(k + 1):>10}" for e, k in cols)
    w = len(labels)
    head1 = f"{'T':>5} {'N':>5} | {'Mean':^{w}} | {'Normalized SE':^{w}}"
    head2 = f"{'':>5} {'':>5} | {labels} | {labels}"
    lines = [head1, head2, "-" * len(head2)]
    for rep in reports:
        c = rep.config
        mean = "".join(f"{rep.aggregates[e]['beta_mean'][k]:>10.3f}" for e, k in cols)
        nse = "".join(f"{rep.aggregates[e]['normalized_se'][k]:>10.3f}" for e, k in cols)
        lines.append(f"{c.T:>5} {c.N:>5} | {mean} | {nse}")
    return "\n".join(lines)


def records_csv(report: McReport) -> str:
    """Per-replication records as CSV text (vector fields split by index)."""
    rows = []
    for rec in report.records:
        row: dict[str, Any] = {}
        for key, val in rec.items():
            if isinstance(val, list):
                for k, v in enumerate(val):
                    row[f"{key}_{k + 1}"] = v
            else:
                row[key] = val
        rows.append(row)
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
