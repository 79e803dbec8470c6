"""Command-line front end.

Subcommands: ``factor``, ``cov``, ``panel``, ``select-rank``, ``simulate``.
Exit status is 0 on success, 1 on user error (bad flags or input) and 2 on
numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dataio import dumps_json, read_matrix_csv, read_panel_csv, write_matrix_csv
from .exceptions import NumericalError, WPCError
from .factor import ewpc_fit, hwpc_fit, pc_fit
from .inference import HacConfig, variance_report
from .panel import (
    IterationConfig,
    PanelRegression,
    detrend_project,
    double_demean,
    pc_panel_fit,
    rank_criteria,
    wpc_panel_fit,
)
from .sim import McConfig, format_table, records_csv, run_monte_carlo
from .sparsecov import SparseCovEstimate, ThresholdConfig, threshold_from_pc

__all__ = ["main", "build_parser"]

log = logging.getLogger("wpc")


class UsageError(Exception):
    """Bad command-line usage (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _rank_arg(text: str) -> int | str:
    if text == "auto":
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("rank must be a nonnegative integer or 'auto'") from None
    if k < 0:
        raise argparse.ArgumentTypeError("rank must be nonnegative")
    return k


def _hac_arg(text: str) -> int | str:
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--hac-k must be an integer or 'auto'") from None


def _threshold_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("thresholding")
    g.add_argument("--threshold-c", default="auto", help="threshold constant C, or 'auto' for cross-validation")
    g.add_argument("--threshold-rule", choices=("hard", "soft", "scad"), default="soft")
    g.add_argument("--cv-folds", type=int, default=5)
    g.add_argument("--pd-epsilon", type=float, default=1e-6)


def _iteration_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("iteration")
    g.add_argument("--tol", type=float, default=1e-7)
    g.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wpc", description="Weighted principal components for factor and panel models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("factor", help="fit a factor model to an N x T panel")
    f.add_argument("--input", required=True, help="CSV, rows = series, columns = periods")
    f.add_argument("--rank", type=_rank_arg, required=True, help="number of factors")
    f.add_argument("--weight", choices=("pc", "hwpc", "ewpc"), default="ewpc")
    f.add_argument("--hac-k", type=_hac_arg, default="auto", help="Newey-West bandwidth")
    f.add_argument("--out", help="output JSON path (default stdout)")
    _threshold_args(f)

    c = sub.add_parser("cov", help="thresholded idiosyncratic covariance of a panel")
    c.add_argument("--input", required=True)
    c.add_argument("--rank", type=_rank_arg, required=True)
    c.add_argument("--format", choices=("json", "csv"), default="json", help="csv writes the matrix only")
    c.add_argument("--out")
    _threshold_args(c)

    for name, helptext in (("panel", "panel regression with interactive effects"), ("select-rank", "choose the number of factors")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--y", required=True, help="outcome CSV (N x T)")
        p.add_argument("--x", required=True, help="comma-separated regressor CSVs, one per regressor")
        p.add_argument("--max-rank", type=int, default=6)
        p.add_argument("--criterion", type=str.upper, choices=("IC", "CP"), default="IC")
        p.add_argument("--demean", choices=("none", "two-way"), default="none")
        p.add_argument("--detrend", type=int, default=0, metavar="DEGREE", help="remove t, ..., t^DEGREE trends")
        p.add_argument("--out")
        _iteration_args(p)
        if name == "panel":
            p.add_argument("--rank", type=_rank_arg, default="auto")
            p.add_argument("--method", choices=("wpc", "pc"), default="wpc")
            p.add_argument("--level", type=float, default=0.95)
            _threshold_args(p)

    s = sub.add_parser("simulate", help="Monte Carlo study of Design 1 or 2")
    s.add_argument("--design", type=int, choices=(1, 2), default=1)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    s.add_argument("--estimators", help="comma-separated subset, e.g. PC,EWPC")
    s.add_argument("--beta", default="1,3", help="true coefficients for design 2")
    s.add_argument("--ma-scale", type=float, default=1.0, help="scale of the error MA coefficients")
    s.add_argument("--format", choices=("json", "table"), default="json")
    s.add_argument("--raw-csv", help="also write per-replication records to this CSV")
    s.add_argument("--out")
    _threshold_args(s)
    _iteration_args(s)
    return parser


def _threshold_cfg(a: argparse.Namespace) -> ThresholdConfig:
    C: Any = a.threshold_c
    if C != "auto":
        try:
            C = float(C)
        except ValueError:
            raise UsageError("--threshold-c must be a number or 'auto'") from None
    return ThresholdConfig(rule=a.threshold_rule, constant_C=C, cv_folds=a.cv_folds, pd_epsilon=a.pd_epsilon)


def _cov_summary(cov: SparseCovEstimate) -> dict[str, Any]:
    return {
        "constant_C": cov.constant_C,
        "cv_constant": cov.cv_constant,
        "omega": cov.omega,
        "rule": cov.rule,
        "nonzero_offdiag_pairs": cov.nonzero_count,
        "n_periods": cov.n_periods,
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _require_rank(a: argparse.Namespace) -> int:
    if a.rank == "auto":
        raise UsageError("--rank auto is only available for panel; give an integer")
    return int(a.rank)


def _cmd_factor(a: argparse.Namespace, echo: dict[str, Any]) -> None:
    Y = read_panel_csv(a.input)
    r = _require_rank(a)
    result: dict[str, Any] = {"config": echo, "N": Y.n_series, "T": Y.n_periods}
    if a.weight == "pc":
        est = pc_fit(Y, r)
    elif a.weight == "hwpc":
        est = hwpc_fit(Y, r)
    else:
        est, cov = ewpc_fit(Y, r, _threshold_cfg(a))
        rep = variance_report(Y, est, cov, HacConfig(a.hac_k))
        result["covariance"] = _cov_summary(cov)
        result["variance"] = {
            "bandwidth_K": rep.bandwidth_K,
            "ve_inv": rep.ve_inv,
            "theta1": rep.theta1,
            "theta2": rep.theta2,
        }
    result.update(eig_diag=est.eig_diag, factors=est.factors, loadings=est.loadings)
    _emit(dumps_json(result), a.out)


def _cmd_cov(a: argparse.Namespace, echo: dict[str, Any]) -> None:
    Y = read_panel_csv(a.input)
    cov = threshold_from_pc(Y, _require_rank(a), _threshold_cfg(a))
    if a.format == "csv":
        if not a.out:
            raise UsageError("--format csv needs --out")
        write_matrix_csv(a.out, cov.sigma)
        return
    _emit(dumps_json({"config": echo, **_cov_summary(cov), "sigma": cov.sigma}), a.out)


def _load_regression(a: argparse.Namespace) -> PanelRegression:
    y = read_matrix_csv(a.y)
    paths = [s for s in a.x.split(",") if s]
    if not paths:
        raise UsageError("--x needs at least one CSV")
    xs = [read_matrix_csv(p) for p in paths]
    for p, x in zip(paths, xs):
        if x.shape != y.shape:
            raise UsageError(f"{p} has shape {x.shape}, outcome has {y.shape}")
    X = np.stack(xs, axis=2)
    if a.demean == "two-way":
        y, X = double_demean(y), double_demean(X)
    if a.detrend:
        y, X = detrend_project(y, a.detrend), detrend_project(X, a.detrend)
    return PanelRegression(y, X)


def _cmd_select_rank(a: argparse.Namespace, echo: dict[str, Any], p: PanelRegression | None = None) -> dict[str, Any]:
    p = p if p is not None else _load_regression(a)
    table = rank_criteria(p, a.max_rank, IterationConfig(tol=a.tol, max_iter=a.max_iter))
    k = int(np.argmin(table[a.criterion]))
    out = {"config": echo, "criterion": a.criterion, "selected_rank": k, **table}
    if a.command == "select-rank":
        _emit(dumps_json(out), a.out)
    return out


def _cmd_panel(a: argparse.Namespace, echo: dict[str, Any]) -> None:
    p = _load_regression(a)
    result: dict[str, Any] = {"config": echo, "N": p.N, "T": p.T, "d": p.d}
    if a.rank == "auto":
        sel = _cmd_select_rank(a, echo, p)
        r = sel["selected_rank"]
        result["rank_selection"] = {k: v for k, v in sel.items() if k != "config"}
    else:
        r = int(a.rank)
    cfg = IterationConfig(r=r, tol=a.tol, max_iter=a.max_iter)
    fit = pc_panel_fit(p, cfg)
    if a.method == "wpc":
        fit = wpc_panel_fit(p, cfg, _threshold_cfg(a), initial=fit)
        result["covariance"] = _cov_summary(fit.cov)
    result.update(
        method=fit.method,
        rank=r,
        beta=fit.beta,
        se=fit.se,
        conf_int=fit.conf_int(a.level),
        level=a.level,
        gamma=fit.gamma,
        iterations=fit.iterations,
        converged=fit.converged,
    )
    _emit(dumps_json(result), a.out)


def _cmd_simulate(a: argparse.Namespace, echo: dict[str, Any]) -> None:
    try:
        beta = tuple(float(b) for b in a.beta.split(","))
    except ValueError:
        raise UsageError("--beta must be comma-separated numbers") from None
    cfg = McConfig(
        design=a.design,
        N=a.n,
        T=a.t,
        replications=a.reps,
        master_seed=a.seed,
        estimators=tuple(a.estimators.split(",")) if a.estimators else None,
        beta_true=beta,
        threshold=_threshold_cfg(a),
        iteration=IterationConfig(tol=a.tol, max_iter=a.max_iter),
        ma_scale=a.ma_scale,
    )
    report = run_monte_carlo(cfg, jobs=a.jobs)
    if a.raw_csv:
        Path(a.raw_csv).write_text(records_csv(report), encoding="utf-8")
    if a.format == "table":
        _emit(format_table([report]), a.out)
    else:
        body = report.to_dict()
        body["mc_config"] = body.pop("config")
        _emit(dumps_json({"config": echo, **body}), a.out)


_COMMANDS = {
    "factor": _cmd_factor,
    "cov": _cmd_cov,
    "panel": _cmd_panel,
    "select-rank": _cmd_select_rank,
    "simulate": _cmd_simulate,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run the subcommand; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    echo = {k: v for k, v in vars(args).items() if k != "verbose"}
    if getattr(args, "jobs", 0) is None:
        echo["jobs"] = os.cpu_count() or 1
    try:
        _COMMANDS[args.command](args, echo)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        detail = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("pivot", "iterations", "series"):
            if getattr(exc, attr, None) is not None:
                detail[attr] = getattr(exc, attr)
        print(f"numerical failure: {dumps_json(detail)}", file=sys.stderr)
        return 2
    except (UsageError, WPCError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
