from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wpc.dataio import dumps_json
from wpc.exceptions import DimensionError, RankError
from wpc.factor import ewpc_fit
from wpc.sim import (
    McConfig,
    common_rmse,
    design1_sigma_u,
    format_table,
    gen_design1,
    gen_design2,
    records_csv,
    run_monte_carlo,
    run_replication,
    smallest_canonical_correlation,
    weighted_convergence_stat,
)


def _cca_qr_oracle(A, B):
    """Smallest singular value of Q_A' Q_B (independent route)."""
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    return float(np.linalg.svd(Qa.T @ Qb, compute_uv=False).min())


def test_sigma_u_closed_form_entries():
    truth = gen_design1(12, 5, 1)
    a, b, c = truth.ma_coefs
    S = truth.sigma_u
    # zero-based: u_k = eps_k + a[k-1] eps_{k-1} + b[k-2] eps_{k-2} + c[k-3] eps_{k-3}
    for k in range(3, 12):
        assert S[k, k] == pytest.approx(1 + a[k - 1] ** 2 + b[k - 2] ** 2 + c[k - 3] ** 2)
    for k in range(4, 12):
        expect = a[k - 1] + a[k - 2] * b[k - 2] + b[k - 3] * c[k - 3]
        assert S[k, k - 1] == pytest.approx(expect)
    assert S[0, 0] == 1.0 and S[1, 1] == pytest.approx(1 + a[0] ** 2)
    band = np.abs(np.subtract.outer(np.arange(12), np.arange(12)))
    assert np.all(S[band > 3] == 0.0)
    assert np.linalg.eigvalsh(S)[0] > 0
    np.testing.assert_array_equal(design1_sigma_u(truth.ma_coefs), S)


def test_sigma_u_long_run_empirical():
    N, T = 8, 100_000
    truth = gen_design1(N, T, 3)
    U = truth.U
    emp = U @ U.T / T
    S = truth.sigma_u
    # standard error of a sample second moment of jointly normal pairs
    se = np.sqrt((S**2 + np.outer(np.diag(S), np.diag(S))) / T)
    assert np.all(np.abs(emp - S) <= 3 * se + 1e-12)


def test_determinism_and_independence_of_streams():
    a, b = gen_design1(20, 10, 5), gen_design1(20, 10, 5)
    for f in ("Y", "loadings", "factors", "sigma_u", "U"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(gen_design1(20, 10, 6).Y, a.Y)
    p1, _ = gen_design2(20, 10, seed=5)
    p2, t2 = gen_design2(20, 10, seed=5)
    assert np.array_equal(p1.y, p2.y) and np.array_equal(p1.x, p2.x)
    # design 2 reuses design 1's draws for the same seed
    assert np.array_equal(t2.Y, a.Y)


def test_design_preconditions():
    with pytest.raises(DimensionError):
        gen_design1(3, 10, 0)
    with pytest.raises(DimensionError):
        gen_design2(10, 10, beta=(1.0,), seed=0)


def test_design2_zero_beta():
    p, truth = gen_design2(15, 12, beta=(0.0, 0.0), seed=2)
    np.testing.assert_array_equal(p.y, truth.Y)


def test_cca_examples():
    g = np.random.default_rng(0)
    A = g.standard_normal((10, 2))
    Q = g.standard_normal((2, 2)) + 2 * np.eye(2)
    assert smallest_canonical_correlation(A, A @ Q) == pytest.approx(1.0, abs=1e-10)
    Qfull, _ = np.linalg.qr(g.standard_normal((10, 4)))
    assert smallest_canonical_correlation(Qfull[:, :2], Qfull[:, 2:]) == pytest.approx(0.0, abs=1e-10)
    B = g.standard_normal((10, 2))
    assert smallest_canonical_correlation(A, B) == pytest.approx(_cca_qr_oracle(A, B), abs=1e-10)
    with pytest.raises(RankError):
        smallest_canonical_correlation(np.ones((10, 2)), B)
    with pytest.raises(DimensionError):
        smallest_canonical_correlation(A[:2], B[:2])


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_cca_matches_qr_oracle(seed, r):
    g = np.random.default_rng(seed)
    A, B = g.standard_normal((12, r)), g.standard_normal((12, r))
    rho = smallest_canonical_correlation(A, B)
    assert 0.0 <= rho <= 1.0
    assert rho == pytest.approx(_cca_qr_oracle(A, B), abs=1e-8)


def test_rmse_examples():
    g = np.random.default_rng(1)
    A, B = g.standard_normal((4, 6)), g.standard_normal((4, 6))
    assert common_rmse(A, A) == 0.0
    assert common_rmse(A + 0.3, A) == pytest.approx(0.3)
    total = 0.0
    for i in range(4):
        for t in range(6):
            total += (A[i, t] - B[i, t]) ** 2
    assert common_rmse(A, B) == pytest.approx(np.sqrt(total / 24), abs=1e-12)


def test_weighted_stat_trivial_and_homogeneous():
    g = np.random.default_rng(2)
    Lam, U = g.standard_normal((6, 2)), g.standard_normal((6, 9))
    S = np.eye(6) * 2.0
    D = g.standard_normal((6, 6))
    assert weighted_convergence_stat(Lam, S, S, U) == 0.0
    base = weighted_convergence_stat(Lam, S, S + D, U)
    assert weighted_convergence_stat(Lam, S, S + 3.5 * D, U) == pytest.approx(3.5 * base)


def test_mc_single_replication_equals_record():
    cfg = McConfig(design=1, N=40, T=30, replications=1, master_seed=9)
    rep = run_monte_carlo(cfg)
    recs = run_replication(cfg, 0)
    for rec in recs:
        agg = rep.aggregates[rec["estimator"]]
        for key in ("cc_loadings", "cc_factors", "rmse"):
            assert agg[key] == rec[key]


def test_mc_design2_aggregates():
    cfg = McConfig(design=2, N=30, T=20, replications=3, master_seed=1)
    rep = run_monte_carlo(cfg)
    wpc = rep.aggregates["WPC-panel"]
    assert wpc["n_ok"] + wpc["failures"] == 3
    assert len(wpc["relative_efficiency"]) == 2
    assert all(v >= 0 for v in wpc["normalized_se"])
    text = format_table([rep])
    assert "Normalized SE" in text and "WPC b2" in text
    csv_text = records_csv(rep)
    assert csv_text.splitlines()[0].startswith("rep,estimator,ok,beta_1")
    json.loads(dumps_json(rep.to_dict(include_records=True)))


def test_mc_failures_are_counted(monkeypatch):
    from wpc import sim
    from wpc.exceptions import DefinitenessError

    def boom(*args, **kwargs):
        raise DefinitenessError("forced")

    monkeypatch.setattr(sim, "ewpc_fit", boom)
    rep = run_monte_carlo(McConfig(design=1, N=30, T=20, replications=2))
    assert rep.aggregates["EWPC"]["failures"] == 2
    assert rep.aggregates["EWPC"]["n_ok"] == 0
    assert rep.aggregates["PC"]["failures"] == 0
    assert any("forced" in r.get("error", "") for r in rep.records)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        McConfig(replications=0)
    with pytest.raises(ValueError):
        McConfig(design=1, estimators=("WPC-panel",))
    assert McConfig(design=2).estimators == ("PC-panel", "WPC-panel")


def test_mc_determinism_across_jobs():
    cfg = McConfig(design=1, N=40, T=30, replications=4, master_seed=123)
    a = dumps_json(run_monte_carlo(cfg, jobs=1).to_dict(include_records=True))
    b = dumps_json(run_monte_carlo(cfg, jobs=3).to_dict(include_records=True))
    assert a == b


def test_mc_correlations_in_unit_interval():
    rep = run_monte_carlo(McConfig(design=1, N=50, T=30, replications=5))
    for rec in rep.records:
        assert 0.0 <= rec["cc_loadings"] <= 1.0 and 0.0 <= rec["cc_factors"] <= 1.0


def test_ewpc_weight_is_pd_on_design1():
    truth = gen_design1(60, 50, 8)
    _, cov = ewpc_fit(truth.Y, 2)
    assert np.linalg.eigvalsh(cov.sigma)[0] >= 1e-6 * (1 - 1e-9)
