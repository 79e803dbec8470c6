from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from wpc.exceptions import BandwidthError, NumericalError, RankError
from wpc.factor import FactorEstimate, WeightSpec, ewpc_fit, rotation_matrix
from wpc.inference import (
    HacConfig,
    VarianceReport,
    auto_bandwidth,
    common_component_interval,
    hac_loading_variance,
    normal_quantile,
    variance_report,
    ve_inverse,
    xi_comparison,
)
from wpc.sim import gen_design1, rng_for


def test_auto_bandwidth():
    assert auto_bandwidth(100, 100) == 2
    assert auto_bandwidth(100, 15) == 0
    assert auto_bandwidth(2, 2) == 0
    assert HacConfig().resolve(10_000, 81) == 2
    with pytest.raises(BandwidthError):
        HacConfig(-1).resolve(10, 10)


def test_normal_quantile_reference():
    # sqrt(2) * erfinv(0.95) to 20 digits (sympy): 1.9599639845400542355
    assert normal_quantile(0.975) == pytest.approx(1.9599639845400542, abs=1e-12)
    assert normal_quantile(0.5) == 0.0
    with pytest.raises(ValueError):
        normal_quantile(1.0)


def test_hac_k0_and_zero_residuals(rng):
    F = rng.standard_normal((50, 2))
    u = rng.standard_normal(50)
    expect = sum(u[t] ** 2 * np.outer(F[t], F[t]) for t in range(50)) / 50
    np.testing.assert_allclose(hac_loading_variance(F, u, 0), expect, atol=1e-14)
    np.testing.assert_array_equal(hac_loading_variance(F, np.zeros(50), 3), np.zeros((2, 2)))


def test_hac_loop_oracle(rng):
    T, K = 30, 3
    F = rng.standard_normal((T, 2))
    u = rng.standard_normal(T)
    psi = sum(u[t] ** 2 * np.outer(F[t], F[t]) for t in range(T)) / T
    for lag in range(1, K + 1):
        w = 1 - lag / (K + 1)
        for t in range(lag, T):
            psi += w * u[t] * u[t - lag] * (np.outer(F[t], F[t - lag]) + np.outer(F[t - lag], F[t])) / T
    np.testing.assert_allclose(hac_loading_variance(F, u, K), psi, atol=1e-13)


def test_hac_bandwidth_too_large(rng):
    with pytest.raises(BandwidthError):
        hac_loading_variance(rng.standard_normal((5, 1)), rng.standard_normal(5), 5)


def test_hac_large_t_independent():
    g = np.random.default_rng(99)
    T = 2000
    F = g.standard_normal((T, 2))
    u = g.standard_normal(T)
    a, b = hac_loading_variance(F, u, 0), hac_loading_variance(F, u, 3)
    assert np.linalg.norm(b - a) / np.linalg.norm(a) < 0.10


@given(st.integers(0, 2**32 - 1), st.integers(0, 8), st.integers(1, 3))
def test_hac_psd(seed, K, r):
    g = np.random.default_rng(seed)
    T = 20
    F = g.standard_normal((T, r))
    u = np.cumsum(g.standard_normal(T))  # strongly autocorrelated
    psi = hac_loading_variance(F, u, K)
    assert np.array_equal(psi, psi.T)
    assert np.linalg.eigvalsh(psi)[0] >= -1e-10


def _est(rng, N=4, r=1):
    F = rng.standard_normal((12, r))
    Lam = rng.standard_normal((N, r))
    return FactorEstimate(F, Lam, np.linspace(2.0, 1.0, r), WeightSpec.identity(N))


def test_ve_inverse_loop_oracle(rng):
    est = _est(rng)
    S_inv = random_spd(rng, 4)
    lam, v = est.loadings[:, 0], est.eig_diag[0]
    total = 0.0
    for i in range(4):
        for j in range(4):
            total += lam[i] * S_inv[i, j] * lam[j]
    assert ve_inverse(est, S_inv)[0, 0] == pytest.approx(total / (4 * v**2), rel=1e-12)


def test_ve_inverse_homogeneity_and_sign(rng):
    est = _est(rng, N=6, r=2)
    S_inv = random_spd(rng, 6)
    base = ve_inverse(est, S_inv)
    scaled = FactorEstimate(est.factors, 3.0 * est.loadings, est.eig_diag, est.weight)
    np.testing.assert_allclose(ve_inverse(scaled, S_inv), 9.0 * base, rtol=1e-12)
    flip = np.array([1.0, -1.0])
    flipped = FactorEstimate(est.factors * flip, est.loadings * flip, est.eig_diag, est.weight)
    np.testing.assert_allclose(np.abs(ve_inverse(flipped, S_inv)), np.abs(base), atol=1e-12)
    np.testing.assert_allclose(np.diag(ve_inverse(flipped, S_inv)), np.diag(base), atol=1e-12)


def test_variance_report_invariants():
    truth = gen_design1(60, 40, 1)
    est, cov = ewpc_fit(truth.Y, 2)
    rep = variance_report(truth.Y, est, cov)
    assert rep.bandwidth_K == auto_bandwidth(40, 60)
    assert np.linalg.eigvalsh(rep.ve_inv)[0] >= -1e-10
    assert all(np.linalg.eigvalsh(p)[0] >= -1e-10 for p in rep.psi)
    assert rep.theta1.min() >= 0 and rep.theta2.min() >= 0
    # per-series HAC agrees with the scalar routine
    u = truth.Y[5] - est.loadings[5] @ est.factors.T
    np.testing.assert_allclose(rep.psi[5], hac_loading_variance(est.factors, u, rep.bandwidth_K), atol=1e-12)
    ci = common_component_interval(truth.Y, est, cov, 5, 7, report=rep)
    assert ci.lower < ci.center < ci.upper
    z = normal_quantile(0.975)
    assert ci.half_width == pytest.approx(z * np.sqrt(rep.theta1[5] / 60 + rep.theta2[5, 7] / 40))


def test_interval_degenerates_with_zero_theta():
    truth = gen_design1(20, 15, 2)
    est, cov = ewpc_fit(truth.Y, 2)
    rep = VarianceReport(np.zeros((2, 2)), np.zeros((20, 2, 2)), np.zeros(20), np.zeros((20, 15)), 0)
    ci = common_component_interval(truth.Y, est, cov, 0, 0, report=rep)
    assert ci.half_width == 0.0 and ci.lower == ci.upper == ci.center


def test_negative_variance_is_an_error(rng):
    est = _est(rng, N=4, r=1)
    with pytest.raises(NumericalError):
        variance_report(rng.standard_normal((4, 12)), est, _neg_cov())


def _neg_cov():
    from wpc.sparsecov import SparseCovEstimate

    S = -np.eye(4)
    return SparseCovEstimate(S, S, 1.0, 0.1, "soft", 0, S)


def test_xi_equality_at_optimum(rng):
    Lam = rng.standard_normal((50, 2))
    Su = random_spd(rng, 50, 20.0)
    xi_w, xi_e, m = xi_comparison(Lam, Su, np.linalg.inv(Su))
    np.testing.assert_allclose(xi_w, xi_e, atol=1e-10)
    assert abs(m) <= 1e-10


def test_xi_white_noise(rng):
    Lam = rng.standard_normal((30, 3))
    xi_w, xi_e, _ = xi_comparison(Lam, np.eye(30), np.eye(30))
    expect = np.linalg.inv(Lam.T @ Lam / 30)
    np.testing.assert_allclose(xi_w, expect, atol=1e-12)
    np.testing.assert_allclose(xi_e, expect, atol=1e-12)


def test_xi_rank_error(rng):
    Lam = np.ones((10, 2))
    with pytest.raises(RankError):
        xi_comparison(Lam, np.eye(10), np.eye(10))


def test_xi_random_weights(rng):
    Lam = rng.standard_normal((50, 2))
    Su = random_spd(rng, 50, 30.0)
    for _ in range(20):
        _, _, m = xi_comparison(Lam, Su, random_spd(rng, 50, 100.0))
        assert m >= -1e-8


def test_ve_inverse_matches_monte_carlo_variance():
    # loadings, factors and Sigma_u fixed; only the MA innovations are redrawn
    N, T, reps = 300, 150, 200
    base = gen_design1(N, T, 31)
    dev, ve = [], []
    for k in range(reps):
        U = base.ma_matrix @ rng_for(31, 1000 + k).standard_normal((N, T))
        Y = base.common + U
        est, cov = ewpc_fit(Y, 2)
        H = rotation_matrix(est, base.factors, base.loadings)
        dev.append(est.factors - base.factors @ H.T)
        ve.append(np.diag(ve_inverse(est, cov)))
    mc = N * np.var(np.array(dev), axis=0, ddof=1).mean(axis=0)
    est_var = np.mean(ve, axis=0)
    print(f"Monte Carlo N*var {mc}, mean diag V_e^-1 {est_var}")
    np.testing.assert_allclose(est_var, mc, rtol=0.25)


def test_interval_width_shrinks():
    def median_width(n):
        w = []
        for k in range(50):
            truth = gen_design1(n, n, np.random.SeedSequence(41, spawn_key=(n, k)))
            est, cov = ewpc_fit(truth.Y, 2)
            rep = variance_report(truth.Y, est, cov)
            w.append(np.median(np.sqrt(rep.theta1[:, None] / n + rep.theta2 / n)))
        return float(np.median(w))

    small, large = median_width(100), median_width(200)
    print(f"median half-width factor: N=T=100 {small:.4f}, N=T=200 {large:.4f}")
    assert large < small
