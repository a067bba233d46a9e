from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from furstenberg_lab import estimators as est
from furstenberg_lab.measures import (
    MatrixMeasure,
    ProductBatch,
    diag_rotation_measure,
    reference_measure,
    rotation_measure,
    sample_batch,
)
from furstenberg_lab.projective import ConfigurationError, Mat2
from furstenberg_lab.transfer import zeta_solver

E_ATOM = MatrixMeasure.uniform([Mat2.diag(math.e)])


def synthetic_table(alphas, i2, n=10, eps=0.05):
    alphas = np.asarray(alphas, dtype=float)
    I = np.asarray(i2, dtype=float)[:, None]
    z = np.zeros_like(I)
    return est.RateTable(alphas, np.array([2.0]), z.astype(int), np.exp(I * n), I, z, z, 1, n, eps,
                         None, True, True)


# --- Lyapunov and k(t) -----------------------------------------------------

def test_lyapunov_rotations_zero():
    r = est.estimate_lyapunov(rotation_measure(), 10, 1000, 0)
    assert abs(r.value) <= 1e-12 and r.std_err <= 1e-15


def test_lyapunov_diagonal_atom():
    r = est.estimate_lyapunov(E_ATOM, 10, 100, 0)
    assert r.value == pytest.approx(1.0, abs=1e-12) and r.std_err == 0.0


def test_lyapunov_classical_finite_n_law():
    # |g_1...g_n| = 2^|S_n| for a walk S_n with variance ~ n, so the mean of
    # (1/n) log |g| is log(2) sqrt(2 / (pi n)) + O(1/n) and tends to zero
    c = math.log(2) * math.sqrt(2 / math.pi)
    prev = math.inf
    for n in (200, 800, 3200):
        r = est.estimate_lyapunov(diag_rotation_measure(), n, 20_000, 3)
        assert abs(r.value - c / math.sqrt(n)) <= 3 * r.std_err + 1.0 / n
        assert r.value < prev
        prev = r.value


def test_lyapunov_below_alpha_bar():
    mu = reference_measure()
    assert est.estimate_lyapunov(mu, 20, 5000, 1).value <= mu.alpha_bar


def test_kt_oracles():
    mu = reference_measure()
    assert est.estimate_kt(mu, 0.0, 10, 100, 0) == (0.0, 0.0, "exact")
    for t in (-0.7, -0.2, 0.4):
        k, se, side = est.estimate_kt(E_ATOM, t, 12, 50, 0)
        assert k == pytest.approx(t, abs=1e-12)
        assert side == ("lower" if t < 0 else "upper")
        assert abs(est.estimate_kt(rotation_measure(), t, 12, 50, 0)[0]) <= 1e-12


def test_kt_overflow_guard():
    k, _ = est.kt_from_log_norms(np.array([1e4, 1e4 + 1.0]), 5.0, 10)
    assert math.isfinite(k)
    with pytest.raises(est.EstimatorError, match="degenerate sample"):
        est.kt_from_log_norms(np.array([np.inf, np.inf]), -1.0, 1)


def test_kt_curve_zero_and_brackets():
    c = est.estimate_kt_curve(reference_measure(), [-0.3, 0.0, 0.3], 8, 1000, 0)
    assert c.k_hat[1] == 0.0
    assert c.bracket_side == ["lower", "exact", "upper"]


@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(0, 20)),
       st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3, unique=True))
def test_kt_convex_on_fixed_sample(logs, ts):
    t = sorted(ts)
    if min(np.diff(t)) < 1e-3:
        return
    k = [est.kt_from_log_norms(logs, s, 5)[0] for s in t]
    lam = (t[2] - t[1]) / (t[2] - t[0])
    assert k[1] <= lam * k[0] + (1 - lam) * k[2] + 1e-9


# --- Legendre and thresholds -----------------------------------------------

def test_legendre_linear_curve():
    ts = np.linspace(-1, 1, 21)
    curve = est.KtCurve(ts, ts, np.zeros_like(ts), 1, 1)
    v = est.legendre_rate(curve, 1.0)
    assert v.value == pytest.approx(0.0, abs=1e-15)
    w = est.legendre_rate(curve, 0.5)
    assert w.edge_limited and w.t_argmin == -1.0


def test_legendre_flat_curve():
    ts = np.linspace(-1, 1, 5)
    curve = est.KtCurve(ts, np.zeros(5), np.zeros(5), 1, 1)
    assert est.legendre_rate(curve, 0.0).value == 0.0


def test_legendre_tangent_at_lyapunov():
    mu = reference_measure()
    b = sample_batch(mu, 16, 20_000, 0, directions=False)
    L = est.estimate_lyapunov(mu, 16, 20_000, 0, batch=b).value
    curve = est.estimate_kt_curve(mu, np.linspace(-0.5, 0.5, 41), 16, 20_000, 0, batch=b)
    v = est.legendre_rate(curve, L)
    assert abs(v.value) <= 2 * max(curve.std_err.max(), 1e-12)


def test_t0_examples():
    ts = np.linspace(-1, 0, 21)
    lin = est.KtCurve(ts, ts, np.zeros_like(ts), 1, 1)
    assert est.estimate_t0(lin, -math.inf).flag == "not detected"
    kink = est.KtCurve(ts, np.maximum(ts, -0.5), np.zeros_like(ts), 1, 1)
    th = est.estimate_t0(kink, -0.5)
    assert th.flag == "ok" and abs(th.value + 0.5) <= 0.05 + 1e-12


def test_tc_examples():
    ts = np.linspace(-1, 0, 11)
    curve = est.KtCurve(ts, ts, np.zeros_like(ts), 1, 1)
    th = est.estimate_tc(curve, synthetic_table([1.0], [-2.0]))
    assert th.value == pytest.approx(-1.0)
    floor = est.estimate_tc(curve, synthetic_table([0.0, 1.0], [-1.0, -math.inf]))
    assert floor.value == pytest.approx(-1.0)
    with pytest.raises(est.EstimatorError, match="no I2 data"):
        est.estimate_tc(curve, synthetic_table([0.0, 1.0], [-math.inf, -math.inf]))


# --- zeta solver -----------------------------------------------------------

def test_zeta_solver_examples():
    assert zeta_solver(([1.0], [-2.0]), 0.0, 0.0).zeta == pytest.approx(1.0, abs=1e-6)
    assert zeta_solver(([1.0], [-1.0]), -0.1, -0.25).zeta == pytest.approx(0.325, abs=1e-6)
    with pytest.raises(est.EstimatorError, match="degenerate table"):
        zeta_solver(([0.0, 1.0], [-1.0, -math.inf]), 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        zeta_solver(([1.0], [-1.0]), 0.0, 0.5)


@given(st.floats(-0.9, 0.0), st.floats(0.1, 2.0), st.floats(-3.0, -0.05))
def test_zeta_solver_root(t, alpha, value):
    k = value - t * alpha + 2 * 0.3 * (1 + t) * alpha
    z = zeta_solver(([alpha], [value]), k, t)
    assert z.zeta == pytest.approx(0.3 * (1 + t), abs=2e-6)


# --- grids and rate tables -------------------------------------------------

def test_grids():
    g = est.gamma_grid(0.3)
    assert g[-1] == 2.0 and np.all(g[:-1] < 2.0) and np.allclose(np.diff(g[:-1]), 0.3)
    assert est.gamma_grid(0.5).tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert est.alpha_grid(0.25, 1.0).tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_deterministic_atom_table():
    tab = est.estimate_rate_table(E_ATOM, 5, 0.05, 64, 100, False, 0)
    i = int(np.argmin(np.abs(tab.alphas - 1.0)))
    assert tab.column(0.0)[i] == 0.0
    others = np.delete(tab.I_hat, i, axis=0)
    assert np.all(others == -math.inf)
    assert np.all(np.isinf(np.delete(tab.sigma, i, axis=0)))


@pytest.mark.parametrize("dual", [False, True])
def test_gamma_inclusion(dual):
    tab = est.estimate_rate_table(reference_measure(), 10, 0.05, 256, 20_000, dual, 0)
    assert np.all(tab.column(2.0) <= tab.column(0.0))
    assert np.all(tab.I_hat <= 0)
    assert est.gamma_order_violations(tab)["monotone"] == 0


@pytest.mark.parametrize("grid", [256, None])
def test_sampled_matches_exact_n3(grid):
    mu = reference_measure()
    sampled = est.estimate_rate_table(mu, 3, 0.05, grid, 10 ** 6, False, 5)
    exact = est.exact_rate_table(mu, 3, 0.05, grid)
    assert est.compare_tables(sampled, exact)["violations"] == 0


def test_exact_table_gamma_bound_with_covering():
    for n in (3, 6):
        tab = est.exact_rate_table(reference_measure(), n, 0.05, None)
        r = est.gamma_order_violations(tab, 1e-12, covering=True)
        assert r["monotone"] == 0 and r["lipschitz"] == 0


def test_exact_sup_dominates_grid_sup():
    mu = reference_measure()
    a = est.exact_rate_table(mu, 6, 0.05, None)
    b = est.exact_rate_table(mu, 6, 0.05, 256)
    assert np.all(a.prob >= b.prob - 1e-15)


def test_rate_table_thread_independent():
    mu = reference_measure()
    a = est.estimate_rate_table(mu, 12, 0.05, 128, 150_000, True, 9, threads=1)
    b = est.estimate_rate_table(mu, 12, 0.05, 128, 150_000, True, 9, threads=8)
    assert np.array_equal(a.I_hat, b.I_hat) and np.array_equal(a.hit_count, b.hit_count)


@given(st.integers(0, 2 ** 31), st.sampled_from([16, 64, None]))
def test_table_monotone_random_batches(seed, grid):
    rng = np.random.default_rng(seed)
    S = 500
    batch = ProductBatch(8, rng.uniform(0, 8, S), rng.uniform(0, np.pi, S), rng.uniform(0, np.pi, S))
    tab = est.rate_table_from_batch(batch, 0.1, grid)
    assert est.gamma_order_violations(tab)["monotone"] == 0
    assert np.all(tab.I_hat <= 0)
    assert int(tab.hit_count[:, 0].sum()) <= S


def test_rate_table_rejects_bad_arguments():
    with pytest.raises(ConfigurationError):
        est.estimate_rate_table(reference_measure(), 3, 0.0, 64, 10, False, 0)
    with pytest.raises(ConfigurationError):
        est.estimate_rate_table(reference_measure(), 3, 0.05, 2, 10, False, 0)
