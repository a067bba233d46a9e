from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from furstenberg_lab import riesz
from furstenberg_lab.acceptance import pushforward_measure
from furstenberg_lab.kernels import ExponentError
from furstenberg_lab.projective import ConfigurationError
from furstenberg_lab.transfer import GridFunction, GridMeasure, grid_nodes

TS = (-0.1, -0.5, -0.9)


# --- potentials ------------------------------------------------------------

@pytest.mark.parametrize("t", TS)
def test_lebesgue_potential_constant(t):
    x = np.linspace(0, np.pi, 17)
    vals = riesz.riesz_potential(GridMeasure.lebesgue(256), t, x)
    assert np.max(np.abs(vals - riesz.lambda_constant(t))) <= 1e-9


def test_dirac_potential():
    x = np.array([0.1, 0.9, 2.5])
    vals = riesz.riesz_potential(riesz.AtomMeasure.dirac(0.4), -0.3, x)
    assert np.allclose(vals, np.abs(np.sin(x - 0.4)) ** -0.3, rtol=1e-14)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
def test_t0_potential_is_one(w):
    w = np.asarray(w)
    nu = riesz.AtomMeasure(np.linspace(0, 3, w.size), w / w.sum())
    assert np.allclose(riesz.riesz_potential(nu, 0.0, np.linspace(0, 3, 5)), 1.0, atol=1e-14)


def test_potential_rejects_bad_exponent():
    with pytest.raises(ExponentError, match="non-integrable exponent"):
        riesz.riesz_potential(GridMeasure.lebesgue(8), -1.0, 0.3)


def test_trig_density_potential_matches_convolution():
    rho = riesz.TrigDensity([0.4, 0.0], [0.0, 0.2])
    t = -0.5
    x = np.array([0.3, 1.7])
    got = riesz.riesz_potential(rho, t, x)
    want = [sum(riesz.fourier_coeff_kernel(t, n) * rho.coefficient(n) * np.exp(2j * n * xi)
                for n in range(-2, 3)).real for xi in x]
    assert np.allclose(got, want, atol=1e-8)


# --- lambda constant -------------------------------------------------------

def test_lambda_constant_values():
    assert riesz.lambda_constant(0.0) == 1.0
    assert riesz.lambda_constant(-0.5) == pytest.approx(1.6692536833481, abs=1e-10)
    oracle = 2 / np.pi * integrate.quad(lambda u: np.sin(u) ** -0.3, 0, np.pi / 2, limit=200)[0]
    assert riesz.lambda_constant(-0.3) == pytest.approx(oracle, abs=1e-9)


def test_lambda_constant_monotone_to_one():
    vals = [riesz.lambda_constant(-(2.0 ** -k)) for k in range(1, 12)]
    assert np.all(np.diff(vals) < 0) and vals[-1] - 1 < 1e-3


def test_lambda_constant_rejects():
    with pytest.raises(ExponentError):
        riesz.lambda_constant(-1.0)


# --- Fourier coefficients --------------------------------------------------

def test_measure_coefficients():
    rng = np.random.default_rng(3)
    nu = GridMeasure(rng.uniform(size=64))
    assert riesz.fourier_coeff_measure(nu, 0) == pytest.approx(1.0, abs=1e-14)
    lam = GridMeasure.lebesgue(64)
    for n in (1, 5, -7):
        assert abs(riesz.fourier_coeff_measure(lam, n)) <= 1e-14
        assert riesz.fourier_coeff_measure(riesz.AtomMeasure.dirac(0.0), n) == 1.0


def test_kernel_coefficients():
    assert riesz.fourier_coeff_kernel(-0.5, 0) == pytest.approx(riesz.lambda_constant(-0.5), abs=1e-14)
    assert riesz.fourier_coeff_kernel(-0.5, 1) > 0
    for t in TS:
        for n in range(1, 65):
            c = riesz.fourier_coeff_kernel(t, n)
            assert c > 1e-12
            assert c == pytest.approx(riesz.fourier_coeff_kernel(t, -n))
            assert abs(c - riesz.kernel_coefficient_closed_form(t, n)) <= 1e-10


def test_kernel_rejects_t0():
    with pytest.raises(ExponentError):
        riesz.fourier_coeff_kernel(0.0, 1)


# --- G_beta and C_beta -----------------------------------------------------

def test_c_half():
    assert riesz.c_beta(0.5) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-15)
    assert riesz.c_beta(0.5) == pytest.approx(0.5641896, abs=1e-7)


@given(st.floats(-0.9, -0.1), st.floats(0.05, 1.5))
def test_g_beta_even(t, x):
    assert riesz.g_beta(t, x) == pytest.approx(riesz.g_beta(t, -x), rel=1e-12)


@pytest.mark.parametrize("t", TS)
def test_g_beta_closed_matches_partial(t):
    x = 1.1
    n = 200_000
    closed = riesz.g_beta(t, x)
    partial = riesz.g_beta(t, x, n_terms=n, method="partial")
    assert abs(closed - partial) <= riesz.g_beta_tail_bound(t, x, n)


@pytest.mark.parametrize("t", TS)
def test_lipschitz_difference(t):
    r = riesz.lipschitz_difference_test(t)
    assert r["max_ratio"] < 2.0
    assert r["max_quotient"] < 10.0


def test_g_beta_coefficients():
    for t in (-0.5, -0.2):
        beta = t + 1
        for n in (1, 2, 5):
            assert riesz.g_beta_coefficient(t, n) == pytest.approx(riesz.c_beta(beta) * n ** -beta, abs=1e-8)


# --- T_beta ----------------------------------------------------------------

def test_t_beta_constant_to_zero():
    f = riesz.FourierSeries(np.array([0, 0, 2.5, 0, 0], dtype=complex))
    assert np.all(riesz.t_beta_multiplier(f, 0.5).coeffs == 0)


@given(st.integers(0, 10 ** 6), st.floats(0.05, 0.95))
def test_t_beta_zero_mean_and_symmetry(seed, beta):
    rng = np.random.default_rng(seed)
    f = riesz.FourierSeries.random_real(12, rng, mean=rng.normal())
    g = riesz.FourierSeries.random_real(12, rng, mean=rng.normal())
    Tf, Tg = riesz.t_beta_multiplier(f, beta), riesz.t_beta_multiplier(g, beta)
    x = np.arange(128) * np.pi / 128
    assert abs(np.mean(Tf.evaluate(x).real)) <= 1e-12
    assert Tf.is_real()
    assert abs(riesz.pairing(Tf, g) - riesz.pairing(f, Tg)) <= 1e-9


def test_multiplier_inverts_g_beta():
    rng = np.random.default_rng(5)
    t = -0.4
    beta = t + 1
    f = riesz.FourierSeries.random_real(6, rng, mean=1.3)
    conv = riesz.FourierSeries(np.array([
        0.0 if n == 0 else riesz.g_beta_coefficient(t, n) * f[n] for n in f.indices]))
    back = riesz.t_beta_multiplier(conv, beta)
    want = riesz.c_beta(beta) * np.where(f.indices == 0, 0, f.coeffs)
    assert np.max(np.abs(back.coeffs - want)) <= 1e-8


def test_from_samples_roundtrip():
    rng = np.random.default_rng(0)
    f = riesz.FourierSeries.random_real(5, rng, mean=0.7)
    x = np.arange(32) * np.pi / 32
    g = riesz.FourierSeries.from_samples(f.evaluate(x).real, 5)
    assert np.max(np.abs(g.coeffs - f.coeffs)) <= 1e-12
    with pytest.raises(ConfigurationError):
        riesz.FourierSeries.from_samples(np.zeros(10), 5)


# --- potential and coefficient consistency ---------------------------------

@pytest.mark.parametrize("t", [-0.3, -0.7])
def test_potential_coefficients_factor(t):
    rho = riesz.TrigDensity([0.3, -0.2, 0.1], [0.1, 0.05, 0.0])
    L = 32
    x = np.arange(L) * np.pi / L
    series = riesz.FourierSeries.from_samples(riesz.riesz_potential(rho, t, x), 3)
    for n in range(-3, 4):
        want = riesz.fourier_coeff_kernel(t, n) * rho.coefficient(n)
        assert abs(series[n] - want) <= 1e-8


# --- injectivity -----------------------------------------------------------

def test_injectivity_equal_measures():
    nu = GridMeasure(np.random.default_rng(2).uniform(size=64))
    r = riesz.injectivity_probe(nu, nu, -0.4, grid_nodes(64))
    assert r.potential_discrepancy == 0 and r.coefficient_discrepancy == 0


def test_injectivity_distinct():
    r = riesz.injectivity_probe(riesz.AtomMeasure.dirac(0.0), GridMeasure.lebesgue(64), -0.4,
                                grid_nodes(64) + 0.01)
    assert r.potential_discrepancy > 0 and r.coefficient_discrepancy > 0


def test_injectivity_bound():
    t = -0.5
    a = riesz.TrigDensity([0.2, 0.1], [0.0, -0.1])
    b = riesz.TrigDensity([0.2, 0.1], [0.0, -0.1])
    x = np.arange(32) * np.pi / 32
    r = riesz.injectivity_probe(a, b, t, x)
    assert r.potential_discrepancy <= 1e-9
    assert r.coefficient_discrepancy <= riesz.coefficient_bound(1e-9, t, 16)


# --- Frostman and Hoelder --------------------------------------------------

def test_frostman_calibration():
    assert riesz.frostman_dim_estimate(GridMeasure.lebesgue(4096)).value == pytest.approx(1.0, abs=0.02)
    assert riesz.frostman_dim_estimate(riesz.AtomMeasure.dirac(0.3)).value == 0.0
    push = riesz.frostman_dim_estimate(pushforward_measure(1 << 16)).value
    assert push == pytest.approx(0.5, abs=0.05)


def test_frostman_samples_of_lebesgue():
    pts = np.random.default_rng(0).uniform(0, np.pi, 2_000_000)
    assert riesz.frostman_dim_estimate(pts).value == pytest.approx(1.0, abs=0.05)


def test_frostman_degenerate_ladder():
    with pytest.raises(ConfigurationError):
        riesz.frostman_dim_estimate(GridMeasure.lebesgue(64), radii=[0.01, 0.02])


def test_holder_calibration():
    x = grid_nodes(4096)
    h = riesz.holder_exponent_estimate(GridFunction(np.abs(np.sin(x)) ** 0.5))
    assert h.value == pytest.approx(0.5, abs=0.05) and not h.saturated
    s = riesz.holder_exponent_estimate(GridFunction(np.sin(2 * x)))
    assert s.value == 1.0 and s.saturated
    c = riesz.holder_exponent_estimate(GridFunction(np.full(4096, 3.0)))
    assert c.value == 1.0 and c.saturated


@given(st.floats(0.05, 0.9))
def test_holder_power_family(a):
    x = grid_nodes(4096)
    h = riesz.holder_exponent_estimate(GridFunction(np.abs(np.sin(x)) ** a))
    assert h.value == pytest.approx(a, abs=0.05)


def test_holder_interior_cusp():
    x = grid_nodes(4096)
    v = np.abs(np.sin(x - 1.0)) ** 0.3 + 0.05 * np.cos(2 * x)
    assert riesz.holder_exponent_estimate(GridFunction(v)).value == pytest.approx(0.3, abs=0.05)
