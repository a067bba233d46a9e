from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from furstenberg_lab.measures import (
    MatrixMeasure,
    MeasureError,
    StreamHandle,
    diag_rotation_measure,
    enumerate_batch,
    enumerate_products,
    load_measure,
    load_measure_file,
    orbit_samples,
    reference_measure,
    rotation_measure,
    sample_batch,
    sample_product,
    sip_heuristic,
)
from furstenberg_lab.projective import ConfigurationError, Mat2, svd2


def doc(atoms, **extra):
    return json.dumps({"atoms": [{"matrix": m, "weight": w} for m, w in atoms], **extra})


# --- loading ---------------------------------------------------------------

def test_load_two_hyperbolic_atoms():
    mu = load_measure(doc([([[2, 1], [1, 1]], 0.5), ([[3, 0], [0, 1 / 3]], 0.5)]))
    expect = max(math.log(svd2(g).kappa) for g in mu.matrices)
    assert mu.alpha_bar == pytest.approx(expect, abs=1e-15)
    assert mu.alpha_bar == pytest.approx(math.log(3.0), abs=1e-15)


@pytest.mark.parametrize("text,msg", [
    (doc([([[1.1, 0], [0, 1]], 1.0)]), "not unimodular"),
    (doc([([[1, 0], [0, 1]], 0.6), ([[1, 0], [0, 1]], 0.6)]), "not a probability vector"),
    (doc([]), "empty measure"),
    (doc([([[1, 0], [0, 1]], -0.5), ([[1, 0], [0, 1]], 1.5)]), "not a probability vector"),
    ("{not json", "not valid JSON"),
    (json.dumps({"atoms": [{"matrix": [[1, 0, 0], [0, 1, 0]], "weight": 1}]}), "2x2"),
])
def test_load_errors(text, msg):
    with pytest.raises(MeasureError, match=msg):
        load_measure(text)


def test_det_tolerance_field():
    text = doc([([[1 + 1e-6, 0], [0, 1]], 1.0)], det_tolerance=1e-5)
    load_measure(text)
    with pytest.raises(MeasureError, match="not unimodular"):
        load_measure(doc([([[1 + 1e-6, 0], [0, 1]], 1.0)]))


def test_load_file_roundtrip(tmp_path):
    mu = reference_measure()
    p = tmp_path / "mu.json"
    p.write_text(json.dumps(mu.to_document()))
    mu2 = load_measure_file(p)
    assert mu2 == mu
    assert mu2.fingerprint() == mu.fingerprint()


# --- sampling --------------------------------------------------------------

def test_single_atom_n1():
    g = Mat2(2, 1, 1, 1)
    mu = MatrixMeasure.uniform([g])
    s = sample_product(mu, 1, StreamHandle(0))
    assert s.matrix == g and s.length == 1 and s.word == (0,)


def test_sample_product_deterministic():
    mu = reference_measure()
    a = sample_product(mu, 12, StreamHandle(5, 3))
    b = sample_product(mu, 12, StreamHandle(5, 3))
    assert a.matrix.entries == b.matrix.entries and a.word == b.word


def test_sample_product_rejects_zero_length():
    with pytest.raises(ConfigurationError):
        sample_product(reference_measure(), 0, StreamHandle(0))


def test_sample_product_left_to_right():
    mu = MatrixMeasure.uniform([Mat2(2, 1, 1, 1), Mat2(1, 1, 1, 2), Mat2(1, 1, 0, 1)])
    s = sample_product(mu, 5, StreamHandle(9))
    g = Mat2.identity()
    for i in s.word:
        g = g @ mu.matrices[i]
    assert np.allclose(s.matrix.as_array(), g.as_array(), rtol=0, atol=0)


def test_n2_empirical_law_matches_enumeration():
    mu = MatrixMeasure((Mat2(2, 1, 1, 1), Mat2(1, 1, 1, 2)), (0.3, 0.7))
    S = 10 ** 6
    b = sample_batch(mu, 2, S, seed=11, keep_words=True)
    codes = b.words[:, 0] * 2 + b.words[:, 1]
    counts = np.bincount(codes, minlength=4)
    p = np.array([w for _, w in enumerate_products(mu, 2)])
    sd = np.sqrt(S * p * (1 - p))
    assert np.all(np.abs(counts - S * p) <= 3 * sd)


def test_n3_norm_tail_matches_enumeration():
    mu = reference_measure()
    tau = 12.0
    exact = sum(w for g, w in enumerate_products(mu, 3) if svd2(g).kappa >= tau)
    S = 10 ** 6
    b = sample_batch(mu, 3, S, seed=2, directions=False)
    freq = float(np.mean(b.log_norm >= math.log(tau)))
    assert abs(freq - exact) <= 3 * math.sqrt(exact * (1 - exact) / S)


def test_batch_matches_scalar_products():
    mu = reference_measure()
    b = sample_batch(mu, 7, 50, seed=1, keep_words=True)
    for row, ln in zip(b.words[:5], b.log_norm[:5]):
        g = mu.matrices[row[0]]
        for i in row[1:]:
            g = g @ mu.matrices[i]
        assert ln == pytest.approx(math.log(svd2(g).kappa), rel=1e-12)


def test_batch_thread_independent():
    mu = reference_measure()
    a = sample_batch(mu, 16, 200_000, seed=4, threads=1)
    b = sample_batch(mu, 16, 200_000, seed=4, threads=8)
    assert np.array_equal(a.log_norm, b.log_norm)
    assert np.array_equal(a.omega_minus, b.omega_minus)
    assert np.array_equal(a.upsilon_plus, b.upsilon_plus)


def test_orbit_thread_independent():
    mu = reference_measure()
    a = orbit_samples(mu, 100_000, seed=3, threads=1)
    b = orbit_samples(mu, 100_000, seed=3, threads=4)
    assert np.array_equal(a, b)


def test_long_products_do_not_overflow():
    mu = reference_measure()
    b = sample_batch(mu, 2000, 100, seed=0)
    assert np.all(np.isfinite(b.log_norm))
    assert np.all(b.log_norm / 2000 <= mu.alpha_bar + 1e-12)


# --- enumeration -----------------------------------------------------------

def test_enumeration_small_cases():
    mu = reference_measure()
    one = enumerate_products(mu, 1)
    assert [g for g, _ in one] == list(mu.matrices)
    two = enumerate_products(mu, 2)
    assert len(two) == 4
    assert sum(w for _, w in two) == pytest.approx(1.0, abs=1e-9)


def test_enumeration_cap():
    with pytest.raises(ConfigurationError, match="enumeration too large"):
        enumerate_products(reference_measure(), 21)


@given(st.integers(1, 10), st.lists(st.floats(0.05, 1.0), min_size=2, max_size=3))
def test_enumeration_weights_sum_to_one(n, raw):
    w = np.asarray(raw) / np.sum(raw)
    mats = [Mat2(2, 1, 1, 1), Mat2(1, 1, 1, 2), Mat2(1, 1, 0, 1)][: len(w)]
    mu = MatrixMeasure(tuple(mats), tuple(w))
    if mu.size ** n > 10 ** 5:
        return
    b = enumerate_batch(mu, n)
    assert abs(b.weights.sum() - 1.0) <= 1e-9
    assert np.all(b.log_norm / n <= mu.alpha_bar + 1e-12)


@given(st.integers(1, 64), st.integers(0, 2 ** 32))
def test_alpha_bar_bounds_samples(n, seed):
    mu = reference_measure()
    b = sample_batch(mu, n, 64, seed, directions=False)
    assert np.all(b.log_norm / n <= mu.alpha_bar + 1e-12)


# --- SIP heuristic ---------------------------------------------------------

def test_sip_rotations_have_no_witness():
    r = sip_heuristic(rotation_measure(), 6, 100, 0)
    assert r.proximal_witness is None


def test_sip_single_diagonal_atom():
    r = sip_heuristic(MatrixMeasure.uniform([Mat2.diag(2.0)]), 3, 10, 0)
    assert r.proximal_witness == (0,)
    assert r.witness_trace == pytest.approx(2.5)


def test_sip_detects_coordinate_axes():
    r = sip_heuristic(diag_rotation_measure(), 4, 10, 0)
    assert r.irreducibility_flag == "violated"
    assert sorted(round(x, 12) for x in r.invariant_lines) == [0.0, round(math.pi / 2, 12)]


def test_sip_reference_likely():
    assert sip_heuristic(reference_measure(), 4, 10, 0).irreducibility_flag == "likely"
