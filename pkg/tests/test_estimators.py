import json
import math
import pathlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmldesk import estimators as est
from qmldesk.seeding import stream

GOLDEN = pathlib.Path(__file__).parent / "golden"


def dft_readout_oracle(omega, n):
    # Independent route: the readout amplitude at index l is the averaged
    # geometric sum exp(2 pi i k (omega - l/2^n)) over k.
    N = 1 << n
    k = np.arange(N)
    return np.array([
        abs(np.exp(2j * np.pi * k * (omega - ell / N)).sum() / N) ** 2
        for ell in range(N)
    ])


# --- pe_distribution ------------------------------------------------------

def test_grid_exact_phase_is_point_mass():
    model = est.PhaseModel(4)
    p = est.pe_distribution(5 / 16, model)
    assert p[5] == 1.0
    assert p.sum() == 1.0


def test_distribution_matches_golden_file():
    data = json.loads((GOLDEN / "pe_n3_omega0p3.json").read_text())
    p = est.pe_distribution(data["omega"], est.PhaseModel(data["n_qubits"]))
    assert np.allclose(p, data["probabilities"], atol=1e-12)
    assert int(np.argmax(p)) == 2


def test_distribution_matches_dft_oracle():
    rng = stream(11, "est", "dft")
    for _ in range(20):
        n = int(rng.integers(1, 9))
        omega = float(rng.random())
        p = est.pe_distribution(omega, est.PhaseModel(n))
        assert np.allclose(p, dft_readout_oracle(omega, n), atol=1e-10)


def test_distribution_normalization_sweep():
    rng = stream(11, "est", "norm")
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        p = est.pe_distribution(float(rng.random()), est.PhaseModel(n))
        assert abs(p.sum() - 1.0) < 1e-9


def test_phase_model_bounds():
    with pytest.raises(ValueError):
        est.PhaseModel(0)
    with pytest.raises(ValueError):
        est.PhaseModel(25)
    with pytest.raises(ValueError):
        est.pe_distribution(1.0, est.PhaseModel(3))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.floats(0.0, 1.0, exclude_max=True))
def test_distribution_is_probability_property(n, omega):
    p = est.pe_distribution(omega, est.PhaseModel(n))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


# --- sample_phase ---------------------------------------------------------

def test_sample_grid_exact_always_returns_omega():
    model = est.PhaseModel(5)
    rng = stream(11, "est", "grid")
    draws = est.sample_phase(0.25, model, rng, size=200)
    assert np.all(draws == 0.25)


def test_sample_two_point_support_n1():
    model = est.PhaseModel(1)
    p = est.pe_distribution(0.25, model)
    draws = est.sample_phase(0.25, model, stream(11, "est", "n1"), size=20000)
    assert set(np.unique(draws)) == {0.0, 0.5}
    freq0 = np.mean(draws == 0.0)
    assert abs(freq0 - p[0]) < 0.01


def test_sample_total_variation_against_distribution():
    model = est.PhaseModel(4)
    omega = 0.37
    p = est.pe_distribution(omega, model)
    draws = est.sample_phase(omega, model, stream(11, "est", "tv"), size=10 ** 6)
    emp = np.bincount((draws * model.grid).astype(int), minlength=model.grid) / draws.size
    assert 0.5 * np.abs(emp - p).sum() < 0.01


# --- median_copies --------------------------------------------------------

def test_median_copies_default_budget():
    assert est.median_copies(0.01) == 15


def test_median_copies_plugin():
    assert est.median_copies(math.exp(-1), alpha=1.0) == 2


def test_median_copies_rejects_bad_alpha():
    with pytest.raises(ValueError):
        est.median_copies(0.01, alpha=0.5)
    with pytest.raises(ValueError):
        est.median_copies(0.0)


def test_median_of_bernoulli_copies_failure_rate():
    # Each copy lands in the good window with probability 8/pi^2; the
    # median over L copies should fail at most 2*delta of the time.
    delta = 0.01
    L = est.median_copies(delta)
    rng = stream(11, "est", "bern")
    good = rng.random((10 ** 4, L)) < 8 / math.pi ** 2
    failures = np.mean(np.sum(good, axis=1) <= L // 2)
    assert failures <= 2 * delta


# --- estimate_inner_product ----------------------------------------------

def test_inner_product_identical_vectors_exact():
    cfg = est.IPEConfig(mode="distribution", n_qubits=6)
    v = np.array([0.6, 0.8])
    for trial in range(5):
        out = est.estimate_inner_product(v, v, cfg, stream(11, "est", "same", trial))
        assert out == 1.0


def test_inner_product_gaussian_zero_eps_exact_and_untouched_rng():
    cfg = est.IPEConfig(mode="gaussian", epsilon=0.0)
    v = np.array([1.0, 2.0])
    w = np.array([3.0, -1.0])
    rng = stream(11, "est", "eps0")
    before = rng.bit_generator.state
    assert est.estimate_inner_product(v, w, cfg, rng) == 1.0
    assert rng.bit_generator.state == before


def test_inner_product_orthogonal_distribution_stats():
    cfg = est.IPEConfig(mode="distribution", n_qubits=8)
    v = np.array([1.0, 0.0])
    w = np.array([0.0, 1.0])
    rng = stream(11, "est", "orth")
    outs = np.array([est.estimate_inner_product(v, w, cfg, rng) for _ in range(10 ** 5)])
    assert abs(outs.mean()) < 0.01
    # omega = arcsin(1/2)/pi = 1/6: histogram of the implied readout
    # should match the closed-form distribution.
    model = est.PhaseModel(8)
    p = est.pe_distribution(1 / 6, model)
    omb = np.arcsin(np.clip((outs + 1) / 2, -1, 1)) / np.pi
    ell = np.rint(omb * model.grid).astype(int)
    # sin folds l and 2^n/2 - l onto one value; fold the reference the same way
    folded = np.bincount(np.minimum(ell, model.grid // 2 - ell) % model.grid,
                         minlength=model.grid) / outs.size
    ref = np.zeros(model.grid)
    for i, mass in enumerate(p):
        ref[min(i, model.grid // 2 - i) % model.grid] += mass
    assert 0.5 * np.abs(folded - ref).sum() < 0.02


def test_inner_product_symmetric_in_arguments():
    cfg = est.IPEConfig(mode="distribution", n_qubits=7)
    rng = stream(11, "est", "sym")
    v = rng.standard_normal(5)
    w = rng.standard_normal(5)
    a = est.estimate_inner_product(v, w, cfg, stream(11, "est", "sympair"))
    b = est.estimate_inner_product(w, v, cfg, stream(11, "est", "sympair"))
    assert a == b


def test_inner_product_gaussian_unbiased_and_scales_with_norms():
    cfg = est.IPEConfig(mode="gaussian", epsilon=0.05)
    rng0 = stream(11, "est", "bias")
    v = np.array([1.0, 1.0])
    w = np.array([2.0, -1.0])
    outs = v @ w + 0.05 * np.linalg.norm(v) * np.linalg.norm(w) \
        * stream(11, "est", "ref").standard_normal(10 ** 5)
    got = np.array([est.estimate_inner_product(v, w, cfg, rng0) for _ in range(10 ** 5)])
    sigma = 0.05 * np.linalg.norm(v) * np.linalg.norm(w)
    assert abs(got.mean() - v @ w) < 4 * sigma / math.sqrt(10 ** 5)
    assert abs(got.std() - outs.std()) / outs.std() < 0.05
    got2 = np.array([est.estimate_inner_product(2 * v, w, cfg, rng0) for _ in range(10 ** 5)])
    assert abs(got2.std() / got.std() - 2.0) < 0.1


def test_inner_product_zero_vector_rejected():
    cfg = est.IPEConfig()
    with pytest.raises(ValueError):
        est.estimate_inner_product(np.zeros(3), np.ones(3), cfg, stream(11, "est", "z"))


def test_median_boost_tightens_spread():
    base = dict(mode="distribution", n_qubits=6)
    raw = est.IPEConfig(boost="none", **base)
    boosted = est.IPEConfig(boost="median", delta_prob=0.01, **base)
    v = np.array([1.0, 0.0])
    w = np.array([0.6, 0.8])
    r1 = stream(11, "est", "braw")
    r2 = stream(11, "est", "bmed")
    raw_outs = np.array([est.estimate_inner_product(v, w, raw, r1) for _ in range(4000)])
    med_outs = np.array([est.estimate_inner_product(v, w, boosted, r2) for _ in range(4000)])
    assert med_outs.std() < raw_outs.std()


# --- estimate_sq_distance -------------------------------------------------

def test_sq_distance_identical_points_certain_zero():
    cfg = est.IPEConfig(mode="distribution", n_qubits=9)
    v = np.array([2.0, 1.0, 2.0])
    for trial in range(5):
        out = est.estimate_sq_distance(v, v, cfg, stream(11, "est", "d0", trial))
        assert out == 0.0


def test_sq_distance_gaussian_zero_eps_exact():
    cfg = est.IPEConfig(mode="gaussian", epsilon=0.0)
    v = np.array([1.0, 0.0])
    w = np.array([0.0, 1.0])
    assert est.estimate_sq_distance(v, w, cfg, stream(11, "est", "de0")) == 2.0


def test_sq_distance_gaussian_noise_scale():
    cfg = est.IPEConfig(mode="gaussian", epsilon=0.1)
    v = np.array([1.0, 0.0])
    w = np.array([0.0, 1.0])
    rng = stream(11, "est", "dstd")
    outs = np.array([est.estimate_sq_distance(v, w, cfg, rng) for _ in range(10 ** 5)])
    assert abs(outs.mean() - 2.0) < 0.005
    assert abs(outs.std() - 0.1) / 0.1 < 0.1


def test_sq_distance_distribution_nonnegative():
    cfg = est.IPEConfig(mode="distribution", n_qubits=5)
    rng = stream(11, "est", "dnn")
    for _ in range(200):
        v = rng.standard_normal(4)
        w = rng.standard_normal(4)
        out = est.estimate_sq_distance(v, w, cfg, stream(11, "est", "dnn2", _))
        assert out >= 0.0


def test_sq_distance_symmetric_in_arguments():
    cfg = est.IPEConfig(mode="distribution", n_qubits=7)
    rng = stream(11, "est", "dsymv")
    v = rng.standard_normal(6)
    w = rng.standard_normal(6)
    a = est.estimate_sq_distance(v, w, cfg, stream(11, "est", "dsym"))
    b = est.estimate_sq_distance(w, v, cfg, stream(11, "est", "dsym"))
    assert a == b


def test_config_validation():
    with pytest.raises(ValueError):
        est.IPEConfig(mode="exact")
    with pytest.raises(ValueError):
        est.IPEConfig(delta_prob=0.5)
    with pytest.raises(ValueError):
        est.IPEConfig(mode="gaussian", epsilon=-0.1)
