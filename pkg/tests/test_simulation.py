import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from renewal_ldp import (
    Deterministic,
    DiscreteJoint,
    Exponential,
    IndependentProduct,
    ParameterError,
    ShiftTau,
    TruncateW,
    Uniform,
    lln_clt_check,
    simulate_coupled,
    simulate_ensemble,
    simulate_path,
)
from renewal_ldp.simulation import empirical_measure_histogram, variant_from_dict

from conftest import THREE_ATOM

EXP_EXP = IndependentProduct(Exponential(1.0), Exponential(1.0))


def test_deterministic_path(det_model):
    p = simulate_path(det_model, 3.5, seed=0)
    assert (p.M_t, p.Z_t) == (3, 6.0)
    assert p.mu_phi == pytest.approx(6 / 3.5 + (0.5 / 3.5) * 2, abs=1e-15)
    assert p.mu_phi == pytest.approx(2.0, abs=1e-15)


def test_empty_sum_before_first_renewal():
    m = IndependentProduct(Deterministic(5.0), Uniform(0.0, 1.0))
    p = simulate_path(m, 2.0, seed=1)
    assert (p.M_t, p.Z_t, p.S_last) == (0, 0.0, 0.0)


def test_lln_long_horizon(poisson):
    t, n = 1e4, 4000
    ens = simulate_ensemble(poisson, t, n, seed=8)
    inside = np.mean((ens.Z / t >= 0.97) & (ens.Z / t <= 1.03))
    # exact coverage of the band for Poisson(t) counts is 0.9973
    exact = stats.poisson.cdf(10300, t) - stats.poisson.cdf(9699, t)
    assert inside >= exact - 3 * math.sqrt(exact * (1 - exact) / n)
    assert 0.97 <= simulate_path(poisson, t, seed=0).Z_t / t <= 1.03


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**40), t=st.floats(0.1, 60.0))
def test_reconstruction_and_determinism(seed, t):
    model = DiscreteJoint(THREE_ATOM)
    p = simulate_path(model, t, seed)
    assert p.recompute().same_as(p)
    assert simulate_path(model, t, seed).same_as(p)
    assert p.to_csv() == simulate_path(model, t, seed).to_csv()
    # contraction identity, bit-exact as stored
    tn, wn = p.overshoot
    assert p.mu_phi == p.Z_t / t + ((t - p.S_last) / t) * (wn / tn)
    assert p.S_last <= t < p.S_last + tn


def test_coupled_truncation_identity_integer_rewards():
    m = DiscreteJoint([((1.0, 3.0), 1.0)])
    parent, trunc = simulate_coupled(m, [TruncateW(2.0)], 5.0, seed=0)
    assert (parent.Z_t, trunc.Z_t) == (15.0, 10.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**40), n=st.floats(0.1, 3.0))
def test_coupled_truncation_identity(seed, n):
    parent, trunc = simulate_coupled(EXP_EXP, [TruncateW(n)], 25.0, seed)
    assert parent.M_t == trunc.M_t
    excess = np.maximum(parent.W - n, 0) - np.maximum(-(parent.W + n), 0)
    assert parent.Z_t - trunc.Z_t == pytest.approx(math.fsum(excess.tolist()), abs=1e-12 * max(1.0, parent.Z_t))


def test_truncation_above_bound_is_identity(bounded):
    parent, trunc = simulate_coupled(bounded, [TruncateW(1.0)], 40.0, seed=3)
    assert parent.Z_t == trunc.Z_t and np.array_equal(parent.W, trunc.W)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**40), eps=st.floats(1e-3, 1.0))
def test_shift_never_adds_renewals(seed, eps):
    parent, shifted = simulate_coupled(EXP_EXP, [ShiftTau(eps)], 30.0, seed)
    assert shifted.M_t <= parent.M_t


def test_variant_round_trip():
    for v in (TruncateW(2.0), ShiftTau(0.1)):
        assert variant_from_dict(v.to_dict()) == v
    with pytest.raises(ParameterError):
        TruncateW(0.0)
    with pytest.raises(ParameterError):
        ShiftTau(-1.0)


def test_ensemble_worker_invariance(exp_exp):
    a = simulate_ensemble(exp_exp, 30.0, 20_000, seed=9, variants=[TruncateW(2.0)], workers=1)
    b = simulate_ensemble(exp_exp, 30.0, 20_000, seed=9, variants=[TruncateW(2.0)], workers=8)
    assert np.array_equal(a.M, b.M) and np.array_equal(a.Z, b.Z)
    assert np.array_equal(a.variant_Z[0], b.variant_Z[0])


def test_ensemble_matches_direct_poisson_sampler(poisson):
    t = 20.0
    ens = simulate_ensemble(poisson, t, 40_000, seed=2)
    direct = np.random.default_rng(12345).poisson(t, 40_000)
    # two-sample test on the counts and moment checks against Poisson(t)
    assert stats.ks_2samp(ens.M, direct).pvalue > 1e-3
    assert ens.M.mean() == pytest.approx(t, abs=4 * math.sqrt(t / 40_000))
    assert np.array_equal(ens.M.astype(float), ens.Z)


def test_lln_clt_degenerate(det_model):
    st_ = lln_clt_check(det_model, 10.0, 100, seed=0)
    assert st_.degenerate and st_.ks_distance is None
    assert st_.mean_zt_over_t == 2.0


def test_lln_clt_small(poisson):
    st_ = lln_clt_check(poisson, 200.0, 4000, seed=4)
    assert st_.ks_distance < 0.04
    assert st_.mean_zt_over_t == pytest.approx(1.0, rel=0.01)


def test_empirical_measure_histogram(three_atom):
    p = simulate_path(three_atom, 40.0, seed=5)
    h = empirical_measure_histogram(p, [0, 0.75, 1.5, 10], [-5, 0, 2, 10])
    assert h.sum() == pytest.approx(1.0, abs=1e-12)
    # mu_t(phi) from the cell masses: each cell holds a single atom value of w / u
    ratio = np.array([[-1 / 0.5, -1 / 0.5, -1 / 0.5], [1.0, 1.0, 1.0], [1.5, 1.5, 1.5]])
    assert float((h * ratio).sum()) == pytest.approx(p.mu_phi, abs=1e-12)


def test_bad_horizon(poisson):
    with pytest.raises(ParameterError):
        simulate_path(poisson, 0.0, seed=0)
    with pytest.raises(ParameterError):
        simulate_ensemble(poisson, 10.0, 0, seed=0)
