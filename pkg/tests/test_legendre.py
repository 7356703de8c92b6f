import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renewal_ldp import (
    Constant,
    DeterministicReward,
    DiscreteJoint,
    Exponential,
    Gamma,
    HypothesisViolation,
    IndependentProduct,
    ParameterError,
    RewardMap,
    Uniform,
    cramer_transform,
    deviation_bound,
    lagrangian,
    rate_function_j,
    rate_function_jbar,
    rate_profile,
    renewal_rate_jtau,
)
from renewal_ldp.legendre import profile_on_grid

from conftest import FOUR_ATOM, THREE_ATOM, TWO_ATOM, poisson_rate


def exp_exp_rate(m):
    """Compound Poisson with Exp(1) jumps: sup_s [s m - s / (1 - s)] = (sqrt(m) - 1)^2."""
    return (math.sqrt(m) - 1.0) ** 2 if m > 0 else 1.0


def two_atom_rate(m):
    """``2 Bin(t, 1/2) / t``: Bernoulli relative entropy of ``m / 2`` against ``1/2``."""
    p = m / 2
    if not 0 <= p <= 1:
        return math.inf
    h = sum(v * math.log(v) for v in (p, 1 - p) if v > 0)
    return math.log(2.0) + h


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("m", [0.25, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0, 4.0])
def test_poisson_closed_form(poisson, m):
    assert float(rate_function_j(poisson, m).value) == pytest.approx(poisson_rate(m), abs=1e-8)


def test_poisson_special_points(poisson):
    assert rate_function_j(poisson, -1.0).value == math.inf
    assert rate_function_j(poisson, 0.0).value == math.inf
    assert float(rate_function_jbar(poisson, 0.0)) == 1.0
    assert float(rate_function_jbar(poisson, 1.0)) < 1e-10


@pytest.mark.parametrize("m", [0.2, 0.5, 1.0, 1.7, 3.0])
def test_exp_exp_closed_form(exp_exp, m):
    assert float(rate_function_jbar(exp_exp, m)) == pytest.approx(exp_exp_rate(m), abs=1e-7)


@pytest.mark.parametrize("m", [0.25, 0.5, 1.0, 1.5, 1.9, 2.0])
def test_two_atom_closed_form(two_atom, m):
    assert float(rate_function_jbar(two_atom, m)) == pytest.approx(two_atom_rate(m), abs=1e-7)


def test_two_atom_edges(two_atom):
    assert float(rate_function_jbar(two_atom, 0.0)) == pytest.approx(math.log(2.0), abs=1e-9)
    assert rate_function_jbar(two_atom, 2.5) == math.inf
    assert rate_function_jbar(two_atom, -0.5) == math.inf


def test_cramer_examples(poisson):
    assert float(cramer_transform(poisson, 1.0, 1.0)) < 1e-12
    a = 0.5
    assert float(cramer_transform(poisson, a, 1.0)) == pytest.approx(a - 1 - math.log(a), abs=1e-8)
    assert cramer_transform(poisson, 1.0, 2.0) == math.inf


def test_renewal_rate_jtau(poisson):
    assert renewal_rate_jtau(poisson, -0.5) == math.inf
    assert float(renewal_rate_jtau(poisson, 1.0)) < 1e-12
    assert float(renewal_rate_jtau(poisson, 2.0)) == pytest.approx(poisson_rate(2.0), abs=1e-9)
    for u in np.linspace(0.25, 4, 16):
        assert float(renewal_rate_jtau(poisson, u)) == pytest.approx(float(rate_function_j(poisson, u).value), abs=1e-7)


def test_jtau_gamma_waiting_times():
    # W = 1 with Gamma(2, 2) waits: J_tau(u) = sup_l [l - u log E e^{l tau}], checked on a fine grid
    m = IndependentProduct(Gamma(2.0, 2.0), Constant(1.0))
    lam = np.linspace(-30, 1.999, 400_001)
    for u in (0.5, 1.0, 2.5):
        grid = np.max(lam - u * (-2.0 * np.log(1 - lam / 2.0)))
        assert float(renewal_rate_jtau(m, u)) == pytest.approx(grid, abs=1e-6)
        assert float(rate_function_j(m, u).value) == pytest.approx(grid, abs=1e-6)


# ---------------------------------------------------------------------------
# structural properties
# ---------------------------------------------------------------------------

LAWS = {
    "poisson": IndependentProduct(Exponential(1.0), Constant(1.0)),
    "exp_exp": IndependentProduct(Exponential(1.0), Exponential(1.0)),
    "gamma_unif": IndependentProduct(Gamma(2.0, 2.0), Uniform(-1.0, 3.0)),
    "three_atom": DiscreteJoint(THREE_ATOM),
    "four_atom": DiscreteJoint(FOUR_ATOM),
}


@pytest.mark.parametrize("name", sorted(LAWS))
def test_zero_at_mean(name):
    model = LAWS[name]
    mo = model.moments()
    assert float(rate_function_jbar(model, mo.mean_w / mo.mean_tau)) < 1e-8
    assert float(cramer_transform(model, mo.mean_tau, mo.mean_w)) < 1e-8


@pytest.mark.parametrize("name", sorted(LAWS))
@settings(max_examples=10, deadline=None)
@given(a=st.floats(0.3, 3.0), b=st.floats(-1.5, 4.0), x=st.floats(-2.0, 0.9), y=st.floats(-1.0, 0.9))
def test_fenchel_young(name, a, b, x, y):
    model = LAWS[name]
    lam = cramer_transform(model, a, b)
    L = model.log_mgf(x, y)
    assert lam >= -1e-12
    if math.isfinite(lam) and math.isfinite(L):
        assert a * x + b * y <= float(lam) + float(L) + 1e-8


@pytest.mark.parametrize("name", sorted(LAWS))
def test_saddle_x_below_theta0(name):
    model = LAWS[name]
    theta0 = float(model.exp_moment_bounds().theta0)
    mu = model.lln_rate
    for m in (mu - 0.4, mu + 0.3, mu + 1.0):
        res = rate_function_j(model, m)
        if res.status == "Converged" and res.x_star is not None:
            assert res.x_star <= theta0 + 1e-6


@settings(max_examples=200, deadline=None)
@given(
    m=st.floats(-2, 4),
    beta=st.floats(1e-3, 5),
    x=st.floats(-3, 0.9),
    y=st.floats(-2, 2),
    eps=st.floats(1e-3, 1),
)
def test_lagrangian_shift_identity(m, beta, x, y, eps):
    model = LAWS["gamma_unif"]
    diff = lagrangian(model.shift_tau(eps), m, beta, x, y) - lagrangian(model, m, beta, x, y)
    assert diff == pytest.approx(-x * beta * eps, abs=1e-10)


def test_lagrangian_shift_example(poisson):
    d = lagrangian(poisson.shift_tau(0.1), 1, 1, 0.5, 0) - lagrangian(poisson, 1, 1, 0.5, 0)
    assert d == pytest.approx(-0.05, abs=1e-15)


def test_profile_shape(poisson, two_atom):
    prof = rate_profile(poisson, 0.25, 4.0, 16)
    err = max(abs(float(v) - poisson_rate(m)) for m, v in zip(prof.m_grid, prof.jbar_values))
    assert err < 1e-6
    assert prof.is_convex
    prof = profile_on_grid(two_atom, [0.5, 1.0, 1.5])
    vals = [float(v) for v in prof.jbar_values]
    assert np.argmin(vals) == 1 and vals[1] < 1e-8
    text = prof.to_csv()
    assert text.splitlines()[0] == "m,j,jbar,beta_star,x_star,y_star,status"
    with pytest.raises(ParameterError):
        rate_profile(poisson, 2.0, 1.0, 5)


# ---------------------------------------------------------------------------
# deviation bound
# ---------------------------------------------------------------------------


def test_deviation_bound_full_ldp(poisson):
    db = deviation_bound(poisson, 1.0)
    assert float(db.bound) == pytest.approx(poisson_rate(2.0), abs=1e-8)
    assert db.branch == "full-ldp" and db.kappa_used is None
    # kappa is ignored without a moment term
    assert deviation_bound(poisson, 1.0, kappa=0.3).bound == db.bound
    low = deviation_bound(poisson, 0.5, "Lower")
    assert float(low.bound) == pytest.approx(poisson_rate(0.5), abs=1e-8)


def test_deviation_bound_truncated(exp_exp):
    b, k = deviation_bound(exp_exp, 1.0, kappa=0.5)
    assert k == 0.5
    assert float(b) == pytest.approx(min(exp_exp_rate(1.5), 0.125), abs=1e-7)
    near_one = deviation_bound(exp_exp, 1.0, kappa=1 - 1e-9)
    assert float(near_one.bound) < 1e-9
    opt = deviation_bound(exp_exp, 1.0)
    assert opt.bound >= b
    # at the optimum both terms of the min meet
    assert float(opt.ldp_term) == pytest.approx(opt.moment_term, abs=1e-6)
    assert opt.moment_term == pytest.approx(1.0 * (1 - opt.kappa_used) / 4, abs=1e-15)


def test_deviation_bound_hypotheses():
    m = IndependentProduct(Exponential(1.0), Constant(1.0))
    with pytest.raises(ParameterError):
        deviation_bound(m, -1.0)
    with pytest.raises(ParameterError):
        deviation_bound(m, 1.0, side="Both")
    heavy = DiscreteJoint(TWO_ATOM)  # finite support: both boundaries infinite, no violation
    assert deviation_bound(heavy, 0.5).bound > 0


def test_hypothesis_violation_on_zero_boundary():
    # W = tau^2 with exponential tau has no exponential moment of any order
    m = DeterministicReward(Exponential(1.0), RewardMap("square"))
    assert float(m.exp_moment_bounds().eta0) == 0.0
    with pytest.raises(HypothesisViolation, match="eta0"):
        deviation_bound(m, 0.5)
