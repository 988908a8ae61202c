import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from agebrw.rates import Constant, ExpDecay, decaying, rate_from_dict

ks = st.floats(min_value=1e-3, max_value=10.0)
alphas = st.floats(min_value=1e-3, max_value=10.0)


def test_value_examples():
    assert Constant(2).value(7.3) == 2
    assert ExpDecay(1, 1.5).value(0) == 1
    assert ExpDecay(1, 1.5).value(1) == pytest.approx(math.exp(-1.5), rel=1e-15)


def test_cumulative_examples():
    assert Constant(2).cumulative(3) == 6
    # quadrature oracle
    q, _ = quad(lambda s: ExpDecay(4, 4).value(s), 0, 1, epsabs=1e-14)
    assert ExpDecay(4, 4).cumulative(1) == pytest.approx(q, rel=1e-10)
    assert ExpDecay(4, 4).cumulative(1) == pytest.approx(0.9816844, abs=1e-7)


@given(ks, alphas)
@settings(max_examples=50, deadline=None)
def test_cumulative_limit_is_total_mass(k, a):
    rf = ExpDecay(k, a)
    q, _ = quad(lambda s: rf.value(s), 0, 100 / a, epsabs=0, epsrel=1e-12, limit=200)
    assert q == pytest.approx(k / a, rel=1e-8)
    assert rf.cumulative(100 / a) == pytest.approx(k / a, rel=1e-12)


def test_inverse_examples():
    assert Constant(2).inverse_cumulative(6) == 3
    assert ExpDecay(4, 4).inverse_cumulative(2) is None
    assert ExpDecay(4, 4).inverse_cumulative(1) is None
    assert Constant(0).inverse_cumulative(1) is None
    assert Constant(0).inverse_cumulative(0) == 0
    rf = ExpDecay(1, 1)
    t = rf.inverse_cumulative(0.5)
    assert t == pytest.approx(math.log(2), abs=1e-12)
    # bisection oracle
    assert rf._bisect_inverse(0.5) == pytest.approx(math.log(2), abs=1e-11)


@given(ks, alphas, st.floats(min_value=0.0, max_value=0.999999))
@settings(max_examples=200, deadline=None)
def test_inverse_roundtrip(k, a, frac):
    for rf, u in ((ExpDecay(k, a), frac * k / a), (Constant(k), frac * 50)):
        t = rf.inverse_cumulative(u)
        assert t is not None
        assert rf.cumulative(t) == pytest.approx(u, rel=1e-10, abs=1e-300)


def test_first_moment_examples():
    assert Constant(3).first_moment() == 3
    assert ExpDecay(1, 1.5).first_moment() == pytest.approx(0.4, rel=1e-15)
    q, _ = quad(lambda s: ExpDecay(1, 1.5).value(s) * math.exp(-s), 0, 50, epsrel=1e-13)
    assert q == pytest.approx(0.4, rel=1e-10)


@given(ks, alphas)
@settings(max_examples=50, deadline=None)
def test_first_moment_matches_quadrature(k, a):
    rf = ExpDecay(k, a)
    q, _ = quad(lambda s: rf.value(s) * math.exp(-s), 0, math.inf, epsrel=1e-12)
    assert rf.first_moment() == pytest.approx(q, rel=1e-8)


@given(ks, st.floats(min_value=1e-6, max_value=1e-2), st.floats(min_value=0, max_value=5))
@settings(max_examples=100, deadline=None)
def test_small_alpha_approaches_constant(k, a, t):
    assert abs(ExpDecay(k, a).cumulative(t) - Constant(k).cumulative(t)) <= a * k * t * t / 2 + 1e-12


@given(ks, alphas, st.floats(min_value=0, max_value=20), st.floats(min_value=0, max_value=20))
@settings(max_examples=100, deadline=None)
def test_monotonicity(k, a, t1, t2):
    lo, hi = sorted((t1, t2))
    rf = ExpDecay(k, a)
    assert rf.value(hi) <= rf.value(lo)
    assert rf.cumulative(lo) <= rf.cumulative(hi)
    assert rf.value(lo) >= 0


def test_validation():
    with pytest.raises(ValueError):
        Constant(-1)
    with pytest.raises(ValueError):
        ExpDecay(1, 0)
    with pytest.raises(ValueError):
        Constant(1).value(-0.1)
    with pytest.raises(ValueError):
        ExpDecay(1, 1).cumulative(-1)
    with pytest.raises(ValueError):
        rate_from_dict({"type": "weird"})


def test_json_roundtrip_and_helpers():
    for rf in (Constant(2.5), ExpDecay(1.0, 0.3)):
        assert rate_from_dict(rf.to_dict()) == rf
    assert decaying(2, 0) == Constant(2)
    assert decaying(2, 1) == ExpDecay(2, 1)
    assert ExpDecay(2, 0.5).total_mass == 4
    assert Constant(0).is_zero and not Constant(1).is_zero
