import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agebrw.expectation import (
    ExpectationParams, compare_regime, crossing_time, integrate_ode, n_dot, peak_time,
    s_closed, trajectory, v_closed, v_dot_closed,
)

P = ExpectationParams


def test_v_closed_examples():
    assert v_closed(P(2.0, 1.0, 3.0), 0) == 3.0
    assert v_closed(P(4, 4), 1) == pytest.approx(5 * math.exp(-1), rel=1e-15)
    frozen = 2.52 / 1.02 * math.exp(0.2) - 1.5 / 1.02 * math.exp(-10)
    assert v_closed(P(2.52, 1.5), 10) == pytest.approx(frozen, rel=1e-13)
    assert v_closed(P(2.52, 1.5), 10) == pytest.approx(3.017517, abs=1e-6)


def test_s_closed_examples():
    assert s_closed(P(2.5, 1.5), 7.0) == pytest.approx(1.0, rel=1e-15)
    assert s_closed(P(2.52, 1.5), 10) == pytest.approx(math.exp(0.08), rel=1e-14)
    assert s_closed(P(1, 1, 2.0), 0) == 2.0


def test_ode_examples():
    r = integrate_ode(P(4, 4), 1e-3, 10)
    cl = v_closed(P(4, 4), r.t)
    assert np.max(np.abs(r.v - cl) / cl) < 1e-6
    assert r.step_ok
    flat = integrate_ode(P(1.0, 2.0), 1e-3, 1)
    assert flat.v_dot[0] == 0
    shape = integrate_ode(P(2.45, 1.5), 1e-3, 10)
    i = int(np.argmax(shape.v))
    assert 0 < i < len(shape.v) - 1 and shape.v[-1] < shape.v[i]


def test_step_doubling_flags_coarse_step():
    assert not integrate_ode(P(4.5, 0.1), 0.5, 10).step_ok


def test_batch_matches_single():
    lam, al = np.array([0.5, 2.0, 4.0]), np.array([1.0, 1.5, 4.0])
    batch = integrate_ode(lam=lam, alpha=al, h=1e-2, T=2)
    for j in range(3):
        single = integrate_ode(P(lam[j], al[j]), 1e-2, 2)
        assert np.allclose(batch.v[:, j], single.v, rtol=1e-14)


def test_regimes():
    assert compare_regime(P(2.52, 1.5)).case == 1
    assert compare_regime(P(2.5, 1.5)).case == 2
    assert compare_regime(P(2.45, 1.5)).case == 3
    assert compare_regime(P(4, 4)).case == 4
    assert compare_regime(P(1, 4)).case == 5


@pytest.mark.parametrize("lam,alpha", [(2.52, 1.5), (2.45, 1.5), (4, 4), (1, 3)])
def test_regime_asymptotics(lam, alpha):
    p = P(lam, alpha)
    reg = compare_regime(p)
    t = 60.0
    assert v_closed(p, t) / reg.asymptotic(t) == pytest.approx(1, rel=0.03)


def test_peak_time():
    assert peak_time(P(0.5, 2)) is None
    assert peak_time(P(2.5, 1.5)) is None
    assert peak_time(P(3.0, 1.5)) is None
    p = P(2.45, 1.5)
    t = peak_time(p)
    assert t > 0 and v_closed(p, t) > 1
    analytic = math.log(1.5 / (2.45 * (2.5 - 2.45))) / (2.45 - 1.5)
    assert t == pytest.approx(analytic, rel=1e-10)
    q = P(2.0, 2.0)  # resonance: t* = (lam - 1)/lam
    assert peak_time(q) == pytest.approx(0.5, rel=1e-10)


def test_initial_slope_finite_differences():
    for lam, a in ((2.52, 1.5), (0.3, 0.7), (4, 4)):
        p = P(lam, a, 2.0)
        est = {}
        for h in (1e-3, 1e-4, 1e-5):
            est[h] = (v_closed(p, h) - v_closed(p, 0)) / h
        target = (lam - 1) * 2.0
        assert abs(est[1e-5] - target) <= 1e-4 * max(abs(target), 1)
        rich = (10 * est[1e-4] - est[1e-3]) / 9  # first-order Richardson, step ratio 10
        assert abs(rich - target) <= abs(est[1e-4] - target) + 1e-9
        assert v_dot_closed(p, 0) == pytest.approx(target, rel=1e-12, abs=1e-12)


@given(st.floats(min_value=0.1, max_value=5), st.floats(min_value=0.1, max_value=5),
       st.floats(min_value=0.1, max_value=10), st.floats(min_value=0, max_value=10))
@settings(max_examples=100, deadline=None)
def test_linearity_in_v0(lam, alpha, v0, t):
    assert v_closed(P(lam, alpha, v0), t) == pytest.approx(v0 * v_closed(P(lam, alpha), t), rel=1e-13)


def test_resonance_seam():
    for a in (0.5, 2.0, 4.0):
        for t in (0.5, 3.0, 10.0):
            ref = v_closed(P(a, a), t)
            for eps in (1e-6, -1e-6, 1e-9, -1e-9):
                assert abs(v_closed(P(a + eps, a), t) - ref) / ref < 1e-4
            # jump at the switch is bounded by cancellation in the exact form, eps/|delta|
            inside, outside = v_closed(P(a + 0.99e-8, a), t), v_closed(P(a + 1.01e-8, a), t)
            assert abs(inside - outside) / ref < 2.2e-16 / 1e-8 * 2


def test_dominance_properties():
    p1 = P(2.52, 1.5)
    T0 = crossing_time(p1)
    ts = np.linspace(0.01, 200, 4000)
    after = ts[ts > (T0 or 0)]
    assert np.all(v_closed(p1, after) > s_closed(p1, after))
    for lam, a in ((2.45, 1.5), (4, 4), (1, 3)):
        p = P(lam, a)
        T0 = crossing_time(p)
        assert T0 is not None
        later = np.linspace(T0 + 1e-6, T0 + 50, 200)
        assert np.all([s_closed(p, t) > v_closed(p, t) for t in later])


def test_n_dot_is_birth_rate():
    p = P(2.0, 1.0)
    t = np.linspace(0, 5, 11)
    # births per unit time: V' + V, equal to V0 times the first-moment density at t=0
    assert n_dot(p, 0) == pytest.approx(p.lam * p.v0, rel=1e-12)
    assert np.all(n_dot(p, t) > 0)


def test_trajectory_table(tmp_path):
    tr = trajectory(P(2.52, 1.5), 1.0, 0.1, 1e-3)
    assert tr.v[0] == tr.s[0] == 1
    assert np.max(np.abs(tr.v_rk4 - tr.v) / tr.v) < 1e-9
    path = tmp_path / "x.csv"
    tr.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,V_closed,S_closed,V_rk4,regime_case"
    assert len(lines) == 12


def test_validation():
    with pytest.raises(ValueError):
        P(0, 1)
    with pytest.raises(ValueError):
        v_closed(P(1, 1), -1)
    with pytest.raises(ValueError):
        integrate_ode(P(1, 1), 0, 1)
