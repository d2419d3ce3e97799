import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxbc.signals import ExpPolyTerm, SmoothProfile, SmoothSignal

coef = st.floats(-3, 3, allow_nan=False)


@st.composite
def signals(draw):
    comps = []
    for _ in range(draw(st.integers(1, 3))):
        terms = []
        for _ in range(draw(st.integers(0, 2))):
            poly = draw(st.lists(coef, min_size=1, max_size=4))
            rate = draw(st.floats(-2, 1))
            freq = draw(st.floats(-3, 3))
            terms.append(ExpPolyTerm.make(poly, (0.0, complex(rate, freq))))
        comps.append(terms)
    return SmoothSignal(comps)


@given(signals(), st.floats(0, 2), st.integers(1, 3))
def test_derivative_matches_richardson_difference(sig, t, k):
    h = 1e-3
    f = sig.derivative(k - 1)

    def d(step):
        return (f(t + step) - f(t - step)) / (2 * step)

    fd = (4 * d(h / 2) - d(h)) / 3
    exact = sig(t, k)
    assert np.allclose(exact, fd, rtol=1e-6, atol=1e-6 * (1 + np.abs(exact).max()))


@given(signals(), st.floats(0, 2), st.integers(0, 3))
def test_derivative_signal_agrees_with_evaluation_order(sig, t, k):
    assert np.allclose(sig.derivative(k)(t), sig(t, k), rtol=1e-12, atol=1e-12)


def test_polynomial_and_jet():
    s = SmoothSignal.polynomial([[1.0, 0.0], [2.0, 1.0], [3.0, 0.0]])
    assert np.allclose(s(2.0), [1 + 4 + 12, 2.0])
    jet = np.array([[1.0, -1.0], [0.5, 2.0], [4.0, 0.0]])
    r = SmoothSignal.from_jet(jet)
    assert np.allclose(r.jet(0.0, 2), jet)


def test_sine_from_json():
    s = SmoothSignal.from_json({"components": [[{"poly": [1.0], "freq": 1.0, "phase": -math.pi / 2}]]})
    ts = np.linspace(0, 3, 7)
    assert np.allclose(s(ts)[0], np.sin(ts), atol=1e-14)
    assert np.allclose(s(ts, 1)[0], np.cos(ts), atol=1e-14)


@given(signals())
def test_json_round_trip(sig):
    back = SmoothSignal.from_json(json.loads(json.dumps(sig.to_json())))
    ts = np.linspace(0, 1.5, 5)
    assert np.allclose(back(ts), sig(ts), rtol=1e-14, atol=1e-14)


def test_arithmetic_and_apply():
    a = SmoothSignal.polynomial([[1.0, 2.0], [0.0, 1.0]])
    b = SmoothSignal.polynomial([[0.5, 0.5]])
    t = 0.7
    assert np.allclose((a + b)(t), a(t) + b(t))
    assert np.allclose((a - b)(t), a(t) - b(t))
    M = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, -1.0]])
    assert np.allclose(a.apply(M)(t), M @ a(t))
    assert a.apply(M).dim == 3


def test_profile_third_derivative_order():
    g = SmoothProfile.gaussian([1.0], 1.0, 0.4)
    x = 1.13
    errs = []
    hs = [0.04, 0.02, 0.01]
    for h in hs:
        f = lambda s: g(s, 2)[0]  # noqa: E731
        fd = (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)
        errs.append(abs(fd - g(x, 3)[0]))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.5


def test_profile_vanishes_beyond_support_bound():
    g = SmoothProfile.gaussian([1.0, -2.0], 3.0, 0.5)
    xm = g.support_bound()
    xs = np.linspace(xm, xm + 5, 50)
    for k in range(5):
        assert np.abs(g(xs, k)).max() < 1e-15 * 1.01
    assert xm > 3.0


def test_profile_json_forms():
    doc = {"components": [[{"poly": [2.0], "center": 1.0, "width": 0.5}], [{"poly": [0.0, 1.0], "decay": 2.0}]]}
    p = SmoothProfile.from_json(doc)
    x = 0.8
    assert p(x)[0] == pytest.approx(2 * math.exp(-((x - 1) ** 2) / 0.25))
    assert p(x)[1] == pytest.approx(x * math.exp(-2 * x))
    back = SmoothProfile.from_json(p.to_json())
    assert np.allclose(back(np.linspace(0, 3, 9)), p(np.linspace(0, 3, 9)))
    with pytest.raises(ValueError):
        SmoothProfile.from_json({"components": [[{"center": 1.0, "width": -1.0}]]})
