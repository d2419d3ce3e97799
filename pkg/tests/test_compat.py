import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaxbc.compat import (
    _laurent_time_derivatives,
    build_b1_b2,
    build_initial_data,
    check_D_constraint,
    check_given_compat,
    compat_pipeline,
    compatible_bhat,
    m_vectors,
    regenerate_D,
    relaxation_residual_at,
    verify_relaxation_compat,
)
from relaxbc.construct import ConstructionParams, construct, preset
from relaxbc.model import build_model, given_bc
from relaxbc.signals import SmoothProfile, SmoothSignal

from conftest import random_problem

SCALAR = build_model(np.eye(1), [1.0], [4.0])
X_SQUARED_DECAY = SmoothProfile.from_json({"components": [[{"poly": [0, 0, 1], "decay": 1.0}]]})
X_SQUARED = SmoothProfile.from_json({"components": [[{"poly": [0, 0, 1]}]]})


def test_given_compat_flat(p1, p1_given, bump2):
    rep = check_given_compat(p1, p1_given, bump2, 3)
    assert rep.passed and rep.max_residual() <= 1e-15
    with pytest.raises(ValueError):
        check_given_compat(p1, p1_given, bump2, 4)


def test_given_compat_hand_derivatives():
    g = given_bc(SCALAR, [[1.0]], SmoothSignal.polynomial([[0.0], [0.0], [1.0]]))
    rep = check_given_compat(SCALAR, g, X_SQUARED_DECAY, 2)
    assert rep.passed
    assert [e["residual"] for e in rep.entries] == pytest.approx([0, 0, 0], abs=1e-15)


def test_given_compat_mismatch():
    g = given_bc(SCALAR, [[1.0]], SmoothSignal.polynomial([[1.0]]))
    rep = check_given_compat(SCALAR, g, X_SQUARED_DECAY, 0)
    assert not rep.passed
    assert rep.entries[0]["residual"] == pytest.approx(1.0)


def test_initial_data_examples(p1, bump2):
    init = build_initial_data(SCALAR, X_SQUARED_DECAY)
    x = np.linspace(0, 3, 7)
    assert np.allclose(init.p02(x), -6 * X_SQUARED_DECAY(x, 2))
    weak = build_model(np.eye(1), [1.0], [1.0])
    flat = build_initial_data(weak, X_SQUARED_DECAY)
    assert np.abs(flat.p(x, 0.3)).max() == 0
    init2 = build_initial_data(p1, bump2)
    assert np.allclose(init2.p01(x), -3 * bump2(x, 1))
    assert np.allclose(init2.p(x, 0.1), 0.1 * init2.p01(x) + 0.01 * init2.p02(x))


def test_b1_hand_example():
    g = given_bc(SCALAR, [[1.0]])
    bc = preset(SCALAR, g, "N1_POS", {"B_p": [[0.5]]})
    init = build_initial_data(SCALAR, X_SQUARED)
    m = m_vectors(SCALAR, init)
    assert np.allclose(m[(1, 1)], [6.0, 6.0])
    b1, b2 = build_b1_b2(SCALAR, bc, init)
    assert b1(0.0)[0] == pytest.approx(0.0)
    assert b1(0.0, 1)[0] == pytest.approx(6.0 + 0.5 * 6.0)
    assert b2(0.0)[0] == pytest.approx(0.5 * -12.0)


def test_b2_derivative_formula():
    u0 = SmoothProfile.from_json({"components": [[{"poly": [0.3, -1.0, 0.5, 2.0], "decay": 0.7}]]})
    g = given_bc(SCALAR, [[1.0]])
    bc = preset(SCALAR, g, "N1_POS", {"B_p": [[0.25]]})
    init = build_initial_data(SCALAR, u0)
    _, b2 = build_b1_b2(SCALAR, bc, init)
    d = init.p02(0.0, 1)[0]
    assert b2(0.0, 1)[0] == pytest.approx(1.0 * -d + 0.25 * 1.0 * d)


def test_flat_profile_gives_zero_corrections(p1, p1_given, bump2):
    bc = preset(p1, p1_given, "GEN_CZERO")
    b1, b2 = build_b1_b2(p1, bc, build_initial_data(p1, bump2))
    ts = np.linspace(0, 2, 5)
    assert np.abs(b1(ts)).max() <= 1e-13 and np.abs(b2(ts)).max() <= 1e-13


def test_D_constraint_cases(p1, p1_given, bump2):
    assert check_D_constraint(p1, preset(p1, p1_given, "GEN_CZERO"), bump2).max_residual() == 0
    bc = construct(p1, p1_given, ConstructionParams(Ctilde=np.array([[-1.0]])))
    assert check_D_constraint(p1, bc, bump2).passed
    near = SmoothProfile.gaussian([1.0, 0.7], 0.5, 0.5)
    g = given_bc(p1, [[1.0, 1.0]], SmoothSignal.from_jet(np.array([[1.0, 1.0]]) @ np.zeros((2, 1))))
    rep = check_D_constraint(p1, bc, near)
    assert not rep.passed and rep.max_residual() > 0.1
    fixed = regenerate_D(p1, g, bc, near)
    assert check_D_constraint(p1, fixed, near).passed
    assert np.allclose(fixed.D(0.0), -bc.C @ p1.L1S @ near(0.0))
    assert regenerate_D(p1, p1_given, bc, bump2) is bc


def test_pipeline_passes_and_missing_b2(p1, p1_given):
    u0 = SmoothProfile.gaussian([1.0, 0.7], 0.5, 0.5)
    g = given_bc(p1, [[1.0, 1.0]], compatible_bhat(p1, [[1.0, 1.0]], u0))
    bc, init, rep = compat_pipeline(p1, g, preset(p1, g, "GEN_CZERO"), u0)
    assert rep.passed
    assert rep.max_residual("relaxation") <= 1e-10
    m02 = m_vectors(p1, init)[(0, 2)]
    assert np.abs(bc.B @ m02).max() > 0
    broken = bc.replace(b2=SmoothSignal.zero(2))
    for eps in (1.0, 0.1):
        r0 = relaxation_residual_at(p1, broken, init, eps)[0]
        assert np.allclose(np.abs(r0), eps**2 * np.abs(bc.B @ m02), rtol=1e-10, atol=1e-14)
    assert not verify_relaxation_compat(p1, broken, init).passed


def test_l_equals_n_reduces_to_given():
    m = build_model(np.eye(2), [1.0, 2.0], [4.0, 9.0])
    u0 = SmoothProfile.gaussian([1.0, -0.5], 5.0, 0.6)
    g = given_bc(m, np.eye(2))
    bc, init, rep = compat_pipeline(m, g, preset(m, g, "L_EQ_N"), u0)
    assert rep.passed
    assert bc.b0 is g.bhat


def test_report_serializes(p1, p1_given, bump2):
    _, _, rep = compat_pipeline(p1, p1_given, preset(p1, p1_given, "GEN_CZERO"), bump2)
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["passed"] and {e["identity"] for e in doc["entries"]} == {"given", "layer_datum", "relaxation"}


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_random_pipeline_compatible(seed):
    rng = np.random.default_rng(seed)
    m, g, bc, u0, rep = random_problem(rng)
    assert rep.passed
    init = build_initial_data(m, u0)
    scale = max(1.0, np.abs(bc.B).max() * max(np.abs(u0(0.0, k)).max() for k in range(5)))
    for eps in (1.0, 1e-2, 1e-4):
        for r in relaxation_residual_at(m, bc, init, eps):
            assert np.abs(r).max() <= 1e-10 * scale


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_laurent_coefficients_match_m_vectors(seed):
    rng = np.random.default_rng(seed)
    m, _, _, u0, _ = random_problem(rng)
    init = build_initial_data(m, u0)
    mv = m_vectors(m, init)
    derivs = _laurent_time_derivatives(m, init)
    for i, coeffs in enumerate(derivs):
        for k, v in coeffs.items():
            if k < 0:
                assert np.abs(v).max() <= 1e-10 * max(1.0, np.abs(mv[(i, 1)]).max())
        for k in (1, 2):
            ref = mv[(i, k)]
            assert np.allclose(coeffs.get(k, 0 * ref), ref, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(ref).max()))
