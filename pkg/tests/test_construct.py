import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxbc.construct import (
    PRESET_FAMILIES,
    ConstructionParams,
    assemble_B,
    build_b0,
    build_Z,
    check_constraint,
    complete_annihilator,
    construct,
    preset,
)
from relaxbc.errors import DegenerateConstruction, InvalidLayerDatum
from relaxbc.model import build_model, given_bc
from relaxbc.signals import SmoothSignal

from conftest import layer_datum, random_given, random_model

SINE = SmoothSignal.from_json({"components": [[{"poly": [1.0], "freq": 1.0, "phase": -math.pi / 2}]]})


def test_build_Z_p1(p1):
    assert np.allclose(build_Z(p1, [[1, 1]], [[0.0]]), [[-1], [1], [0]])
    assert np.allclose(build_Z(p1, [[1, 1]], [[-1.0]]), [[-1], [0], [-1]])


def test_annihilator_coordinate_axis():
    Bbar = complete_annihilator(np.array([[1.0], [0.0], [0.0]]))
    assert Bbar.shape == (2, 3)
    assert np.abs(Bbar @ [1, 0, 0]).max() == 0
    assert np.linalg.matrix_rank(Bbar) == 2


def test_annihilator_p1_and_hand_choice(p1):
    Z = build_Z(p1, [[1, 1]], [[0.0]])
    hand = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.abs(hand @ Z).max() == 0
    ours = complete_annihilator(Z)
    assert np.abs(ours @ Z).max() < 1e-15
    chi, *_ = np.linalg.lstsq(hand.T, ours.T, rcond=None)
    assert np.allclose(chi.T @ hand, ours, atol=1e-12)


def test_annihilator_rank_deficient():
    with pytest.raises(DegenerateConstruction):
        complete_annihilator(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_assemble_B_p1(p1):
    Bbar = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    B_u, B_p = assemble_B(p1, Bbar)
    assert np.array_equal(B_u, [[1, 1], [0, 0]])
    assert np.array_equal(B_p, [[0, 0], [0, 1]])
    _, B_p2 = assemble_B(p1, Bbar, [[0.1], [0.0]])
    assert np.allclose(B_p2, [[0.1, 0], [0, 1]])


def test_assemble_B_degenerate(p1):
    with pytest.raises(DegenerateConstruction):
        assemble_B(p1, np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))


def test_l_equals_n_construction():
    m = build_model(np.eye(2), [1.0, 2.0], [4.0, 9.0])
    g = given_bc(m, np.eye(2), SmoothSignal.polynomial([[1.0, 2.0]]))
    bc = construct(m, g, ConstructionParams(BpU_free=np.array([[0.1, 0.0], [0.2, 0.3]])))
    assert np.array_equal(bc.B_u, np.eye(2))
    assert np.allclose(bc.B_p, [[0.1, 0.0], [0.2, 0.3]])
    assert np.allclose(bc.b0(0.4), g.bhat(0.4))


def test_b0_p1_sine(p1):
    g = given_bc(p1, [[1.0, 1.0]], SINE)
    bc = preset(p1, g, "GEN_CZERO")
    ts = np.linspace(0, 2, 9)
    assert np.allclose(bc.b0(ts), np.vstack([np.sin(ts), 0 * ts]), atol=1e-15)


def test_b0_scalar_l_equals_n():
    m = build_model(np.eye(1), [1.0], [4.0])
    g = given_bc(m, [[1.0]], SINE)
    assert build_b0(m, [[1.0]], [[0.0]], g) is g.bhat


def test_b0_rejects_unstable_datum(p1, p1_given):
    bad = SmoothSignal.polynomial([[1.0, 0.0]])
    with pytest.raises(InvalidLayerDatum):
        build_b0(p1, np.eye(2), np.eye(2), p1_given, bad)


def test_presets_p1(p1, p1_given):
    bc = preset(p1, p1_given, "GEN_CZERO", {"Bu11": 1, "Bp11": 0, "Bp22": 1, "star": 0})
    assert np.allclose(bc.B_u, [[1, 1], [0, 0]]) and np.allclose(bc.B_p, [[0, 0], [0, 1]])
    assert check_constraint(p1, bc) < 1e-15
    lam = preset(p1, p1_given, "GEN_CLAMBDA")
    assert lam.B_p[0, 1] == pytest.approx(-1.0)
    assert check_constraint(p1, lam) < 1e-14


def test_preset_n1_pos_hypothesis():
    m = build_model(np.eye(1), [1.0], [4.0])
    g = given_bc(m, [[1.0]])
    ok = preset(m, g, "N1_POS", {"B_p": [[-0.5]]})
    assert ok.hypothesis and not ok.warnings
    bad = preset(m, g, "N1_POS", {"B_p": [[-1.0]]})
    assert bad.warnings and not bad.hypothesis
    assert bad.B_u[0, 0] == 1.0


def test_preset_n1_neg_closed_form():
    m = build_model(np.eye(1), [-1.0], [4.0])
    g = given_bc(m, np.zeros((0, 1)))
    bc = preset(m, g, "N1_NEG", {"Ctilde": -1.0})
    assert np.array_equal(bc.B_u, [[1.0]]) and np.array_equal(bc.B_p, [[0.0]])
    assert check_constraint(m, bc) == 0


@pytest.mark.parametrize("family", ["N2_L1_CZERO", "N2_L1_CNONZERO"])
def test_preset_n2_constraint(family):
    m = build_model([[1.0, 0.2], [0.1, 1.0]], [1.0, -0.5], [3.0, 1.0])
    g = given_bc(m, [[1.0, 0.5]])
    bc = preset(m, g, family)
    assert check_constraint(m, bc) < 1e-12


def test_preset_families_listed():
    assert len(PRESET_FAMILIES) == 7


def test_random_B_violates_constraint(p1, p1_given):
    rng = np.random.default_rng(3)
    bc = preset(p1, p1_given, "GEN_CZERO")
    worst = []
    for _ in range(20):
        rnd = bc.replace(B_u=rng.standard_normal((2, 2)), B_p=rng.standard_normal((2, 2)))
        worst.append(check_constraint(p1, rnd))
    assert np.median(worst) > 0.1


@given(st.integers(0, 100_000))
def test_random_construction(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = random_model(rng, n=n, l=int(rng.integers(1, n)))
    g = random_given(rng, m, SmoothSignal.from_json(
        {"components": [[{"poly": rng.standard_normal(2).tolist(), "rate": -1.0}] for _ in range(m.l)]}))
    Ct = rng.standard_normal((n - m.l, n - m.l))
    D = layer_datum(rng, m)
    bc = construct(m, g, ConstructionParams(Ctilde=Ct, D=D))
    Z = build_Z(m, g.Bhat, Ct)
    assert np.linalg.matrix_rank(Z) == n - m.l
    Bbar = np.hstack([bc.B_u, bc.B_p @ m.R1S])
    assert np.abs(Bbar @ Z).max() <= 1e-10
    assert np.linalg.matrix_rank(bc.B) == n
    assert check_constraint(m, bc) <= 1e-10
    ts = rng.uniform(0, 3, 20)
    J = np.linalg.solve(g.Bhat @ m.R1U, g.bhat(ts))
    expect = bc.B_u @ m.R1U @ J + (bc.B_p - bc.B_u @ m.Finv) @ D(ts)
    assert np.abs(bc.b0(ts) - expect).max() <= 1e-11 * max(1.0, np.abs(expect).max())
    other = complete_annihilator(Z, "svd")
    ours = complete_annihilator(Z, "qr")
    chi, *_ = np.linalg.lstsq(ours.T, other.T, rcond=None)
    assert np.abs(chi.T @ ours - other).max() <= 1e-9
    assert abs(np.linalg.det(chi)) > 1e-6
