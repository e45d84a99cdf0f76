import math

import numpy as np
import pytest

from oracles import TWO_PI, load_frozen, std_generating_pair, std_map
from twistrot.expr import ParseError
from twistrot.maps import (
    AnnulusMap,
    LiftSpec,
    Order,
    TwistConstants,
    TwistViolation,
    apply_lift,
    compare_order,
    compose_fiber_translation,
    deck_audit,
    generating_pair,
    integrable,
    lift_from_mapping,
    load_lift,
    parse_lift,
    power_minus,
    standard_map,
    sup_norm,
    twist_audit,
    twist_constants,
)
from twistrot.expr import TrigPoly

FROZEN = load_frozen()


def test_parse_zero_perturbation_is_integrable():
    L = parse_lift("k=1; phi1=0; phi2=0")
    assert L.is_integrable and L.k == 1 and L.t == 0.0
    assert apply_lift(L, (0.25, 0.5)) == (0.75, 0.5)


def test_parse_standard_map_matches_closed_form(rng):
    L = parse_lift("a=0.5; k=1; phi1=(a/(2*pi))*sin(2*pi*x); phi2=(a/(2*pi))*sin(2*pi*x)")
    x, y = rng.random(500), rng.uniform(-2, 2, 500)
    fx, fy = L(x, y)
    ox, oy = std_map(0.5, x, y)
    assert np.max(np.abs(fx - ox)) < 1e-14
    assert np.max(np.abs(fy - oy)) < 1e-14


def test_parse_rejects_bare_y():
    with pytest.raises(ParseError):
        parse_lift("k=1; phi1=2*y")


def test_parse_reports_position():
    with pytest.raises(ParseError) as err:
        parse_lift("k=1; phi1=sin(2*pi*x")
    assert err.value.pos > 0


def test_parse_rejects_zero_k():
    with pytest.raises(ParseError):
        parse_lift("k=0; phi1=0")


def test_twist_violation_is_reported():
    # k + d(phi1)/dy = 1 - 2 cos(2 pi y) changes sign
    with pytest.raises(TwistViolation):
        parse_lift("k=1; phi1=(1/pi)*sin(2*pi*y)")


@pytest.mark.parametrize(
    "z, expected",
    [((0.0, 0.0), (0.0, 0.0))],
)
def test_standard_fixed_point(std05, z, expected):
    assert apply_lift(std05, z) == expected


def test_family_translation_convention():
    L = integrable(1, t=0.3)
    assert apply_lift(L, (0.0, 0.0)) == (0.0, 0.3)


def test_deck_audit_values(std2):
    # exact up to rounding of x + n + k (y + m)
    assert deck_audit(integrable(1)).max_deviation < 1e-15
    assert deck_audit(std2).max_deviation < 1e-12


def test_deck_audit_catches_broken_map():
    class Broken:
        k = 1

        def __call__(self, x, y):
            return x + y, y + y  # phi2 = y is not periodic

    rep = deck_audit(Broken())
    assert not rep.passed
    assert rep.max_deviation == pytest.approx(1.0)


def test_twist_constants_closed_forms(std05):
    flat = twist_constants(integrable(1), pad=0.0)
    assert flat.k_tw == 1.0 and flat.A == 1e-12 and flat.B == 1e-12
    # largest singular value of [[1, 1], [0, 1]] is the golden ratio
    assert flat.M == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-12)
    C = twist_constants(std05, pad=0.0)
    assert C.k_tw == 1.0
    assert C.A == pytest.approx(0.5 / TWO_PI, rel=2e-3)
    assert C.B == pytest.approx(0.5, rel=2e-3)
    padded = twist_constants(std05)
    assert padded.A >= 0.5 / TWO_PI and padded.B >= 0.5
    assert twist_constants(standard_map(2 * math.pi), pad=0.0).k_tw == 1.0


def test_twist_constants_are_padded(std05):
    raw, padded = twist_constants(std05, pad=0.0), twist_constants(std05)
    assert padded.k_tw < raw.k_tw and padded.A > raw.A and padded.B > raw.B and padded.M > raw.M


def test_generating_pair_examples():
    assert generating_pair(integrable(1), 0.2, 0.7) == pytest.approx((0.5, 0.5), abs=1e-15)
    L = standard_map(0.5)
    assert generating_pair(L, 0.0, 0.0) == pytest.approx((0.0, 0.0), abs=1e-15)
    g, gp = generating_pair(L, 0.25, 0.75)
    ref = FROZEN["std_a05_genpair_025_075"]
    assert g == pytest.approx(ref["g_scan"][0], abs=1e-10)
    assert g == pytest.approx(ref["g"], abs=1e-12)
    assert gp == pytest.approx(ref["gprime"], abs=1e-12)


def test_generating_pair_matches_closed_form(rng):
    L = standard_map(2.0)
    x, xp = rng.random(1000), rng.uniform(-2, 2, 1000)
    g, gp = generating_pair(L, x, xp)
    og, ogp = std_generating_pair(2.0, x, xp)
    assert np.max(np.abs(g - og)) < 1e-11
    assert np.max(np.abs(gp - ogp)) < 1e-11


def test_generating_pair_on_twisting_phi1(rng):
    L = parse_lift("k=1; phi1=0.1*sin(2*pi*y) + 0.2*cos(2*pi*x); phi2=0.3*sin(2*pi*(x+y))")
    x, xp = rng.random(400), rng.uniform(-3, 3, 400)
    g, _ = generating_pair(L, x, xp)
    fx, _ = L(x, g)
    assert np.max(np.abs(fx - xp)) < 1e-10


def test_conjugated_family_is_strongly_increasing(std05):
    assert compare_order(std05, std05.conjugated(0.1)) is Order.STRONGLY_LESS
    assert compare_order(std05.conjugated(0.1), std05) is Order.STRONGLY_GREATER


def test_unhalved_family_is_strongly_increasing(std05):
    # f(x, y + t) + (0, t) is the same family at twice the parameter
    assert compare_order(std05, std05.conjugated(2 * 0.05)) is Order.STRONGLY_LESS
    x = np.linspace(0, 1, 7)
    y = np.linspace(-1, 1, 7)
    fx, fy = std05.conjugated(0.2)(x, y)
    ox, oy = std05(x, y + 0.1)
    assert np.allclose(fx, ox, atol=1e-14) and np.allclose(fy, oy + 0.1, atol=1e-14)


def test_conjugated_shift_of_generating_pair(std05):
    x, xp = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    g0, gp0 = generating_pair(std05, x, xp)
    g1, gp1 = generating_pair(std05.conjugated(0.1), x, xp)
    assert np.allclose(g0 - g1, 0.05, atol=1e-11)
    assert np.allclose(gp1 - gp0, 0.05, atol=1e-11)


def test_order_equal_and_incomparable(std05):
    assert compare_order(std05, std05) is Order.EQUAL
    assert compare_order(std05, standard_map(1.0)) is Order.INCOMPARABLE


def test_power_minus_examples(rng):
    x, y = rng.random(50), rng.uniform(-1, 1, 50)
    hx, hy = power_minus(integrable(1), 1, 0)(x, y)
    assert np.allclose(hx, (x + y) % 1.0) and np.allclose(hy, y)
    hx, hy = power_minus(integrable(1), 2, 1)(x, y)
    assert np.allclose(hx, (x + 2 * y) % 1.0) and np.allclose(hy, y - 1)
    hx, hy = power_minus(standard_map(0.5), 3, 1).lift(x, y)
    ox, oy = x, y
    for _ in range(3):
        ox, oy = std_map(0.5, ox, oy)
    assert np.max(np.abs(hx - ox)) < 1e-14 and np.max(np.abs(hy - (oy - 1))) < 1e-14


def test_fiber_translation(rng):
    L = integrable(1)
    x, y = rng.random(64), rng.random(64)
    same = compose_fiber_translation(L, 0.0)
    assert np.array_equal(np.array(same(x, y)), np.array(L(x, y)))
    shifted = compose_fiber_translation(L, 0.25)
    assert np.allclose(shifted(x, y)[1], L(x, y)[1] + 0.25, atol=1e-15)
    psi = TrigPoly.from_terms([(1, 0, 0.0, 0.1)])
    wob = compose_fiber_translation(L, psi)
    X, XP = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    _, gp0 = generating_pair(L, X, XP)
    _, gp1 = generating_pair(wob, X, XP)
    assert np.max(np.abs(gp1 - gp0 - 0.1 * np.sin(TWO_PI * XP))) < 1e-14
    samples = 0.1 * np.sin(TWO_PI * np.arange(32) / 32)
    sampled = compose_fiber_translation(L, samples)
    assert sup_norm(sampled.psi - psi) < 1e-14


def test_fiber_translation_rejects_y_dependence():
    with pytest.raises(ValueError):
        compose_fiber_translation(integrable(1), TrigPoly.from_terms([(0, 1, 1.0, 0.0)]))


def test_annulus_map_inverse_and_flip(std05, rng):
    h = power_minus(std05, 2, 1)
    x, y = rng.random(100), rng.uniform(-1, 1, 100)
    ix, iy = h.inverse().lift(*h.lift(x, y))
    assert np.max(np.abs(ix - x)) < 1e-10 and np.max(np.abs(iy - y)) < 1e-10
    fx, fy = h.flip().lift(x, -y)
    hx, hy = h.lift(x, y)
    assert np.allclose(fx, hx) and np.allclose(fy, -hy)


def test_load_lift_from_toml(tmp_path):
    path = tmp_path / "m.toml"
    path.write_text('[map]\nk = 1\nt = 0.25\nphi1 = "0"\nphi2 = "(a/(2*pi))*sin(2*pi*x)"\n[map.params]\na = 0.5\n')
    L = load_lift(path)
    assert L.t == 0.25
    x = np.linspace(0, 1, 5)
    assert np.allclose(L(x, 0 * x)[1], 0.25 + 0.5 / TWO_PI * np.sin(TWO_PI * x))
    assert lift_from_mapping({"k": 2}).k == 2


def test_to_text_round_trip(std05):
    again = parse_lift(std05.to_text())
    x, y = np.linspace(0, 1, 13), np.linspace(-1, 2, 13)
    assert np.array_equal(np.array(again(x, y)), np.array(std05(x, y)))
    assert again.digest() == std05.digest()


from hypothesis import given, strategies as st


@given(st.floats(0, 1), st.floats(-2, 2), st.integers(1, 3))
def test_chain_rule_jacobian_matches_finite_differences(x, y, q):
    L = parse_lift("k=2; phi1=0.1*sin(2*pi*(x+y)); phi2=0.05*cos(2*pi*x); psi=0.07*sin(2*pi*x)+0.02*cos(4*pi*x)")
    h = 1e-6
    _, _, J = L.iterate_jac(np.array([x]), np.array([y]), q)
    J = np.asarray(J).reshape(2, 2)
    dx = (np.array(L.iterate(x + h, y, q)) - np.array(L.iterate(x - h, y, q))) / (2 * h)
    dy = (np.array(L.iterate(x, y + h, q)) - np.array(L.iterate(x, y - h, q))) / (2 * h)
    assert np.allclose(J, np.column_stack([dx, dy]), atol=1e-6 * (1 + np.abs(J).max()))
