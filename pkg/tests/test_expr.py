import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import TWO_PI
from twistrot.expr import ParseError, TrigPoly, parse_expression, parse_program

coef = st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 6))
freq = st.integers(-3, 3)
rows = st.lists(st.tuples(freq, freq, coef, coef), max_size=5)
points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


def brute(rows, x, y):
    return sum(c * math.cos(TWO_PI * (a * x + b * y)) + d * math.sin(TWO_PI * (a * x + b * y)) for a, b, c, d in rows)


def test_constants_and_arithmetic():
    assert parse_expression("2 + 3*4 - 1/2") == TrigPoly.constant(13.5)
    assert parse_expression("2^3") == TrigPoly.constant(8.0)
    assert parse_expression("-(1 + 1)") == TrigPoly.constant(-2.0)


def test_sin_shift_by_phase():
    p = parse_expression("sin(2*pi*x + pi/2)")
    xs = np.linspace(0, 1, 17)
    assert np.allclose(p(xs), np.cos(TWO_PI * xs), atol=1e-14)


def test_square_of_sine_expands():
    p = parse_expression("sin(2*pi*x)^2")
    xs = np.linspace(0, 1, 33)
    assert np.allclose(p(xs), np.sin(TWO_PI * xs) ** 2, atol=1e-14)


def test_implicit_product():
    p = parse_expression("2 pi", {})
    assert p == TrigPoly.constant(2 * math.pi)


@pytest.mark.parametrize(
    "text",
    ["x", "sin(x)", "sin(2*pi*x*y)", "1/sin(2*pi*x)", "sin(2*pi*0.5*x)", "2^x", "exp(1)", "(1 + 2", "1 +"],
)
def test_rejects_non_periodic_or_malformed(text):
    with pytest.raises(ParseError) as e:
        parse_expression(text)
    assert 0 <= e.value.pos <= len(text)


def test_program_parameters_feed_fields():
    env, polys = parse_program("a = 0.5\nphi = a/(2*pi)*sin(2*pi*x)", ("phi",))
    assert env == {"a": 0.5}
    assert np.isclose(polys["phi"](0.25), 0.5 / TWO_PI)


def test_program_duplicate_and_reserved_names():
    with pytest.raises(ParseError):
        parse_program("a = 1; a = 2", ())
    with pytest.raises(ParseError):
        parse_program("pi = 3", ())


@given(rows, points)
def test_evaluation_matches_definition(r, z):
    p = TrigPoly.from_terms(r)
    assert math.isclose(float(p(*z)), brute(r, *z), abs_tol=1e-9)


@given(rows)
def test_text_round_trip(r):
    p = TrigPoly.from_terms(r)
    assert parse_expression(p.to_text()) == p


@given(rows, rows, points)
def test_product_is_pointwise(r1, r2, z):
    p, q = TrigPoly.from_terms(r1), TrigPoly.from_terms(r2)
    assert math.isclose(float((p * q)(*z)), float(p(*z)) * float(q(*z)), abs_tol=1e-8)


@given(rows, points, st.floats(-1, 1))
def test_shift_y(r, z, s):
    p = TrigPoly.from_terms(r)
    assert math.isclose(float(p.shift_y(s)(*z)), float(p(z[0], z[1] + s)), abs_tol=1e-9)


@given(rows, points)
def test_periodic_in_both_variables(r, z):
    p = TrigPoly.from_terms(r)
    v = float(p(*z))
    assert math.isclose(float(p(z[0] + 1, z[1])), v, abs_tol=1e-9)
    assert math.isclose(float(p(z[0], z[1] - 1)), v, abs_tol=1e-9)


@given(rows, points)
def test_sup_bound_dominates(r, z):
    p = TrigPoly.from_terms(r)
    assert abs(float(p(*z))) <= p.sup_bound() + 1e-9
