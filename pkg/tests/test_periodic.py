import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import load_frozen, std_eigenvalues, std_jacobian
from twistrot.maps import integrable, standard_map
from twistrot.periodic import (
    ELLIPTIC,
    NODE,
    ORBIT_HEADER,
    PARABOLIC,
    REFLECTION_SADDLE,
    SADDLE,
    CensusWarning,
    PeriodicOrbit,
    classify,
    classify_eigenvalues,
    find_orbits,
    lefschetz_audit,
    orbits_csv,
    torus_dist,
)
from twistrot.rotation import birkhoff_rho

FROZEN = load_frozen()


def _by_x(orbits):
    return sorted(orbits, key=lambda o: o.lift[0])


def test_standard_fixed_points(std05):
    found = _by_x(find_orbits(std05, 0, 0, 1))
    assert [round(o.lift[0], 9) for o in found] == [0.0, 0.5]
    assert all(abs(o.lift[1]) < 1e-9 for o in found)
    for o in found:
        ref = FROZEN["std_a05_fixed_points"]["0.0" if o.lift[0] < 0.25 else "0.5"]
        assert abs(o.trace - ref["trace"]) < 1e-9
        assert np.allclose(sorted(abs(v) for v in o.eigenvalues), ref["eig_abs"], atol=1e-9)
    assert [(o.kind, o.index) for o in found] == [(SADDLE, -1), (ELLIPTIC, 1)]


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 2.0, 3.0])
def test_eigenvalues_match_closed_form(a):
    L = standard_map(a)
    for o in find_orbits(L, 0, 0, 1):
        key = lambda v: (round(v.real, 6), v.imag)
        ref = sorted(std_eigenvalues(a, o.lift[0]), key=key)
        got = sorted((complex(v) for v in o.eigenvalues), key=key)
        assert max(abs(u - v) for u, v in zip(got, ref)) < 1e-9
        assert np.allclose(np.array(o.jacobian), std_jacobian(a, o.lift[0]), atol=1e-12)
        assert abs(o.determinant - 1.0) < 1e-12


def test_a3_center_is_elliptic():
    kinds = {round(o.lift[0], 6): o.kind for o in find_orbits(standard_map(3.0), 0, 0, 1)}
    assert kinds == {0.0: SADDLE, 0.5: ELLIPTIC}


def test_deck_shifted_type(std05):
    found = _by_x(find_orbits(std05, 1, 0, 1))
    assert [round(o.lift[0], 9) for o in found] == [0.0, 0.5]
    assert all(abs(o.lift[1] - 1.0) < 1e-9 for o in found)


def test_integrable_is_degenerate(flat):
    found = find_orbits(flat, 0, 0, 1)
    assert found.degenerate and len(found) == 0
    with pytest.warns(CensusWarning):
        rep = lefschetz_audit(flat, 0, 1)
    assert not rep.passed and rep.degenerate


@pytest.mark.parametrize(
    "lams,kind,index",
    [
        ((-2.0, -0.5), REFLECTION_SADDLE, 1),
        ((0.5, 2.0), SADDLE, -1),
        ((complex(0.6, 0.8), complex(0.6, -0.8)), ELLIPTIC, 1),
        ((1.0, 1.0), PARABOLIC, None),
        ((-1.0, -1.0), PARABOLIC, None),
        ((0.3, 0.5), NODE, 1),
        ((2.0, 3.0), NODE, 1),
        ((-0.5, 2.0), SADDLE, -1),
    ],
)
def test_index_table(lams, kind, index):
    assert classify_eigenvalues(lams) == (kind, index)


def test_reflection_saddle_found():
    # trace 2 + a cos(2 pi x) < -2 at x = 1/2 once a > 4
    kinds = {round(o.lift[0], 6): (o.kind, o.index) for o in find_orbits(standard_map(5.0), 0, 0, 1)}
    assert kinds[0.5] == (REFLECTION_SADDLE, 1)


@pytest.mark.parametrize("a", [0.5, 2.0])
@pytest.mark.parametrize("s,p,q", [(0, 0, 1), (1, 0, 2), (1, 1, 2)])
def test_orbits_revalidate_and_rotate(a, s, p, q):
    L = standard_map(a)
    for o in find_orbits(L, s, p, q, grid=24):
        fx, fy = L.iterate(o.lift[0], o.lift[1], q)
        assert max(abs(fx - o.lift[0] - s), abs(fy - o.lift[1] - p)) < 1e-8
        assert len(o.points) == q
        est = birkhoff_rho(L, o.lift, q)
        assert abs(est.value - p / q) <= 1e-8
        assert abs(o.determinant - 1.0) < 1e-9


@given(st.floats(0.2, 3.0), st.integers(-2, 2))
def test_deck_consistency(a, m):
    L = standard_map(a)
    for o in find_orbits(L, 0, 0, 1, grid=16):
        shifted = PeriodicOrbit(o.s + L.k * m, 0, 1, (o.lift[0], o.lift[1] + m), o.points, 0.0)
        fx, fy = L.iterate(*shifted.lift, 1)
        assert abs(fx - shifted.lift[0] - shifted.s) < 1e-8 and abs(fy - shifted.lift[1]) < 1e-8
        c = classify(shifted, L)
        assert c.kind == o.kind and np.allclose(c.eigenvalues, o.eigenvalues, atol=1e-12)


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("p,q", [(0, 1), (1, 2)])
def test_index_sum_vanishes(a, p, q):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensusWarning)
        rep = lefschetz_audit(standard_map(a), p, q, grid=32)
    assert rep.complete and rep.index_sum == rep.expected == 0 and rep.passed


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 2.0])
def test_fixed_point_census(a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensusWarning)
        rep = lefschetz_audit(standard_map(a), 0, 1)
    assert rep.census == {SADDLE: 1, ELLIPTIC: 1}


def test_rejects_bad_period(std05):
    with pytest.raises(ValueError):
        find_orbits(std05, 0, 0, 0)


def test_torus_distance():
    assert torus_dist((0.01, 0.5), (0.99, 0.5)) == pytest.approx(0.02)
    assert torus_dist((0.2, 3.2), (0.2, 0.2)) == pytest.approx(0.0)


def test_csv_rows(std05):
    text = orbits_csv(find_orbits(std05, 0, 0, 1))
    lines = text.splitlines()
    assert lines[0] == ",".join(ORBIT_HEADER) == "s,p,q,x,y,kind,index,lambda_re,lambda_im,residual"
    assert len(lines) == 3
    assert lines[1].split(",")[5] == SADDLE
