import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import integrable_outer, integrable_triplet, kick, load_frozen, scan_root, std_map
from twistrot.lecalvez import (
    EmptyRootSet,
    Verdict,
    build_graphs,
    certified_bounds,
    fiber_roots,
    fiber_roots_many,
    lemma_ofpre_audit,
    root_window,
    triplet_monotonicity_audit,
    triplet_sign,
    verdict_from_graphs,
)
from twistrot.maps import integrable, parse_lift, standard_map
from twistrot.rotation import TRIPLET, interval_sample

FROZEN = load_frozen()
CLOSED = {"positive": Verdict.POSITIVE, "negative": Verdict.NEGATIVE, "orbit-witness": Verdict.ORBIT_WITNESS}


@pytest.mark.parametrize("x", [0.0, 0.3, 0.77])
def test_integrable_roots(flat, x):
    assert np.allclose(fiber_roots(flat, 0, 1, x), [0.0], atol=1e-11)
    assert np.allclose(fiber_roots(flat, 1, 2, x), [0.5], atol=1e-11)


def test_standard_root_against_scan(std05):
    got = fiber_roots(std05, 0, 1, 0.25)
    assert np.allclose(got, FROZEN["std_a05_root_q1_s0_x025"], atol=1e-9)
    ref = scan_root(lambda ys: std_map(0.5, 0.25, ys)[0] - 0.25, -1, 1, 100_000)
    assert np.allclose(got, ref, atol=1e-9)


@pytest.mark.parametrize("a,s,q", [(0.5, 0, 1), (2.0, 1, 2), (4.0, 0, 3)])
def test_roots_are_roots_and_window_contains_them(a, s, q):
    L = standard_map(a)
    xs = np.linspace(0, 1, 7, endpoint=False)
    lo, hi = root_window(L, s, q, xs)
    for x, r, l, h in zip(xs, fiber_roots_many(L, s, q, xs), lo, hi):
        assert r.size >= 1
        fx, _ = L.iterate(np.full(r.size, x), r, q)
        assert np.max(np.abs(fx - x - s)) < 1e-9
        assert l <= r.min() and r.max() <= h


def test_integrable_envelopes(flat):
    G = build_graphs(flat, 0, 1, 32)
    for arr in (G.mu_minus, G.mu_plus, G.nu_minus, G.nu_plus):
        assert np.allclose(arr, 0.0, atol=1e-11)
    H = build_graphs(flat, 1, 2, 32)
    for arr in (H.mu_minus, H.mu_plus, H.nu_minus, H.nu_plus):
        assert np.allclose(arr, 0.5, atol=1e-11)
    assert lemma_ofpre_audit(G) < 1e-11 and G.continuous


@pytest.mark.parametrize("a,s,q", [(0.5, 0, 1), (1.0, 0, 1), (2.0, 0, 1), (1.0, 1, 2)])
def test_ofpre_identities(a, s, q):
    G = build_graphs(standard_map(a), s, q, 64)
    assert np.all(G.mu_minus <= G.mu_plus)
    assert lemma_ofpre_audit(G) < 1e-8


def test_ofpre_detects_corruption(std05):
    G = build_graphs(std05, 0, 1, 32)
    bad = dataclasses.replace(G, mu_minus=G.mu_minus + 0.01)
    assert lemma_ofpre_audit(bad) >= 0.005


def test_graphs_csv(flat):
    G = build_graphs(flat, 0, 1, 4)
    lines = G.to_csv().splitlines()
    assert lines[0] == "x,mu_minus,mu_plus,nu_minus,nu_plus" and len(lines) == 5


def test_empty_root_set(flat, monkeypatch):
    from twistrot import lecalvez

    monkeypatch.setattr(lecalvez, "fiber_roots_many", lambda L, s, q, xs, dy=0: [np.zeros(0) for _ in np.atleast_1d(xs)])
    with pytest.raises(EmptyRootSet):
        build_graphs(flat, 0, 1, 4)


@pytest.mark.parametrize("p,expected,margin", [(1, Verdict.NEGATIVE, 1.0), (-1, Verdict.POSITIVE, 1.0)])
def test_integrable_verdicts(flat, p, expected, margin):
    v = triplet_sign(flat, 0, p, 1, 16)
    assert v.verdict is expected and abs(v.margin - margin) < 1e-9


def test_integrable_witness(flat):
    v = triplet_sign(flat, 0, 0, 1, 16)
    assert v.verdict is Verdict.ORBIT_WITNESS
    x, y = v.witness
    fx, fy = flat(x, y)
    assert abs(fx - x) < 1e-8 and abs(fy - y) < 1e-8


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("t", [0.0, 0.3, -0.7])
@pytest.mark.parametrize("p,q", [(0, 1), (1, 1), (-1, 1), (1, 3), (0, 2), (-1, 2)])
def test_integrable_verdicts_match_closed_form(k, t, p, q):
    L = integrable(k, t)
    expected = CLOSED[integrable_triplet(t, p, q)]
    for s in range(k * q):
        assert triplet_sign(L, s, p, q, 8).verdict is expected


@pytest.mark.parametrize("t,qmax", [(0.3, 10), (0.0, 10)])
def test_certified_bounds_integrable(t, qmax):
    iv = certified_bounds(integrable(1, t), qmax, nx=8)
    key = "integrable_outer_t03_q10" if t else "integrable_outer_t0_q10"
    assert np.allclose([iv.lower, iv.upper], FROZEN[key])
    assert np.allclose([iv.lower, iv.upper], integrable_outer(t, qmax))
    assert iv.lower_cert == iv.upper_cert == TRIPLET
    assert iv.lower >= t - 1 / qmax - 1e-12 and iv.upper <= t + 1 / qmax + 1e-12


def test_certified_bounds_rejects_bad_qmax(flat):
    with pytest.raises(ValueError):
        certified_bounds(flat, 0)


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_outer_contains_inner(a):
    L = standard_map(a)
    outer = certified_bounds(L, 6, nx=64)
    inner = interval_sample(L, grid=(12, 12), n=4000)
    assert outer.contains(inner)


def test_monotonicity_integrable_closed_form(flat):
    audit = triplet_monotonicity_audit(flat, 0, 1, 1, [0.0, 0.2, 0.4, 1.0], nx=8)
    assert [v.verdict for v in audit.verdicts] == [Verdict.NEGATIVE] * 3 + [Verdict.ORBIT_WITNESS]
    assert audit.passed
    audit = triplet_monotonicity_audit(flat, 0, 0, 1, [-0.2, 0.0, 0.2], nx=8)
    assert [v.verdict for v in audit.verdicts] == [Verdict.NEGATIVE, Verdict.ORBIT_WITNESS, Verdict.POSITIVE]
    for v, t in zip(audit.verdicts, [-0.2, 0.0, 0.2]):
        assert abs(v.margin - abs(t)) < 1e-9 or v.verdict is Verdict.ORBIT_WITNESS


def test_monotonicity_standard_family(std05):
    audit = triplet_monotonicity_audit(std05, 0, 1, 1, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], nx=64)
    assert audit.passed and audit.regressions == []


def test_monotonicity_rejects_unsorted(flat):
    with pytest.raises(ValueError):
        triplet_monotonicity_audit(flat, 0, 0, 1, [0.2, 0.1])


@pytest.mark.parametrize("a,s,p,q", [(0.5, 0, -1, 1), (1.0, 0, 1, 1), (3.0, 0, 2, 1), (0.5, 1, 1, 3)])
def test_refinement_stability(a, s, p, q):
    L = standard_map(a)
    coarse = triplet_sign(L, s, p, q, 32)
    if coarse.verdict in (Verdict.POSITIVE, Verdict.NEGATIVE):
        fine = triplet_sign(L, s, p, q, 320)
        assert fine.verdict is coarse.verdict


@given(st.floats(0.1, 3.0), st.integers(-1, 1), st.integers(1, 3), st.integers(-2, 2))
def test_deck_reindexing_preserves_verdict(a, p, q, m):
    L = standard_map(a)
    s = 0
    v = triplet_sign(L, s, p, q, 24)
    w = triplet_sign(L, s + L.k * q * m, p, q, 24)
    assert v.verdict is w.verdict
    assert abs(v.margin - w.margin) < 1e-8


def test_deck_shift_moves_roots_by_one(std05):
    r0 = fiber_roots(std05, 0, 1, 0.3)
    r1 = fiber_roots(std05, 1, 1, 0.3)
    assert np.allclose(r1, r0 + 1.0, atol=1e-10)


def test_y_dependent_lift():
    L = parse_lift("k=1; phi1=0.05*cos(2*pi*(x+y)); phi2=0.05*sin(2*pi*y)")
    G = build_graphs(L, 0, 1, 32)
    assert lemma_ofpre_audit(G) < 1e-8
    v = verdict_from_graphs(G, 1)
    assert v.verdict is Verdict.NEGATIVE
