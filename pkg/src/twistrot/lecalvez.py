"""Fiberwise root sets of ``p1 F^q(x, y) = x + s``, their envelopes, and triplet signs.

For fixed ``(s, q)`` the set ``K(s, q)`` meets every vertical fiber.  The
lower/upper envelopes ``mu-``, ``mu+`` of ``K`` and ``nu-``, ``nu+`` of its
image decide whether the vertical displacement ``p`` is exceeded or not
reached uniformly, which bounds the rotation interval from one side.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._newton import solve_periodic
from .maps import LiftSpec
from .rotation import TRIPLET, RotationInterval

ROOT_TOL = 1e-11
MARGIN_TOL = 1e-9
WITNESS_TOL = 1e-8
DEFAULT_FIBERS = 128
DEFAULT_DY = 2e-3
JUMP_THRESHOLD = 0.25


class Verdict(enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    ORBIT_WITNESS = "OrbitWitness"
    INDETERMINATE = "Indeterminate"


class EmptyRootSet(RuntimeError):
    pass


def _horizontal(L: LiftSpec, s, q, x, y):
    fx, _ = L.iterate(x, y, q)
    return fx - x - s


def root_window(L: LiftSpec, s: int, q: int, xs: np.ndarray, samples: int = 256):
    """A y-interval per fiber containing every root.

    ``F(y) - k q y`` is 1-periodic in ``y``, so its range over one period
    pins down where ``F`` can vanish.
    """
    kq = L.k * q
    u = np.arange(samples) / samples
    X, U = np.meshgrid(xs, u, indexing="ij")
    G = _horizontal(L, s, q, X, U) - kq * U
    gmin, gmax = G.min(axis=1), G.max(axis=1)
    # sampled extrema can miss peaks; pad by the largest sample-to-sample jump
    jump = np.max(np.abs(np.diff(np.concatenate([G, G[:, :1]], axis=1), axis=1)), axis=1)
    lo = -np.where(kq > 0, gmax + jump, gmin - jump) / kq
    hi = -np.where(kq > 0, gmin - jump, gmax + jump) / kq
    return lo - 1.0 / samples, hi + 1.0 / samples


def _bisect(L, s, q, x, lo, hi, flo):
    for _ in range(60):
        if np.all(hi - lo <= ROOT_TOL):
            break
        mid = 0.5 * (lo + hi)
        fm = _horizontal(L, s, q, x, mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def fiber_roots_many(L: LiftSpec, s: int, q: int, xs, dy: float = DEFAULT_DY) -> list[np.ndarray]:
    """Sorted roots of ``p1 F^q(x, y) - x - s`` for each fiber ``x`` in ``xs``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    lo, hi = root_window(L, s, q, xs)
    counts = np.maximum(2, np.ceil((hi - lo) / dy).astype(int) + 1)
    width = int(counts.max())
    frac = np.linspace(0.0, 1.0, width)
    Y = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    X = np.broadcast_to(xs[:, None], Y.shape)
    F = _horizontal(L, s, q, X, Y)
    exact = F[:, :] == 0.0
    change = np.sign(F[:, :-1]) * np.sign(F[:, 1:]) < 0
    fi, ci = np.nonzero(change)
    roots = _bisect(L, s, q, xs[fi], Y[fi, ci], Y[fi, ci + 1], F[fi, ci])
    out: list[list[float]] = [[] for _ in xs]
    for i, r in zip(fi, roots):
        out[i].append(float(r))
    ei, ej = np.nonzero(exact)
    for i, j in zip(ei, ej):
        out[i].append(float(Y[i, j]))
    return [np.unique(np.array(r, dtype=np.float64)) for r in out]


def fiber_roots(L: LiftSpec, s: int, q: int, x: float, dy: float = DEFAULT_DY) -> np.ndarray:
    return fiber_roots_many(L, s, q, [x], dy)[0]


@dataclass
class FiberGraphs:
    s: int
    q: int
    xgrid: np.ndarray
    roots: list[np.ndarray]
    mu_minus: np.ndarray
    mu_plus: np.ndarray
    nu_minus: np.ndarray
    nu_plus: np.ndarray
    L: LiftSpec = field(repr=False)
    max_jump: float = 0.0

    @property
    def continuous(self) -> bool:
        return self.max_jump <= JUMP_THRESHOLD

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "mu_minus", "mu_plus", "nu_minus", "nu_plus"])
        for row in zip(self.xgrid, self.mu_minus, self.mu_plus, self.nu_minus, self.nu_plus):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _envelopes(L, s, q, xs, roots):
    mu_m = np.array([r[0] for r in roots])
    mu_p = np.array([r[-1] for r in roots])
    flat_x = np.concatenate([np.full(r.size, x) for x, r in zip(xs, roots)])
    flat_y = np.concatenate(roots)
    _, img = L.iterate(flat_x, flat_y, q)
    bounds = np.cumsum([0] + [r.size for r in roots])
    nu_m = np.array([img[a:b].min() for a, b in zip(bounds[:-1], bounds[1:])])
    nu_p = np.array([img[a:b].max() for a, b in zip(bounds[:-1], bounds[1:])])
    return mu_m, mu_p, nu_m, nu_p


def _max_jump(*arrays):
    return max(float(np.max(np.abs(np.diff(np.append(a, a[0]))))) for a in arrays)


def build_graphs(
    L: LiftSpec, s: int, q: int, nx: int = DEFAULT_FIBERS, dy: float = DEFAULT_DY, refine: int = 2
) -> FiberGraphs:
    """Envelopes of ``K(s, q)`` and of its image on ``nx`` fibers.

    Fibers flanking a large envelope jump are subdivided up to ``refine`` times.
    """
    xs = np.arange(nx) / nx
    roots = fiber_roots_many(L, s, q, xs, dy)
    for _ in range(refine + 1):
        if any(r.size == 0 for r in roots):
            if all(r.size == 0 for r in roots):
                raise EmptyRootSet(f"K({s},{q}) has no roots on any fiber")
            # retry the empty fibers at a finer scan
            bad = [i for i, r in enumerate(roots) if r.size == 0]
            for i, r in zip(bad, fiber_roots_many(L, s, q, xs[bad], dy / 8)):
                roots[i] = r
            if any(r.size == 0 for r in roots):
                raise EmptyRootSet(f"fibers without roots of K({s},{q}) at scan resolution")
        env = _envelopes(L, s, q, xs, roots)
        jump = _max_jump(*env)
        if jump <= JUMP_THRESHOLD or _ >= refine:
            break
        d = np.max([np.abs(np.diff(np.append(e, e[0]))) for e in env], axis=0)
        idx = np.nonzero(d > JUMP_THRESHOLD)[0]
        step = np.diff(np.append(xs, 1.0))
        mids = xs[idx] + 0.5 * step[idx]
        new_roots = fiber_roots_many(L, s, q, mids, dy)
        xs = np.concatenate([xs, mids])
        roots = roots + new_roots
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        roots = [roots[i] for i in order]
    mu_m, mu_p, nu_m, nu_p = env
    return FiberGraphs(s, q, xs, roots, mu_m, mu_p, nu_m, nu_p, L, jump)


def lemma_ofpre_audit(G: FiberGraphs) -> float:
    """Max defect of ``F^q(x, mu-) = (x + s, nu+)`` and ``F^q(x, mu+) = (x + s, nu-)``."""
    L = G.L
    worst = 0.0
    for mu, nu in ((G.mu_minus, G.nu_plus), (G.mu_plus, G.nu_minus)):
        fx, fy = L.iterate(G.xgrid, mu, G.q)
        d = np.maximum(np.abs(fx - G.xgrid - G.s), np.abs(fy - nu))
        worst = max(worst, float(np.max(d)))
    return worst


@dataclass(frozen=True)
class TripletVerdict:
    s: int
    p: int
    q: int
    verdict: Verdict
    margin: float
    witness: tuple[float, float] | None = None


def _witness_residual(L, s, p, q, x, y):
    fx, fy = L.iterate(x, y, q)
    return np.maximum(np.abs(fx - x - s), np.abs(fy - y - p))


def _find_witness(G: FiberGraphs, p: int):
    L, s, q = G.L, G.s, G.q
    xs = np.concatenate([np.full(r.size, x) for x, r in zip(G.xgrid, G.roots)])
    ys = np.concatenate(G.roots)
    _, img = L.iterate(xs, ys, q)
    D = img - ys - p
    res = _witness_residual(L, s, p, q, xs, ys)
    i = int(np.argmin(res))
    if res[i] < WITNESS_TOL:
        return float(xs[i]), float(ys[i])
    # sign changes of D along root branches between adjacent fibers
    seeds_x, seeds_y = [], []
    bounds = np.cumsum([0] + [r.size for r in G.roots])
    nf = len(G.roots)
    for f in range(nf):
        g = (f + 1) % nf
        a0, a1 = bounds[f], bounds[f + 1]
        b0, b1 = bounds[g], bounds[g + 1]
        if a1 - a0 != b1 - b0:
            continue
        flip = np.sign(D[a0:a1]) != np.sign(D[b0:b1])
        for j in np.nonzero(flip)[0]:
            seeds_x.append(xs[a0 + j])
            seeds_y.append(ys[a0 + j])
    order = np.argsort(np.abs(D))[:16]
    seeds_x.extend(xs[order])
    seeds_y.extend(ys[order])
    if not seeds_x:
        return None
    x, y, r = solve_periodic(L, s, p, q, seeds_x, seeds_y)
    ok = np.nonzero(r < WITNESS_TOL)[0]
    if ok.size:
        j = ok[np.argmin(r[ok])]
        return float(x[j] - math.floor(x[j])), float(y[j])
    return None


def verdict_from_graphs(G: FiberGraphs, p: int, tol: float = MARGIN_TOL) -> TripletVerdict:
    pos = float(np.min(G.nu_minus - G.mu_plus - p))
    neg = float(np.min(p - G.nu_plus + G.mu_minus))
    if pos > tol:
        return TripletVerdict(G.s, p, G.q, Verdict.POSITIVE, pos)
    if neg > tol:
        return TripletVerdict(G.s, p, G.q, Verdict.NEGATIVE, neg)
    w = _find_witness(G, p)
    if w is not None:
        return TripletVerdict(G.s, p, G.q, Verdict.ORBIT_WITNESS, max(pos, neg), w)
    return TripletVerdict(G.s, p, G.q, Verdict.INDETERMINATE, max(pos, neg))


def triplet_sign(L: LiftSpec, s: int, p: int, q: int, nx: int = DEFAULT_FIBERS, tol: float = MARGIN_TOL) -> TripletVerdict:
    return verdict_from_graphs(build_graphs(L, s, q, nx), p, tol)


def certified_bounds(
    L: LiftSpec, qmax: int, nx: int = DEFAULT_FIBERS, tol: float = MARGIN_TOL
) -> RotationInterval:
    """Outer bounds on the rotation interval from uniform triplet signs.

    ``K(s + kq, q) = K(s, q) + (0, 1)`` with identical envelope differences,
    so a residue system of ``s`` modulo ``|k| q`` covers every ``s``.
    """
    if qmax < 1:
        raise ValueError("qmax must be >= 1")
    upper, lower = math.inf, -math.inf
    for q in range(1, qmax + 1):
        hi_gap, lo_gap = -math.inf, math.inf
        try:
            for s in range(abs(L.k) * q):
                G = build_graphs(L, s, q, nx)
                hi_gap = max(hi_gap, float(np.max(G.nu_plus - G.mu_minus)))
                lo_gap = min(lo_gap, float(np.min(G.nu_minus - G.mu_plus)))
        except EmptyRootSet:
            continue
        # smallest p with p - max(nu+ - mu-) > tol: Negative for every s
        p_up = math.floor(hi_gap + tol) + 1
        p_lo = math.ceil(lo_gap - tol) - 1
        upper = min(upper, p_up / q)
        lower = max(lower, p_lo / q)
    return RotationInterval(lower, upper, 0.0, 0.0, TRIPLET, TRIPLET)


@dataclass(frozen=True)
class MonotonicityAudit:
    passed: bool
    verdicts: list[TripletVerdict]
    regressions: list[tuple[float, float]]


def triplet_monotonicity_audit(
    L: LiftSpec, s: int, p: int, q: int, t_list: Sequence[float], nx: int = 64
) -> MonotonicityAudit:
    """Verdicts along the conjugated translation family must be monotone.

    A Positive verdict persists as ``t`` grows and a Negative one as ``t`` shrinks.
    """
    ts = list(t_list)
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be increasing")
    verdicts = [triplet_sign(L.conjugated(t), s, p, q, nx) for t in ts]
    bad = []
    for i, vi in enumerate(verdicts):
        for j in range(i + 1, len(verdicts)):
            vj = verdicts[j]
            if vi.verdict is Verdict.POSITIVE and vj.verdict is not Verdict.POSITIVE:
                bad.append((ts[i], ts[j]))
            elif vj.verdict is Verdict.NEGATIVE and vi.verdict is not Verdict.NEGATIVE:
                bad.append((ts[i], ts[j]))
    return MonotonicityAudit(not bad, verdicts, bad)
