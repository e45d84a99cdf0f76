"""Invariant manifolds of periodic saddles, their crossings, and attractor iterates."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .maps import AnnulusMap, LiftSpec
from .periodic import SADDLE, PeriodicOrbit
from .pseudoorbit import FreeCurveCertificate, below_curve, distance_to_curve

DELTA0 = 1e-7
H_MAX = 1e-3
MAX_TURN = 0.2
VERTEX_BUDGET = 2_000_000


class KindMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# return maps fixing a chosen lift


@dataclass(frozen=True)
class ReturnMap:
    """``z -> F^q(z) - (s, p)`` (or its inverse), which fixes the anchor lift."""

    L: LiftSpec
    q: int
    s: int
    p: int
    inverse: bool = False
    power: int = 1

    def __call__(self, x, y, times: int = 1):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        for _ in range(times * self.power):
            if self.inverse:
                x, y = x + self.s, y + self.p
                for _ in range(self.q):
                    x, y = self.L.inverse(x, y)
            else:
                x, y = self.L.iterate(x, y, self.q)
                x, y = x - self.s, y - self.p
        return x, y


def _anchor(saddle: PeriodicOrbit, L: LiftSpec, shift=(0, 0)):
    n, m = shift
    x = saddle.lift[0] + n
    y = saddle.lift[1] + m
    return (x, y), saddle.s + L.k * saddle.q * m


@dataclass
class ManifoldArc:
    saddle: PeriodicOrbit
    branch: tuple[str, int]
    polyline: np.ndarray
    arclength: float
    anchor: tuple[float, float]
    s_anchor: int
    h_max: float
    complete: bool = True
    levels: int = 0
    level_of: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)

    @property
    def kind(self) -> str:
        return self.branch[0]

    def return_map(self, L: LiftSpec) -> ReturnMap:
        return ReturnMap(L, self.saddle.q, self.s_anchor, self.saddle.p, inverse=self.kind == "stable")


def _eigen(L: LiftSpec, anchor, q):
    _, _, J = L.iterate_jac(anchor[0], anchor[1], q)
    J = np.asarray(J).reshape(2, 2)
    vals, vecs = np.linalg.eig(J)
    if np.any(np.abs(vals.imag) > 1e-12):
        raise KindMismatch("complex eigenvalues: not a saddle")
    vals = vals.real
    vecs = vecs.real
    order = np.argsort(np.abs(vals))
    return vals[order], vecs[:, order]


def _orient(v):
    v = v / np.linalg.norm(v)
    if v[0] < 0 or (abs(v[0]) < 1e-14 and v[1] < 0):
        v = -v
    return v


def _arclen(poly):
    return float(np.sum(np.hypot(*np.diff(poly, axis=0).T))) if len(poly) > 1 else 0.0


def _needs_split(P, h_max, max_turn):
    """Intervals between consecutive samples that must be subdivided."""
    d = np.diff(P, axis=0)
    gap = np.hypot(d[:, 0], d[:, 1])
    bad = gap > h_max
    if len(d) >= 2:
        a = np.arctan2(d[:-1, 1], d[:-1, 0])
        b = np.arctan2(d[1:, 1], d[1:, 0])
        turn = np.abs((b - a + np.pi) % (2 * np.pi) - np.pi)
        sharp = turn > max_turn
        # below this scale turning angles are dominated by roundoff
        floor = h_max / 64.0
        bad[:-1] |= sharp & (gap[:-1] > floor)
        bad[1:] |= sharp & (gap[1:] > floor)
    return bad


def decimate(sig, P, h_min, max_turn=MAX_TURN, rounds=8):
    """Drop interior samples whose neighbours are closer than ``h_min`` and nearly collinear."""
    for _ in range(rounds):
        if len(P) < 3:
            break
        d1 = P[1:-1] - P[:-2]
        d2 = P[2:] - P[1:-1]
        span = np.hypot(*(P[2:] - P[:-2]).T)
        turn = np.abs(np.arctan2(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0], np.einsum("ij,ij->i", d1, d2)))
        drop = (span < h_min) & (turn < 0.5 * max_turn)
        # never drop two neighbours in one round
        drop &= (np.arange(drop.size) % 2) == 0
        if not np.any(drop):
            break
        keep = np.concatenate([[True], ~drop, [True]])
        sig, P = sig[keep], P[keep]
    return sig, P


def refine_parametric(curve, sig, P, h_max=H_MAX, max_turn=MAX_TURN, budget=VERTEX_BUDGET, min_dsig=1e-15):
    """Insert parameter midpoints until gaps and turning angles are small.

    ``curve(sigma) -> (x, y)`` evaluates the curve at parameter values.
    Returns the refined ``(sig, P, ok)``.
    """
    ok = True
    for _ in range(64):
        bad = _needs_split(P, h_max, max_turn)
        bad &= np.diff(sig) > min_dsig
        if not np.any(bad):
            break
        idx = np.nonzero(bad)[0]
        mids = 0.5 * (sig[idx] + sig[idx + 1])
        mx, my = curve(mids)
        sig = np.insert(sig, idx + 1, mids)
        P = np.insert(P, idx + 1, np.column_stack([mx, my]), axis=0)
        if len(sig) > budget:
            ok = False
            break
    else:
        ok = False
    return sig, P, ok


def grow_manifold(
    L: LiftSpec,
    saddle: PeriodicOrbit,
    branch=("unstable", 1),
    arclength: float = 3.0,
    h_max: float = H_MAX,
    delta0: float = DELTA0,
    shift=(0, 0),
    budget: int = VERTEX_BUDGET,
    max_levels: int = 400,
) -> ManifoldArc:
    """Grow one branch by iterating a fundamental domain of the linearization.

    ``branch`` is ``(kind, sign)`` with kind ``"unstable"`` or ``"stable"``.
    The seed segment runs from ``z + d v`` to ``z + d lam v``; level ``n``
    of the arc is its image under the ``n``-th power of the return map
    (the inverse for stable branches).  ``shift`` selects the lift of the
    saddle used as anchor.
    """
    if saddle.kind != SADDLE and saddle.kind != "reflection-saddle":
        raise KindMismatch(f"orbit kind {saddle.kind!r} is not a saddle")
    kind, sign = branch
    if kind not in ("unstable", "stable"):
        raise ValueError("branch kind must be 'unstable' or 'stable'")
    anchor, s_anchor = _anchor(saddle, L, shift)
    vals, vecs = _eigen(L, anchor, saddle.q)
    if kind == "unstable":
        lam, v = vals[1], vecs[:, 1]
    else:
        lam, v = 1.0 / vals[0], vecs[:, 0]
    G = ReturnMap(L, saddle.q, s_anchor, saddle.p, inverse=kind == "stable")
    if lam < 0:
        G = ReturnMap(L, saddle.q, s_anchor, saddle.p, inverse=kind == "stable", power=2)
        lam = lam * lam
    lam = abs(lam)
    v = sign * _orient(v)
    z = np.asarray(anchor)

    def seed(sig):
        r = delta0 * lam ** np.asarray(sig)
        return z[0] + r * v[0], z[1] + r * v[1]

    sig = np.linspace(0.0, 1.0, 9)
    sx, sy = seed(sig)
    P = np.column_stack([sx, sy])
    pieces = [P[:-1]]
    tags = [(np.zeros(len(sig) - 1, dtype=np.int64), sig[:-1])]
    total = _arclen(P)
    level = 0
    ok = True
    while total < arclength:
        level += 1
        nx_, ny_ = G(P[:, 0], P[:, 1])
        P = np.column_stack([nx_, ny_])
        n = level

        def curve(s, n=n):
            x0, y0 = seed(s)
            return G(x0, y0, n)

        sig, P, ok_level = refine_parametric(curve, sig, P, h_max, MAX_TURN, budget)
        sig, P = decimate(sig, P, 0.5 * h_max)
        ok &= ok_level
        seg = np.hypot(*np.diff(P, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if total + cum[-1] >= arclength:
            j = min(int(np.searchsorted(cum, arclength - total)) + 1, len(P))
            pieces.append(P[:j])
            tags.append((np.full(j, level), sig[:j]))
            total += cum[j - 1]
            break
        pieces.append(P[:-1])
        tags.append((np.full(len(sig) - 1, level), sig[:-1]))
        total += cum[-1]
        if sum(len(p) for p in pieces) > budget or level >= max_levels:
            ok = False
            break
    poly = np.vstack(pieces)
    lv = np.concatenate([t[0] for t in tags])
    sg = np.concatenate([t[1] for t in tags])
    return ManifoldArc(
        saddle, (kind, int(sign)), poly, _arclen(poly), (float(z[0]), float(z[1])),
        s_anchor, h_max, ok, level, lv, sg,
    )


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def invariance_defect(arc: ManifoldArc, L: LiftSpec) -> float:
    """Max distance from images of segment midpoints to the arc.

    Midpoints are not vertices, so their images test the polyline between
    samples.  Level ``n`` maps onto level ``n + 1``; only midpoints whose
    image parameter lies in the grown part are tested.
    """
    G = arc.return_map(L)
    if min(complex(v).real for v in arc.saddle.eigenvalues) < 0:
        G = ReturnMap(G.L, G.q, G.s, G.p, G.inverse, power=2)
    P = arc.polyline
    lv = arc.level_of
    last = lv.max()
    reach = arc.sigma[lv == last].max()
    keep = (lv < last - 1) | ((lv == last - 1) & (arc.sigma <= reach))
    pair = keep[:-1] & keep[1:] & (lv[:-1] == lv[1:])
    if not np.any(pair):
        return 0.0
    mid = 0.5 * (P[:-1][pair] + P[1:][pair])
    ix, iy = G(mid[:, 0], mid[:, 1])
    return float(_segment_distance(P, np.column_stack([ix, iy])).max())


def _segment_distance(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    tree = cKDTree(poly)
    _, near = tree.query(pts, k=min(4, len(poly)))
    near = np.atleast_2d(near)
    best = np.full(len(pts), np.inf)
    for col in range(near.shape[1]):
        for off in (-1, 0):
            i = np.clip(near[:, col] + off, 0, len(poly) - 2)
            a, b = poly[i], poly[i + 1]
            d = b - a
            dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
            t = np.clip(np.einsum("ij,ij->i", pts - a, d) / dd, 0.0, 1.0)
            e = pts - a - t[:, None] * d
            best = np.minimum(best, np.hypot(e[:, 0], e[:, 1]))
    return best


# ---------------------------------------------------------------------------
# crossings


@dataclass(frozen=True)
class Crossing:
    a: int
    b: int
    x: float
    y: float
    transverse: bool
    index_a: int
    index_b: int


def _signed_side(B, pts, center, window):
    """Signed distance of ``pts`` to the piece of ``B`` within ``window`` segments of ``center``."""
    offs = np.arange(-window, window + 1)
    idx = np.clip(center[:, None] + offs[None, :], 0, len(B) - 2)
    a = B[idx]
    d = B[idx + 1] - a
    rel = pts[:, None, :] - a
    dd = np.maximum(np.einsum("hwi,hwi->hw", d, d), 1e-300)
    t = np.clip(np.einsum("hwi,hwi->hw", rel, d) / dd, 0.0, 1.0)
    e = rel - t[..., None] * d
    dist = np.hypot(e[..., 0], e[..., 1])
    k = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    dk, rk = d[rows, k], rel[rows, k]
    cross = dk[:, 0] * rk[:, 1] - dk[:, 1] * rk[:, 0]
    return np.sign(cross) * dist[rows, k]


def crossing_detect(arcA, arcB, translate=(0, 0), probe: float | None = None, resolution: float | None = None) -> list[Crossing]:
    """Intersections of ``arcA`` with ``arcB + translate``, each tagged topologically transverse or not.

    A crossing is transverse when the points of ``arcA`` at arclength
    ``+-probe`` from it lie on opposite sides of the nearby piece of
    ``arcB``, each farther than ``resolution`` from it.  Separations below
    the polyline's chord error cannot be told apart from a touch.
    """
    A = arcA.polyline if hasattr(arcA, "polyline") else np.asarray(arcA, dtype=float)
    B = (arcB.polyline if hasattr(arcB, "polyline") else np.asarray(arcB, dtype=float)) + np.asarray(translate, float)
    if len(A) < 2 or len(B) < 2:
        return []
    segA, segB = np.diff(A, axis=0), np.diff(B, axis=0)
    lenA = np.hypot(segA[:, 0], segA[:, 1])
    lenB = np.hypot(segB[:, 0], segB[:, 1])
    midA, midB = A[:-1] + 0.5 * segA, B[:-1] + 0.5 * segB
    radius = 0.5 * (lenA.max() + lenB.max()) + 1e-12
    pairs = cKDTree(midB).query_ball_point(midA, radius)
    counts = np.fromiter((len(p) for p in pairs), dtype=np.int64, count=len(pairs))
    if counts.sum() == 0:
        return []
    ia = np.repeat(np.arange(len(pairs)), counts)
    ib = np.fromiter((j for p in pairs for j in p), dtype=np.int64, count=int(counts.sum()))
    p, r = A[ia], segA[ia]
    q, s = B[ib], segB[ib]
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
    eps = 1e-12
    hit = (np.abs(denom) > 1e-300) & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
    ia, ib, t = ia[hit], ib[hit], t[hit]
    if ia.size == 0:
        return []
    order = np.lexsort((ib, ia))
    ia, ib, t = ia[order], ib[order], t[order]
    pts = A[ia] + t[:, None] * segA[ia]
    # a hit at a shared vertex shows up on both adjacent segments
    dup = np.zeros(len(pts), dtype=bool)
    dup[1:] = np.hypot(*(pts[1:] - pts[:-1]).T) < 1e-9
    ia, ib, t, pts = ia[~dup], ib[~dup], t[~dup], pts[~dup]

    h = float(np.median(np.concatenate([lenA, lenB])))
    probe = probe if probe is not None else 4.0 * h
    resolution = resolution if resolution is not None else h * MAX_TURN / 4.0
    cumA = np.concatenate([[0.0], np.cumsum(lenA)])
    sA = cumA[ia] + t * lenA[ia]
    sides = []
    for ds in (-probe, probe):
        ss = np.clip(sA + ds, 0.0, cumA[-1])
        probe_pts = np.column_stack([np.interp(ss, cumA, A[:, 0]), np.interp(ss, cumA, A[:, 1])])
        sides.append(_signed_side(B, probe_pts, ib, int(min(64, math.ceil(2 * probe / max(h, 1e-300)) + 2))))
    before, after = sides
    transverse = (np.abs(before) > resolution) & (np.abs(after) > resolution) & (np.sign(before) != np.sign(after))
    a, b = int(translate[0]), int(translate[1])
    return [
        Crossing(a, b, float(x), float(y), bool(tr), int(i), int(j))
        for (x, y), tr, i, j in zip(pts, transverse, ia, ib)
    ]


@dataclass
class MeshReport:
    vectors: set
    crossings: dict
    verdict: str
    window: int

    @property
    def transverse_count(self) -> int:
        return sum(1 for cs in self.crossings.values() for c in cs if c.transverse)


def _non_collinear(vectors) -> bool:
    vs = [v for v in vectors if v != (0, 0)]
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            if vs[i][0] * vs[j][1] - vs[i][1] * vs[j][0] != 0:
                return True
    return False


def mesh_verdict(vectors, window: int) -> str:
    box = set(product(range(-window, window + 1), repeat=2))
    if box <= set(vectors):
        return "full-mesh-evidence"
    if _non_collinear(vectors):
        return "partial-mesh-evidence"
    return "none"


def mesh_probe(
    L: LiftSpec,
    saddle: PeriodicOrbit,
    window: int = 2,
    arclength: float = 20.0,
    h_max: float = H_MAX,
    arcs=None,
) -> MeshReport:
    """Transverse crossings of the unstable with translated stable branches.

    Evidence only: absence of crossings at finite arclength proves nothing.
    """
    if saddle.kind != SADDLE:
        raise KindMismatch(f"orbit kind {saddle.kind!r} is not a saddle")
    if arcs is None:
        arcs = grow_branches(L, saddle, arclength, h_max)
    unstable = [a for a in arcs if a.kind == "unstable"]
    stable = [a for a in arcs if a.kind == "stable"]
    found: dict = {}
    vectors = set()
    for ab in product(range(-window, window + 1), repeat=2):
        cs = []
        for au in unstable:
            for bs in stable:
                cs.extend(crossing_detect(au, bs, ab))
        if cs:
            found[ab] = cs
        if any(c.transverse for c in cs):
            vectors.add(ab)
    return MeshReport(vectors, found, mesh_verdict(vectors, window), window)


def grow_branches(L, saddle, arclength, h_max=H_MAX, shift=(0, 0), threads: int = 1):
    """The four branches ``unstable+, unstable-, stable+, stable-`` in that order."""
    branches = [(kind, sign) for kind in ("unstable", "stable") for sign in (1, -1)]

    def grow(br):
        return grow_manifold(L, saddle, br, arclength, h_max, shift=shift)

    if threads <= 1:
        return [grow(br) for br in branches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(grow, branches))


def crossings_csv(report_or_list) -> str:
    items = report_or_list
    if isinstance(report_or_list, MeshReport):
        items = [c for ab in sorted(report_or_list.crossings) for c in report_or_list.crossings[ab]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "b", "x", "y", "transverse"])
    for c in items:
        w.writerow([c.a, c.b, repr(float(c.x)), repr(float(c.y)), int(c.transverse)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# boundedness


@dataclass(frozen=True)
class BoundednessReport:
    direction: str
    verdict: str
    value: float

    @property
    def bounded(self) -> bool:
        return self.verdict == "bounded-evidence"


def boundedness_check(arc: ManifoldArc, direction: str = "above", band_top: float | None = 1.0, stall: float = 0.75) -> BoundednessReport:
    """Evidence that a branch is bounded (or not) in the vertical direction.

    ``band_top`` is a height relative to the anchor (a depth below it when
    ``direction`` is ``"below"``); the default is one period of the annulus.  The running extremum stalling over the
    final ``stall`` fraction of arclength is bounded evidence; passing the
    band is unbounded evidence; anything else is inconclusive.
    """
    if direction not in ("above", "below"):
        raise ValueError("direction must be 'above' or 'below'")
    P = arc.polyline
    sgn = 1.0 if direction == "above" else -1.0
    h = sgn * (P[:, 1] - arc.anchor[1])
    run = np.maximum.accumulate(h)
    extreme = float(run[-1])
    if band_top is not None and extreme > band_top:
        return BoundednessReport(direction, "unbounded-evidence", sgn * extreme + arc.anchor[1])
    seg = np.hypot(*np.diff(P, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    first = int(np.argmax(run >= extreme))
    if cum[first] <= (1.0 - stall) * cum[-1]:
        return BoundednessReport(direction, "bounded-evidence", sgn * extreme + arc.anchor[1])
    return BoundednessReport(direction, "inconclusive", sgn * extreme + arc.anchor[1])


# ---------------------------------------------------------------------------
# attractor iterates


@dataclass
class AttractorApprox:
    pq: object
    curves: list
    nested: list
    hull_steps: list
    sandwich: bool | None = None
    unstable_samples: np.ndarray | None = None

    @property
    def hull(self) -> np.ndarray:
        """Upper boundary of the region approximating the attractor."""
        return self.curves[-1]

    @property
    def all_nested(self) -> bool:
        return all(self.nested)


class NestingViolation(RuntimeError):
    pass


def _iterate_curve(h: AnnulusMap, gamma: np.ndarray, iters: int, spacing: float):
    seg = np.hypot(*np.diff(gamma, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]

    def base(sig):
        sig = np.asarray(sig)
        return np.interp(sig * total, cum, gamma[:, 0]), np.interp(sig * total, cum, gamma[:, 1])

    sig = np.linspace(0.0, 1.0, max(64, int(total / spacing) + 1))
    bx, by = base(sig)
    P = np.column_stack([bx, by])
    curves = [gamma]
    for n in range(1, iters + 1):
        px, py = h.lift(P[:, 0], P[:, 1])
        P = np.column_stack([px, py])

        def curve(s, n=n):
            x, y = base(s)
            for _ in range(n):
                x, y = h.lift(x, y)
            return x, y

        sig, P, _ = refine_parametric(curve, sig, P, spacing, MAX_TURN, 200_000, 1e-13)
        # express the closed curve over one x-period: shift so it starts near x in [0, 1)
        curves.append(P.copy())
    return curves


def _closed_region_below(upper: np.ndarray, pts: np.ndarray, tol: float) -> np.ndarray:
    on = distance_to_curve(_period_closed(upper), pts) <= tol
    return on | below_curve(_period_closed(upper), pts)


def _period_closed(curve: np.ndarray) -> np.ndarray:
    """Make sure a curve iterate is expressed as a path from ``x0`` to ``x0 + 1``."""
    shift = np.floor(curve[0, 0])
    c = curve - [shift, 0.0]
    if not np.isclose(c[-1, 0] - c[0, 0], 1.0, atol=1e-9):
        c = np.vstack([c, c[0] + [1.0, 0.0]])
    return c


def attractor_approx(
    h: AnnulusMap,
    cert: FreeCurveCertificate,
    iters: int = 8,
    spacing: float = 2e-3,
    unstable=None,
    drop: float = 2.0,
    strict: bool = True,
) -> AttractorApprox:
    """Forward iterates of a free curve, checked to be nested downward.

    ``hull_steps[i]`` is the drop of the hull top from iterate ``i`` to ``i + 1``.

    ``unstable`` is an optional array of points sampled on the unstable
    manifold of the saddle of type ``p/q``; their translates by
    ``(0, -drop)`` are checked to lie below the last iterate.
    """
    curves = _iterate_curve(h, cert.gamma, iters, spacing)
    nested = []
    steps = []
    for prev, nxt in zip(curves, curves[1:]):
        ok = bool(np.all(_closed_region_below(prev, nxt, 1e-9)))
        nested.append(ok)
        steps.append(_hull_drop(prev, nxt))
        if strict and not ok:
            raise NestingViolation(f"iterate {len(nested)} leaves the region below its predecessor")
    sandwich = None
    if unstable is not None and len(unstable):
        U = np.asarray(unstable, dtype=float) - [0.0, drop]
        sandwich = bool(np.all(_closed_region_below(curves[-1], U, 1e-9)))
    return AttractorApprox(cert.pq, curves, nested, steps, sandwich, None if unstable is None else np.asarray(unstable))


def upper_envelope(curve: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Highest point of the x-periodic polyline above each abscissa in ``xs``."""
    c = _period_closed(curve)
    top = np.full(xs.size, -np.inf)
    for sh in np.arange(np.floor(-c[:, 0].max()), np.ceil(1.0 - c[:, 0].min()) + 1.0):
        a, b = c[:-1] + [sh, 0.0], c[1:] + [sh, 0.0]
        lo, hi = np.minimum(a[:, 0], b[:, 0]), np.maximum(a[:, 0], b[:, 0])
        live = (hi > lo) & (hi > 0.0) & (lo < 1.0)
        a, b, lo, hi = a[live], b[live], lo[live], hi[live]
        for i in range(0, len(a), 4096):
            sa, sb = a[i : i + 4096], b[i : i + 4096]
            within = (lo[i : i + 4096, None] <= xs[None, :]) & (xs[None, :] < hi[i : i + 4096, None])
            t = (xs[None, :] - sa[:, 0, None]) / (sb[:, 0] - sa[:, 0])[:, None]
            y = np.where(within, sa[:, 1, None] + t * (sb[:, 1] - sa[:, 1])[:, None], -np.inf)
            top = np.maximum(top, y.max(axis=0))
    return top


def _hull_drop(a: np.ndarray, b: np.ndarray, samples: int = 512) -> float:
    """Largest vertical drop of the upper envelope from one iterate to the next.

    This is the Hausdorff distance between the tops of the two hulls; the
    hulls themselves lose a fixed area per step for area-preserving maps.
    """
    xs = (np.arange(samples) + 0.5) / samples
    return float(np.max(upper_envelope(a, xs) - upper_envelope(b, xs)))


def flip_certificate(cert: FreeCurveCertificate) -> FreeCurveCertificate:
    """The curve reflected by ``(x, y) -> (x, -y)``, for the repeller side."""
    g = cert.gamma.copy()
    g[:, 1] = -g[:, 1]
    return FreeCurveCertificate(g, cert.clearance, cert.pq, cert.q, cert.p, cert.eps, None, not cert.flipped, cert.map_text)


# ---------------------------------------------------------------------------
# SVG


LAYERS = ("gamma", "iterates", "unstable", "stable", "crossings")
_COLORS = {"gamma": "#1f77b4", "iterates": "#9ecae1", "unstable": "#d62728", "stable": "#2ca02c", "crossings": "#000000"}


def _wrap_split(poly: np.ndarray):
    """Reduce x modulo 1 and cut the polyline where it wraps."""
    x = np.asarray(poly[:, 0]) % 1.0
    y = np.asarray(poly[:, 1])
    cut = np.nonzero(np.abs(np.diff(x)) > 0.5)[0] + 1
    return [np.column_stack([xx, yy]) for xx, yy in zip(np.split(x, cut), np.split(y, cut)) if len(xx) > 1]


def svg_scene(layers: dict, y_range=None, width: int = 800, height: int = 600, max_points: int = 20000) -> str:
    """Render polylines and points of the annulus ``[0, 1) x [y0, y1]`` as SVG.

    ``layers`` maps each name in ``LAYERS`` to a list of polylines (or, for
    ``crossings``, an array of points).  Every layer is emitted, possibly empty.
    """
    ys = []
    for name in LAYERS:
        for item in layers.get(name, []) if name != "crossings" else [layers.get("crossings", np.zeros((0, 2)))]:
            arr = np.asarray(item, dtype=float).reshape(-1, 2)
            if len(arr):
                ys.append(arr[:, 1])
    if y_range is None:
        allv = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        y_range = (float(allv.min()), float(allv.max()))
    y0, y1 = y_range
    if y1 <= y0:
        y1 = y0 + 1.0

    def sx(v):
        return (np.asarray(v) % 1.0) * width

    def sy(v):
        return height - (np.clip(np.asarray(v), y0, y1) - y0) / (y1 - y0) * height

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white" stroke="black"/>',
    ]
    for name in LAYERS:
        out.append(f'<g id="{name}" stroke="{_COLORS[name]}" fill="none" stroke-width="1">')
        if name == "crossings":
            pts = np.asarray(layers.get("crossings", np.zeros((0, 2))), dtype=float).reshape(-1, 2)
            for x, y in pts:
                out.append(f'<circle cx="{float(sx(x)):.2f}" cy="{float(sy(y)):.2f}" r="3" fill="{_COLORS[name]}"/>')
        else:
            for poly in layers.get(name, []):
                poly = np.asarray(poly, dtype=float).reshape(-1, 2)
                if len(poly) > max_points:
                    poly = poly[:: int(math.ceil(len(poly) / max_points))]
                for piece in _wrap_split(poly):
                    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(piece[:, 0]), sy(piece[:, 1])))
                    out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
