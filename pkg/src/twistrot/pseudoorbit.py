"""Pseudo-orbit reachability for annulus maps and free-curve certificates.

Starting from the layer below ``y = 0`` the set of points reachable by
``eps``-pseudo orbits is over-approximated on a grid of cells.  If it never
reaches the top of a tall band, the upper boundary of its filled closure
yields an essential curve ``gamma`` mapped strictly below itself.  Otherwise
an explicit climbing pseudo orbit is searched for on a coarser point lattice.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy import ndimage

from .maps import AnnulusMap, LiftSpec, TwistConstants, parse_lift, twist_constants

DEFAULT_LADDER = (0.2, 0.1, 0.05, 0.02, 0.01)
DEFAULT_CELL_CAP = 2_000_000
VALIDATION_DENSITY = 4096
CERT_VERSION = "twistrot-certificate 1"

EXIT_FREE_CURVE = 0
EXIT_CLIMBING = 1
EXIT_INDETERMINATE = 2


class ResourceLimit(RuntimeError):
    pass


def band_height(h: AnnulusMap, C: TwistConstants) -> float:
    """Height above which no pseudo orbit from below ``y = 0`` can stay bounded."""
    return 10.0 + C.A + abs(h.p) + (10.0 + C.B) / C.k_tw


@dataclass(frozen=True)
class BandGrid:
    y_lo: float
    y_hi: float
    nx: int
    ny: int
    eps: float
    per_unit: int
    lipschitz: float

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return 1.0 / self.per_unit

    @property
    def diameter(self) -> float:
        return math.hypot(self.dx, self.dy)

    @property
    def top(self) -> float:
        """Lower edge of the top layer."""
        return self.y_hi - 1.0

    @property
    def cells(self) -> int:
        return self.nx * self.ny

    def row_y(self, iy):
        return self.y_lo + (np.asarray(iy) + 0.5) * self.dy

    def col_x(self, ix):
        return (np.asarray(ix) + 0.5) * self.dx


def make_band(
    h: AnnulusMap,
    C: TwistConstants | None = None,
    eps: float = DEFAULT_LADDER[0],
    height: float | None = None,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> BandGrid:
    """Band ``[-1, H + 1]`` with square cells of diameter below ``eps/4``.

    The cell height is ``1/m`` for an integer ``m`` so that the grid is
    invariant under the deck translation ``(0, 1)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    C = C or twist_constants(h.base)
    H = band_height(h, C) if height is None else float(height)
    side = eps / (4.0 * math.sqrt(2.0)) * 0.999
    m = math.ceil(1.0 / side)
    y_lo = -1.0
    ny = math.ceil((H + 2.0) * m)
    grid = BandGrid(y_lo, y_lo + ny / m, m, ny, float(eps), m, C.M ** h.q)
    if grid.cells > cell_cap:
        raise ResourceLimit(f"{grid.cells} cells exceed the cap of {cell_cap}")
    return grid


@dataclass
class ReachSet:
    grid: BandGrid
    reached: np.ndarray
    depth: np.ndarray
    top_reached: bool
    eps: float

    @property
    def source_rows(self) -> int:
        return self.grid.per_unit


def _box_union(g: BandGrid, cx, cy, r, row_lo, row_hi):
    """Cells meeting the boxes ``[cx - r, cx + r] x [cy - r, cy + r]`` in rows ``[row_lo, row_hi]``."""
    nx = g.nx
    pad = int(math.ceil(r / g.dx)) + 2
    cx = cx - np.floor(cx)
    ix0 = np.floor((cx - r) / g.dx).astype(np.int64) + pad
    ix1 = np.floor((cx + r) / g.dx).astype(np.int64) + pad + 1
    iy0 = np.clip(np.floor((cy - r - g.y_lo) / g.dy).astype(np.int64), row_lo, row_hi + 1) - row_lo
    iy1 = np.clip(np.floor((cy + r - g.y_lo) / g.dy).astype(np.int64) + 1, row_lo, row_hi + 1) - row_lo
    keep = iy1 > iy0
    ix0, ix1, iy0, iy1 = ix0[keep], ix1[keep], iy0[keep], iy1[keep]
    rows = row_hi - row_lo + 1
    diff = np.zeros((rows + 1, nx + 2 * pad + 1), dtype=np.int32)
    np.add.at(diff, (iy0, ix0), 1)
    np.add.at(diff, (iy0, ix1), -1)
    np.add.at(diff, (iy1, ix0), -1)
    np.add.at(diff, (iy1, ix1), 1)
    acc = np.cumsum(np.cumsum(diff, axis=0), axis=1)[:rows, : nx + 2 * pad] > 0
    # fold the padded columns back onto the circle
    out = np.zeros((rows, nx), dtype=bool)
    for j0 in range(0, acc.shape[1], nx):
        block = acc[:, j0 : j0 + nx]
        idx = (j0 - pad + np.arange(block.shape[1])) % nx
        out[:, idx] |= block
    return out


def reachable_set(h: AnnulusMap, grid: BandGrid, eps: float | None = None, max_waves: int = 100_000) -> ReachSet:
    """Over-approximate the set reachable by ``eps``-pseudo orbits from below ``y = 0``.

    Each reached cell marks every cell meeting the box around the image of
    its center of half-width ``M^q * diam/2 + eps``; reached cells are also
    closed under the downward deck translation.
    """
    g = grid
    eps = g.eps if eps is None else float(eps)
    r = g.lipschitz * g.diameter / 2.0 + eps
    reached = np.zeros((g.ny, g.nx), dtype=bool)
    depth = np.full((g.ny, g.nx), -1, dtype=np.int32)
    src = g.per_unit  # rows in [-1, 0)
    reached[:src] = True
    depth[:src] = 0
    frontier = np.nonzero(reached)
    wave = 0
    top = False
    while frontier[0].size and wave < max_waves:
        wave += 1
        fy, fx = frontier
        px, py = h.lift(g.col_x(fx), g.row_y(fy))
        if np.any(py + r >= g.top):
            top = True
            break
        lo = int(max(0, math.floor((float(py.min()) - r - g.y_lo) / g.dy)))
        hi = int(min(g.ny - 1, math.floor((float(py.max()) + r - g.y_lo) / g.dy)))
        if hi < lo:
            break
        marks = _box_union(g, px, py, r, lo, hi)
        new = marks & ~reached[lo : hi + 1]
        ny_, nx_ = np.nonzero(new)
        ny_ = ny_ + lo
        if ny_.size == 0:
            break
        reached[ny_, nx_] = True
        depth[ny_, nx_] = wave
        # downward deck closure
        rows, cols = [ny_], [nx_]
        k = 1
        while True:
            ry = ny_ - k * g.per_unit
            ok = ry >= 0
            if not np.any(ok):
                break
            ry, rx = ry[ok], nx_[ok]
            fresh = ~reached[ry, rx]
            if np.any(fresh):
                reached[ry[fresh], rx[fresh]] = True
                depth[ry[fresh], rx[fresh]] = wave
                rows.append(ry[fresh])
                cols.append(rx[fresh])
            k += 1
        frontier = (np.concatenate(rows), np.concatenate(cols))
    return ReachSet(g, reached, depth, top, eps)


def forward_invariance_audit(R: ReachSet, h: AnnulusMap, samples: int = 4, seed: int = 0):
    """Sample points in reached cells (corners included) and check their images land in reached cells.

    Images above the band or below its bottom are not violations.  When the
    closure stopped at the top layer the set is not closed and the audit
    passes vacuously.  Returns ``(passed, violations)``.
    """
    if R.top_reached:
        return True, 0
    g = R.grid
    iy, ix = np.nonzero(R.reached)
    rng = np.random.default_rng(seed)
    offsets = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)]
    offsets += [tuple(v) for v in rng.random((samples, 2))]
    bad = 0
    for ox, oy in offsets:
        x = (ix + ox) * g.dx
        y = g.y_lo + (iy + oy) * g.dy
        px, py = h.lift(x, y)
        ry = np.floor((py - g.y_lo) / g.dy).astype(np.int64)
        rx = np.floor((px - np.floor(px)) / g.dx).astype(np.int64) % g.nx
        inside = (ry >= 0) & (ry < g.ny)
        # an eps-neighbourhood of the image must be reached too; checking the image cell suffices here
        ok = ~inside | R.reached[np.clip(ry, 0, g.ny - 1), rx]
        bad += int(np.count_nonzero(~ok))
    return bad == 0, bad


# ---------------------------------------------------------------------------
# curves


def _shifts(g: np.ndarray) -> np.ndarray:
    """Integer translates of ``g`` that meet the strip ``0 <= x < 1``."""
    return np.arange(np.floor(-g[:, 0].max()), np.ceil(1.0 - g[:, 0].min()) + 1.0)


def _closed(gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=np.float64)
    if not np.allclose(gamma[-1], gamma[0] + [1.0, 0.0]):
        gamma = np.vstack([gamma, gamma[0] + [1.0, 0.0]])
    return gamma


def merge_collinear(poly: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    keep = [0]
    for i in range(1, len(poly) - 1):
        a, b, c = poly[keep[-1]], poly[i], poly[i + 1]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) > tol or np.allclose(a, b):
            if not np.allclose(a, b):
                keep.append(i)
    keep.append(len(poly) - 1)
    return poly[keep]


def resample(poly: np.ndarray, count: int) -> np.ndarray:
    """``count`` points evenly spaced in arclength along an open polyline."""
    seg = np.hypot(*np.diff(poly, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    u = np.linspace(0.0, s[-1], count, endpoint=False)
    return np.column_stack([np.interp(u, s, poly[:, 0]), np.interp(u, s, poly[:, 1])])


def _tiled_segments(gamma: np.ndarray):
    g = _closed(gamma)
    a = np.vstack([g[:-1] + [sh, 0.0] for sh in _shifts(g)])
    b = np.vstack([g[1:] + [sh, 0.0] for sh in _shifts(g)])
    return a, b


def below_curve(gamma: np.ndarray, pts: np.ndarray, bins: int = 256) -> np.ndarray:
    """Whether each point lies in the component below the essential curve ``gamma``.

    Parity of crossings of the upward vertical ray with the curve, using the
    x-period to reduce coordinates.
    """
    a, b = _tiled_segments(gamma)
    lo, hi = np.minimum(a[:, 0], b[:, 0]), np.maximum(a[:, 0], b[:, 0])
    live = (hi > lo) & (hi > 0.0) & (lo < 1.0)
    a, b, lo, hi = a[live], b[live], lo[live], hi[live]
    px = np.asarray(pts[:, 0], dtype=np.float64) % 1.0
    py = np.asarray(pts[:, 1], dtype=np.float64)
    count = np.zeros(px.shape, dtype=np.int64)
    pbin = np.minimum((px * bins).astype(np.int64), bins - 1)
    first = np.clip(np.floor(lo * bins).astype(np.int64), 0, bins - 1)
    last = np.clip(np.floor(hi * bins).astype(np.int64), 0, bins - 1)
    span = last - first + 1
    seg_of = np.repeat(np.arange(len(a)), span)
    bin_of = np.repeat(first, span) + (np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span))
    order = np.argsort(bin_of, kind="stable")
    seg_of, bin_of = seg_of[order], bin_of[order]
    starts = np.searchsorted(bin_of, np.arange(bins + 1))
    for k in np.unique(pbin):
        sel = np.nonzero(pbin == k)[0]
        segs = seg_of[starts[k] : starts[k + 1]]
        if segs.size == 0:
            continue
        sa, sb = a[segs], b[segs]
        slo, shi = lo[segs], hi[segs]
        for i in range(0, sel.size, 2048):
            idx = sel[i : i + 2048]
            X = px[idx, None]
            Y = py[idx, None]
            within = (slo[None, :] <= X) & (X < shi[None, :])
            tt = (X - sa[None, :, 0]) / (sb[:, 0] - sa[:, 0])[None, :]
            yc = sa[None, :, 1] + tt * (sb[:, 1] - sa[:, 1])[None, :]
            count[idx] += np.count_nonzero(within & (yc > Y), axis=1)
    return count % 2 == 1


def distance_to_curve(gamma: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the x-periodic polyline ``gamma``."""
    a, b = _tiled_segments(gamma)
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    half = 0.5 * float(np.sqrt(dd.max()))
    q = np.column_stack([np.asarray(pts[:, 0], dtype=np.float64) % 1.0, np.asarray(pts[:, 1], dtype=np.float64)])
    tree = cKDTree(a + 0.5 * d)
    # the nearest midpoint bounds the distance; any closer segment has its
    # midpoint within that bound plus half the longest segment
    bound, _ = tree.query(q)
    cand = tree.query_ball_point(q, bound + half + 1e-12)
    counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(cand))
    seg = np.fromiter((j for c in cand for j in c), dtype=np.int64, count=int(counts.sum()))
    row = np.repeat(np.arange(len(q)), counts)
    rel = q[row] - a[seg]
    tt = np.clip(np.einsum("ij,ij->i", rel, d[seg]) / dd[seg], 0.0, 1.0)
    e = rel - tt[:, None] * d[seg]
    dist = np.hypot(e[:, 0], e[:, 1])
    best = np.full(len(q), np.inf)
    np.minimum.at(best, row, dist)
    return best


def curve_clearance(h: AnnulusMap, gamma: np.ndarray, density: int = VALIDATION_DENSITY) -> float:
    """Signed clearance of ``h(gamma)`` below ``gamma``: positive iff every sample lands strictly below."""
    g = _closed(gamma)
    pts = resample(g, density)
    ix, iy = h.lift(pts[:, 0], pts[:, 1])
    img = np.column_stack([ix, iy])
    dist = distance_to_curve(g, img)
    below = below_curve(g, img)
    return float(np.min(np.where(below, dist, -dist)))


@dataclass
class FreeCurveCertificate:
    gamma: np.ndarray
    clearance: float
    pq: Fraction
    q: int
    p: int
    eps: float
    grid: BandGrid | None = None
    flipped: bool = False
    map_text: str = ""

    def validate(self, h: AnnulusMap, factor: int = 1) -> float:
        return curve_clearance(h, self.gamma, VALIDATION_DENSITY * factor)


@dataclass
class ClimbingPath:
    cells: list
    points: np.ndarray
    eps: float
    y_start: float
    y_target: float
    flipped: bool = False

    def max_defect(self, h: AnnulusMap) -> float:
        """``max |h(z_i) - z_(i+1)|`` with x compared modulo 1."""
        z = self.points
        px, py = h.lift(z[:-1, 0], z[:-1, 1])
        dx = (px - z[1:, 0] + 0.5) % 1.0 - 0.5
        return float(np.max(np.hypot(dx, py - z[1:, 1]))) if len(z) > 1 else 0.0

    def verify(self, h: AnnulusMap) -> bool:
        z = self.points
        return bool(
            len(z) >= 2
            and self.max_defect(h) < self.eps
            and z[0, 1] < 0.0
            and z[-1, 1] >= self.y_target
        )


@dataclass
class Indeterminate:
    reason: str
    eps: float | None = None


def extract_free_curve(R: ReachSet, h: AnnulusMap, offsets=None) -> FreeCurveCertificate:
    """Upper envelope of the filled reached set, lifted by a half cell, then validated."""
    if R.top_reached:
        raise ValueError("top layer reached: no free curve below it")
    g = R.grid
    unreached = ~R.reached
    labels, count = ndimage.label(unreached)
    # identify components across the x seam
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(labels[:, 0], labels[:, -1]):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    roots = np.array([find(i) for i in range(count + 1)])
    top_labels = set(roots[labels[-1][labels[-1] > 0]].tolist())
    top_component = np.isin(roots[labels], list(top_labels)) & (labels > 0)
    filled = ~top_component
    rows = np.arange(g.ny)[:, None]
    top_row = np.max(np.where(filled, rows, -1), axis=0)
    base = g.y_lo + (top_row + 1) * g.dy
    last = None
    for off in offsets if offsets is not None else (0.5 * g.dy, 0.0, -0.5 * R.eps):
        ys = base + off
        verts = [(0.0, ys[0])]
        for ix in range(g.nx):
            verts.append((ix * g.dx, ys[ix]))
            verts.append(((ix + 1) * g.dx, ys[ix]))
        verts.append((1.0, ys[0]))
        gamma = merge_collinear(np.array(verts))
        c = curve_clearance(h, gamma)
        last = FreeCurveCertificate(gamma, c, Fraction(h.p, h.q), h.q, h.p, R.eps, g, h.flipped, h.base.to_text())
        if c > 0:
            return last
    raise CurveValidationError(last)


class CurveValidationError(RuntimeError):
    def __init__(self, cert):
        self.certificate = cert
        super().__init__(f"extracted curve fails validation (clearance {cert.clearance:.3g})")


def climbing_search(h: AnnulusMap, grid: BandGrid, eps: float | None = None, max_waves: int = 200_000):
    """Breadth-first search for an explicit ``eps``-pseudo orbit from below ``y = 0`` to the top layer.

    Works on a lattice of cell centers with spacing ``eps/2``; each step goes
    from a center ``z`` to a center within ``0.999 eps`` of ``h(z)``.
    """
    eps = grid.eps if eps is None else float(eps)
    m = max(2, math.ceil(2.0 / eps))
    step = 1.0 / m
    ny = int(math.ceil((grid.y_hi - grid.y_lo) * m))
    nx = m
    reach = 0.999 * eps
    k = int(math.ceil(reach / step)) + 1
    di, dj = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    di, dj = di.ravel(), dj.ravel()
    pred = np.full((ny, nx), -1, dtype=np.int64)
    seen = np.zeros((ny, nx), dtype=bool)
    src_rows = m  # centers in [-1, 0)
    seen[:src_rows] = True
    fy, fx = np.nonzero(seen)
    target_row = int(math.ceil((grid.top - grid.y_lo) / step - 0.5))
    goal = None
    waves = 0
    while fy.size and waves < max_waves:
        waves += 1
        cx = (fx + 0.5) * step
        cy = grid.y_lo + (fy + 0.5) * step
        px, py = h.lift(cx, cy)
        px = px - np.floor(px)
        bx = np.floor(px / step).astype(np.int64)
        by = np.floor((py - grid.y_lo) / step).astype(np.int64)
        ty = by[:, None] + di[None, :]
        tx = bx[:, None] + dj[None, :]
        ccx = (tx + 0.5) * step
        ccy = grid.y_lo + (ty + 0.5) * step
        dist = np.hypot(ccx - px[:, None], ccy - py[:, None])
        ok = (dist < reach) & (ty >= 0) & (ty < ny)
        src = np.broadcast_to(np.arange(fy.size)[:, None], ty.shape)[ok]
        ty, tx = ty[ok], tx[ok] % nx
        fresh = ~seen[ty, tx]
        ty, tx, src = ty[fresh], tx[fresh], src[fresh]
        # keep the first proposal per target cell (deterministic order)
        flat = ty * nx + tx
        flat, first = np.unique(flat, return_index=True)
        ty, tx, src = ty[first], tx[first], src[first]
        seen[ty, tx] = True
        pred[ty, tx] = fy[src] * nx + fx[src]
        hit = np.nonzero(ty >= target_row)[0]
        if hit.size:
            goal = (int(ty[hit[0]]), int(tx[hit[0]]))
            break
        fy, fx = ty, tx
    if goal is None:
        return None
    cells = [goal]
    while pred[cells[-1]] >= 0:
        v = int(pred[cells[-1]])
        cells.append((v // nx, v % nx))
    cells.reverse()
    pts = np.array([((c[1] + 0.5) * step, grid.y_lo + (c[0] + 0.5) * step) for c in cells])
    # unwrap x so that consecutive points follow the lift
    return ClimbingPath(cells, pts, eps, float(pts[0, 1]), grid.top, h.flipped)


def dichotomy(
    h: AnnulusMap,
    eps_ladder=DEFAULT_LADDER,
    C: TwistConstants | None = None,
    height: float | None = None,
    cell_cap: int = DEFAULT_CELL_CAP,
):
    """Free curve, climbing pseudo orbit, or an honest Indeterminate.

    The ladder is traversed from the largest ``eps``.  Levels whose grid would
    exceed ``cell_cap`` are skipped, and the smallest feasible level decides
    the climbing case.
    """
    C = C or twist_constants(h.base)
    feasible = []
    for eps in sorted(eps_ladder, reverse=True):
        try:
            feasible.append(make_band(h, C, eps, height, cell_cap))
        except ResourceLimit:
            break
    if not feasible:
        return Indeterminate("no ladder level fits within the cell cap")
    for grid in feasible:
        R = reachable_set(h, grid)
        if not R.top_reached:
            try:
                return extract_free_curve(R, h)
            except CurveValidationError:
                continue
    grid = feasible[-1]
    path = climbing_search(h, grid)
    if path is not None and path.verify(h):
        return path
    return Indeterminate("top reached by the over-approximation but no explicit climbing orbit found", grid.eps)


@dataclass(frozen=True)
class CipReport:
    verdict: str
    upward: object
    downward: object

    @property
    def consistent(self) -> bool:
        return self.verdict == "CIP-consistent"


def cip_probe(h: AnnulusMap, eps_ladder=DEFAULT_LADDER, **kw) -> CipReport:
    """Run the dichotomy for ``h`` and for its conjugate by ``(x, y) -> (x, -y)``."""
    up = dichotomy(h, eps_ladder, **kw)
    down = dichotomy(h.flip(), eps_ladder, **kw)
    if isinstance(up, ClimbingPath) and isinstance(down, ClimbingPath):
        return CipReport("CIP-consistent", up, down)
    if isinstance(up, FreeCurveCertificate) or isinstance(down, FreeCurveCertificate):
        return CipReport("FreeCurveFound", up, down)
    return CipReport("Indeterminate", up, down)


# ---------------------------------------------------------------------------
# serialization


def map_hash(L: LiftSpec) -> str:
    return hashlib.sha256(L.to_text().encode()).hexdigest()


def _header(kind: str, h: AnnulusMap, params: dict) -> list[str]:
    lines = [f"{CERT_VERSION} {kind}", f"map-sha256 {map_hash(h.base)}", "[map]"]
    lines.extend(h.base.to_text().rstrip("\n").split("\n"))
    lines.append("[params]")
    base = {"q": h.q, "p": h.p, "flipped": int(h.flipped)}
    base.update(params)
    lines.extend(f"{k} = {float(v)!r}" if isinstance(v, (float, np.floating)) else f"{k} = {v}" for k, v in base.items())
    return lines


def certificate_text(cert, h: AnnulusMap) -> str:
    if isinstance(cert, FreeCurveCertificate):
        params = {"eps": cert.eps, "clearance": cert.clearance}
        if cert.grid is not None:
            g = cert.grid
            params.update(nx=g.nx, ny=g.ny, y_lo=g.y_lo, y_hi=g.y_hi)
        lines = _header("free-curve", h, params)
        lines.append("[vertices]")
        lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in cert.gamma)
    elif isinstance(cert, ClimbingPath):
        lines = _header("climbing-path", h, {"eps": cert.eps, "y_target": cert.y_target})
        lines.append("[points]")
        lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in cert.points)
    else:
        lines = _header("indeterminate", h, {"reason": cert.reason})
    return "\n".join(lines) + "\n"


def write_certificate(path, cert, h: AnnulusMap) -> None:
    Path(path).write_text(certificate_text(cert, h))


class CertificateError(ValueError):
    pass


def read_certificate(path):
    """Parse a certificate file; returns ``(kind, AnnulusMap, payload, params)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(CERT_VERSION):
        raise CertificateError("unknown certificate header")
    kind = lines[0][len(CERT_VERSION) :].strip()
    digest = lines[1].split()[1]
    sections: dict[str, list[str]] = {}
    cur = None
    for ln in lines[2:]:
        if ln.startswith("[") and ln.endswith("]"):
            cur = ln[1:-1]
            sections[cur] = []
        elif cur is not None:
            sections[cur].append(ln)
    L = parse_lift("\n".join(sections["map"]))
    if map_hash(L) != digest:
        raise CertificateError("map hash mismatch")
    params = {}
    for ln in sections.get("params", []):
        k, v = (s.strip() for s in ln.split("=", 1))
        params[k] = v
    h = AnnulusMap(L, int(params["q"]), int(params["p"]), flipped=bool(int(params.get("flipped", "0"))))
    body = sections.get("vertices") or sections.get("points") or []
    payload = np.array([[float(v) for v in ln.split()] for ln in body if ln.strip()])
    return kind, h, payload, params


def revalidate(path, factor: int = 4):
    """Independent re-check of a certificate file.

    Free curves: clearance at ``factor`` times the validation density.
    Climbing paths: maximal step defect.  Returns ``(kind, ok, value)``.
    """
    kind, h, payload, params = read_certificate(path)
    if kind == "free-curve":
        c = curve_clearance(h, payload, VALIDATION_DENSITY * factor)
        return kind, c > 0, c
    if kind == "climbing-path":
        eps = float(params["eps"])
        path = ClimbingPath([], payload, eps, float(payload[0, 1]), float(params["y_target"]), h.flipped)
        d = path.max_defect(h)
        return kind, path.verify(h), d
    return kind, False, float("nan")
