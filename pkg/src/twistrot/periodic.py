"""Periodic orbits of type ``(s, p, q)``, their eigen-data, and the index-sum audit."""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from ._newton import solve_periodic
from .maps import LiftSpec

RESIDUAL_TOL = 1e-8
DEDUP_TOL = 1e-6
PARABOLIC_TOL = 1e-6
DEGENERATE_COUNT = 32
DEFAULT_SEED_GRID = 48
COVERAGE_TARGET = 0.99

SADDLE = "saddle"
REFLECTION_SADDLE = "reflection-saddle"
ELLIPTIC = "elliptic"
NODE = "node"
PARABOLIC = "parabolic-flagged"


class CensusWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PeriodicOrbit:
    s: int
    p: int
    q: int
    lift: tuple[float, float]
    points: tuple[tuple[float, float], ...]
    residual: float
    eigenvalues: tuple[complex, complex] = (0j, 0j)
    jacobian: tuple[tuple[float, float], tuple[float, float]] | None = None
    kind: str | None = None
    index: int | None = None

    @property
    def determinant(self) -> float:
        (a, b), (c, d) = self.jacobian
        return a * d - b * c

    @property
    def trace(self) -> float:
        (a, _), (_, d) = self.jacobian
        return a + d


class OrbitList(list):
    """Orbits plus search diagnostics.

    ``degenerate`` marks a non-isolated solution set (a curve of periodic
    points); ``coverage`` is the fraction of seeds whose iteration converged.
    """

    def __init__(self, items=(), degenerate: bool = False, coverage: float = 1.0):
        super().__init__(items)
        self.degenerate = degenerate
        self.coverage = coverage


def torus_dist(a, b) -> float:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return float(np.max(np.minimum(d, 1.0 - d)))


def _key(pt):
    return (round(pt[0] % 1.0, 9) % 1.0, round(pt[1] % 1.0, 9) % 1.0)


def _orbit_points(L: LiftSpec, x: float, y: float, q: int):
    pts = [(x, y)]
    for _ in range(q - 1):
        fx, fy = L(pts[-1][0], pts[-1][1])
        pts.append((float(fx), float(fy)))
    return pts


def _canonical(L: LiftSpec, x: float, y: float, q: int):
    """Rotate the orbit to its lexicographically smallest torus point."""
    pts = _orbit_points(L, x, y, q)
    torus = [(px % 1.0, py % 1.0) for px, py in pts]
    j = min(range(q), key=lambda i: _key(torus[i]))
    order = torus[j:] + torus[:j]
    ax, ay = pts[j]
    return (ax - math.floor(ax), ay), tuple(order)


def classify_eigenvalues(lams, tol: float = PARABOLIC_TOL) -> tuple[str, int | None]:
    """Kind and fixed-point index ``sign det(I - J)`` from the two eigenvalues."""
    l1, l2 = complex(lams[0]), complex(lams[1])
    if abs(l1.imag) > tol or abs(l2.imag) > tol:
        # complex pair: index +1 since |1 - lambda|^2 > 0
        if abs(abs(l1) - 1.0) <= tol:
            return ELLIPTIC, 1
        return NODE, 1
    r1, r2 = sorted((l1.real, l2.real))
    for r in (r1, r2):
        if abs(abs(r) - 1.0) <= tol:
            return PARABOLIC, None
    index = 1 if (1.0 - r1) * (1.0 - r2) > 0 else -1
    if r1 > 0 and r2 > 0:
        return (SADDLE if r1 < 1.0 < r2 else NODE), index
    if r1 < 0 and r2 < 0:
        return (REFLECTION_SADDLE if r1 < -1.0 < r2 else NODE), index
    return (SADDLE if index < 0 else NODE), index


def classify(orbit: PeriodicOrbit, L: LiftSpec) -> PeriodicOrbit:
    """Eigen-data of ``DF^q`` along the orbit, kind and index."""
    _, _, J = L.iterate_jac(orbit.lift[0], orbit.lift[1], orbit.q)
    J = np.asarray(J).reshape(2, 2)
    lams = np.linalg.eigvals(J)
    lams = sorted((complex(v) for v in lams), key=lambda v: (abs(v), v.imag))
    kind, index = classify_eigenvalues(lams)
    return replace(
        orbit,
        eigenvalues=(lams[0], lams[1]),
        jacobian=((float(J[0, 0]), float(J[0, 1])), (float(J[1, 0]), float(J[1, 1]))),
        kind=kind,
        index=index,
    )


def default_seeds(L: LiftSpec, s: int, q: int, grid: int = DEFAULT_SEED_GRID):
    """Lattice seeds in a y-window around ``K(s, q)`` plus its fiber roots."""
    from .lecalvez import fiber_roots_many

    xs = (np.arange(grid) + 0.5) / grid
    roots = fiber_roots_many(L, s, q, xs, dy=5e-3)
    rx = np.concatenate([np.full(r.size, x) for x, r in zip(xs, roots)])
    ry = np.concatenate(roots) if rx.size else np.zeros(0)
    if ry.size:
        lo, hi = float(ry.min()) - 0.25, float(ry.max()) + 0.25
    else:
        c = s / (L.k * q)
        lo, hi = c - 0.5, c + 0.5
    ys = lo + (hi - lo) * (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.concatenate([rx, X.ravel()]), np.concatenate([ry, Y.ravel()])


def find_orbits(
    L: LiftSpec,
    s: int,
    p: int,
    q: int,
    seeds=None,
    grid: int = DEFAULT_SEED_GRID,
    extra_seeds=None,
) -> OrbitList:
    """Solve ``F^q(z) = z + (s, p)`` from many seeds; deduplicate and classify."""
    if q < 1:
        raise ValueError("q must be >= 1")
    xs, ys = seeds if seeds is not None else default_seeds(L, s, q, grid)
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if extra_seeds is not None:
        xs = np.concatenate([xs, np.asarray(extra_seeds[0], float).ravel()])
        ys = np.concatenate([ys, np.asarray(extra_seeds[1], float).ravel()])
    x, y, res = solve_periodic(L, s, p, q, xs, ys)
    good = np.nonzero(res < 1e-10)[0]
    coverage = good.size / max(xs.size, 1)
    reps: list[tuple[float, float]] = []
    found: list[PeriodicOrbit] = []
    parabolic_points = 0
    for i in good:
        xi, yi = float(x[i]), float(y[i])
        xi -= math.floor(xi)
        if any(torus_dist((xi, yi), r) < DEDUP_TOL for r in reps):
            continue
        lift, pts = _canonical(L, xi, yi, q)
        for pt in pts:
            reps.append(pt)
        rx, ry = _residual(L, s, p, q, lift)
        orb = classify(PeriodicOrbit(s, p, q, lift, pts, max(rx, ry)), L)
        if orb.residual >= RESIDUAL_TOL:
            continue
        if orb.kind == PARABOLIC:
            parabolic_points += q
        found.append(orb)
    if parabolic_points >= DEGENERATE_COUNT:
        return OrbitList([o for o in found if o.kind != PARABOLIC], degenerate=True, coverage=coverage)
    found.sort(key=lambda o: _key(o.points[0]))
    return OrbitList(found, coverage=coverage)


def _residual(L, s, p, q, z):
    fx, fy = L.iterate(z[0], z[1], q)
    return abs(float(fx) - z[0] - s), abs(float(fy) - z[1] - p)


@dataclass
class LefschetzReport:
    p: int
    q: int
    index_sum: int
    census: dict
    orbits: list
    complete: bool
    degenerate: bool
    warnings: list

    @property
    def expected(self) -> int:
        return 0

    @property
    def passed(self) -> bool:
        return self.complete and not self.degenerate and self.index_sum == 0


def lefschetz_audit(L: LiftSpec, p: int, q: int, grid: int = DEFAULT_SEED_GRID) -> LefschetzReport:
    """Index sum over the fixed points of ``F^q - (0, p)`` on the torus.

    Residues ``s`` modulo ``|k| q`` enumerate every torus fixed point once.
    """
    orbits: list[PeriodicOrbit] = []
    notes: list[str] = []
    degenerate = False
    coverage = 1.0
    for s in range(abs(L.k) * q):
        found = find_orbits(L, s, p, q, grid=grid)
        degenerate |= found.degenerate
        coverage = min(coverage, found.coverage)
        orbits.extend(found)
    census: Counter = Counter()
    total = 0
    for o in orbits:
        census[o.kind] += o.q
        if o.index is not None:
            total += o.index * o.q
    if degenerate:
        notes.append("non-isolated periodic set: index sum undefined")
    if census.get(PARABOLIC):
        notes.append(f"{census[PARABOLIC]} parabolic points excluded from the index sum")
    if coverage < COVERAGE_TARGET:
        notes.append(f"seed convergence {coverage:.1%} below {COVERAGE_TARGET:.0%}; census may be incomplete")
    for msg in notes:
        warnings.warn(msg, CensusWarning)
    complete = not degenerate and not census.get(PARABOLIC)
    return LefschetzReport(p, q, total, dict(census), orbits, complete, degenerate, notes)


ORBIT_HEADER = ["s", "p", "q", "x", "y", "kind", "index", "lambda_re", "lambda_im", "residual"]


def orbits_csv(orbits) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ORBIT_HEADER)
    for o in orbits:
        lam = max(o.eigenvalues, key=lambda v: (abs(v), v.imag))
        for x, y in o.points:
            w.writerow([
                o.s, o.p, o.q, repr(float(x)), repr(float(y)), o.kind,
                "" if o.index is None else o.index,
                repr(float(lam.real)), repr(float(lam.imag)), f"{o.residual:.3e}",
            ])
    return buf.getvalue()
