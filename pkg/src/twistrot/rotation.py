"""Vertical rotation numbers, sampled rotation intervals and tongue scans."""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .maps import AnnulusMap, LiftSpec

SAMPLED = "sampled"
TRIPLET = "triplet-certified"
LOCKED = "free-curve-locked"
_PRECEDENCE = {SAMPLED: 0, TRIPLET: 1, LOCKED: 2}

DEFAULT_QMAX = 64
DEFAULT_N = 20_000
DEFAULT_GRID = (64, 64)
CONVERGED_RADIUS = 1e-3


class MonotonicityWarning(UserWarning):
    pass


class OrbitOverflow(RuntimeError):
    """A vertical displacement exceeded what any map of the given form allows."""


@dataclass(frozen=True)
class RotationEstimate:
    value: float
    n: int
    radius: float
    converged: bool


@dataclass(frozen=True)
class RotationInterval:
    lower: float
    upper: float
    lower_radius: float = 0.0
    upper_radius: float = 0.0
    lower_cert: str = SAMPLED
    upper_cert: str = SAMPLED
    lower_snap: Fraction | None = None
    upper_snap: Fraction | None = None

    def snapped(self, qmax: int = DEFAULT_QMAX) -> "RotationInterval":
        return replace(
            self,
            lower_snap=snap_rational(self.lower, self.lower_radius, qmax),
            upper_snap=snap_rational(self.upper, self.upper_radius, qmax),
        )

    def contains(self, other: "RotationInterval", slack: float = 0.0) -> bool:
        """Whether ``other`` lies inside this interval (radii of ``other`` included)."""
        return (
            self.lower <= other.lower + other.lower_radius + slack
            and other.upper - other.upper_radius - slack <= self.upper
        )


def merge_bounds(inner: RotationInterval, outer: RotationInterval) -> RotationInterval:
    """Keep each endpoint from the source with the strongest provenance tag."""
    lo = outer if _PRECEDENCE[outer.lower_cert] > _PRECEDENCE[inner.lower_cert] else inner
    hi = outer if _PRECEDENCE[outer.upper_cert] > _PRECEDENCE[inner.upper_cert] else inner
    return RotationInterval(
        lo.lower, hi.upper, lo.lower_radius, hi.upper_radius,
        lo.lower_cert, hi.upper_cert, lo.lower_snap, hi.upper_snap,
    )


def displacement_bound(L: LiftSpec) -> float:
    """Crude per-step bound on vertical displacement (analytic coefficient sums)."""
    return L.phi2.sup_bound() + L.psi.sup_bound() + abs(L.t)


def _lift_and_pq(m: AnnulusMap | LiftSpec):
    if isinstance(m, AnnulusMap):
        if m.flipped or m.inverted:
            return None
        return m.base, m.q, m.p
    return m, 1, 0


def _rho_batch(L: LiftSpec, xs, ys, n: int):
    bound = displacement_bound(L) + 1.0
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    return K.orbit_rho(*L._args(), xs, ys, int(n), bound)


def _generic_rho(h: AnnulusMap, z, n: int) -> RotationEstimate:
    x, y = float(z[0]), float(z[1])
    y0 = y
    h0 = n // 2
    tail = []
    for i in range(1, n + 1):
        x, y = h(x, y)
        x, y = float(x), float(y)
        if i >= h0:
            tail.append((i, y - y0))
    rho = (y - y0) / n
    e = [d - i * rho for i, d in tail]
    rad = (max(e) - min(e)) / n
    return RotationEstimate(rho, n, rad, rad <= CONVERGED_RADIUS)


def birkhoff_rho(m: AnnulusMap | LiftSpec, z, n: int) -> RotationEstimate:
    """Average vertical displacement of ``n`` iterates of ``m`` starting at ``z``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = _lift_and_pq(m)
    if parts is None:
        return _generic_rho(m, z, n)
    L, q, p = parts
    val, rad, status = _rho_batch(L, [float(z[0])], [float(z[1])], n * q)
    if status[0]:
        raise OrbitOverflow(f"|y| left the displacement bound along the orbit of {tuple(z)}")
    value = q * float(val[0]) - p
    radius = q * float(rad[0])
    return RotationEstimate(value, n, radius, radius <= CONVERGED_RADIUS)


def jittered_seeds(grid: tuple[int, int], seed: int = 0):
    nx, ny = grid
    if nx < 1 or ny < 1:
        raise ValueError("grid sizes must be >= 1")
    rng = np.random.default_rng(seed)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    jx = rng.uniform(0.25, 0.75, size=(nx, ny))
    jy = rng.uniform(0.25, 0.75, size=(nx, ny))
    return ((i + jx) / nx).ravel(), ((j + jy) / ny).ravel()


def _chunked(fn, xs, ys, threads: int):
    if threads <= 1 or xs.size < 2 * threads:
        return fn(xs, ys)
    bounds = np.linspace(0, xs.size, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ab: fn(xs[ab[0]:ab[1]], ys[ab[0]:ab[1]]), zip(bounds[:-1], bounds[1:])))
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def _sample(L, grid, n, seed, threads, extra=None, qmax=None):
    xs, ys = jittered_seeds(grid, seed)
    if extra is not None and len(extra[0]):
        xs = np.concatenate([xs, extra[0]])
        ys = np.concatenate([ys, extra[1]])
    val, rad, status = _chunked(lambda a, b: _rho_batch(L, a, b, n), xs, ys, threads)
    if np.any(status):
        raise OrbitOverflow("an orbit left the displacement bound; the map is broken")
    r = float(np.max(rad))
    lo, hi = int(np.argmin(val)), int(np.argmax(val))
    iv = RotationInterval(float(val[lo]), float(val[hi]), r, r)
    if qmax:
        # each endpoint snaps within the error radius of the orbit realizing it
        iv = replace(
            iv,
            lower_snap=snap_rational(iv.lower, float(rad[lo]), qmax),
            upper_snap=snap_rational(iv.upper, float(rad[hi]), qmax),
        )
    return iv, xs, ys, val


def interval_sample(
    L: LiftSpec,
    grid: tuple[int, int] = DEFAULT_GRID,
    n: int = DEFAULT_N,
    seed: int = 0,
    threads: int = 1,
    qmax: int | None = None,
    extra_seeds=None,
) -> RotationInterval:
    """Inner approximation of the rotation interval from a jittered seed lattice.

    ``extra_seeds`` is an optional pair of coordinate arrays appended to the lattice.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _sample(L, grid, n, seed, threads, extra_seeds, qmax)[0]


def snap_rational(x: float, radius: float, qmax: int = DEFAULT_QMAX) -> Fraction | None:
    """The unique ``p/q`` with ``q <= qmax`` in ``[x - radius, x + radius]``, if exactly one."""
    if qmax < 1:
        raise ValueError("qmax must be >= 1")
    if not math.isfinite(x):
        return None
    r = max(float(radius), 1e-12 * (1.0 + abs(x)))
    lo, hi = x - r, x + r
    found: set[Fraction] = set()
    for q in range(1, qmax + 1):
        for p in range(math.ceil(lo * q - 1e-9), math.floor(hi * q + 1e-9) + 1):
            if lo <= p / q <= hi:
                found.add(Fraction(p, q))
                if len(found) > 1:
                    return None
    return found.pop() if found else None


@dataclass(frozen=True)
class TongueRow:
    t: float
    interval: RotationInterval
    locked: bool = False


@dataclass(frozen=True)
class Plateau:
    side: str
    value: Fraction
    t_start: float
    t_end: float
    rows: int

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


def t_values(t0: float, t1: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        raise ValueError("t range must be ordered")
    count = int(math.floor((t1 - t0) / step + 1e-9)) + 1
    return [round(t0 + i * step, 12) for i in range(count)]


def monotonicity_violations(rows: Sequence[TongueRow]) -> list[tuple[float, float]]:
    """Pairs ``t < t'`` with ``upper(t') < upper(t) - 2r`` (``r`` the larger radius)."""
    bad = []
    for j, rj in enumerate(rows):
        for ri in rows[:j]:
            r = max(ri.interval.upper_radius, rj.interval.upper_radius)
            if rj.interval.upper < ri.interval.upper - 2.0 * r:
                bad.append((ri.t, rj.t))
    return bad


def tongue_scan(
    L: LiftSpec,
    t_range: tuple[float, float],
    step: float,
    n: int = DEFAULT_N,
    grid: tuple[int, int] = DEFAULT_GRID,
    qmax: int = DEFAULT_QMAX,
    seed: int = 0,
    threads: int = 1,
    lock_check: Callable[[float], bool] | None = None,
    carry_seeds: int = 8,
    witness_qmax: int = 12,
) -> list[TongueRow]:
    """Sample the interval of ``f + (0, t)`` along a grid of ``t`` values.

    The seeds realizing the extreme values at one ``t`` are added to the
    lattice at the next ``t``.  When the sampled upper endpoint drops below
    a rational already reached, a periodic orbit with that rotation number
    is searched for and, if found, restores the endpoint exactly.
    """
    rows = []
    carry = None
    witnesses: dict[Fraction, list] = {}
    best: Fraction | None = None
    for t in t_values(t_range[0], t_range[1], step):
        Lt = L.translated(t)
        iv, xs, ys, val = _sample(Lt, grid, n, seed, threads, carry, qmax)
        # a rational seen at smaller t stays a lower bound for the upper endpoint;
        # look for a periodic orbit realizing it when sampling fell short
        if best is not None and best > iv.upper and best.denominator <= witness_qmax:
            found = periodic_witness(Lt, best, witnesses.get(best))
            if found:
                witnesses[best] = found
                iv = replace(iv, upper=float(best), upper_snap=best)
        if iv.upper_snap is not None and iv.upper_snap.denominator <= witness_qmax:
            if best is None or iv.upper_snap >= best:
                best = iv.upper_snap
        rows.append(TongueRow(t, iv, bool(lock_check(t)) if lock_check else False))
        # warm start: orbits realizing the extremes persist under small increases of t
        order = np.argsort(val, kind="stable")
        keep = np.unique(np.concatenate([order[:carry_seeds], order[-carry_seeds:]]))
        carry = (xs[keep] % 1.0, ys[keep] % 1.0)
    bad = monotonicity_violations(rows)
    if bad:
        listing = ", ".join(f"({a:g}, {b:g})" for a, b in bad[:10])
        warnings.warn(f"upper endpoint decreased beyond tolerance at t pairs {listing}", MonotonicityWarning)
    return rows


def plateau_detect(
    rows: Iterable[TongueRow], target: Fraction | None = None, min_rows: int = 3
) -> list[Plateau]:
    """Maximal runs of ``min_rows`` or more rows sharing a snapped endpoint."""
    rows = list(rows)
    found = []
    for side in ("upper", "lower"):
        run: list[TongueRow] = []
        cur = None

        def close():
            if cur is not None and len(run) >= min_rows and (target is None or cur == target):
                found.append(Plateau(side, cur, run[0].t, run[-1].t, len(run)))

        for row in rows:
            v = getattr(row.interval, f"{side}_snap")
            if v is not None and v == cur:
                run.append(row)
                continue
            close()
            cur, run = v, [row]
        close()
    return found


def periodic_witness(L: LiftSpec, value: Fraction, previous=None, grid: int = 16) -> list:
    """Lifts ``(s, x, y)`` of periodic orbits with vertical rotation ``value``."""
    from .periodic import default_seeds, find_orbits

    p, q = value.numerator, value.denominator
    prev = previous or []
    out = []
    for s in range(abs(L.k) * q):
        xs, ys = default_seeds(L, s, q, grid)
        px = [x for (ps, x, _) in prev if ps == s]
        py = [y for (ps, _, y) in prev if ps == s]
        for o in find_orbits(L, s, p, q, seeds=(xs, ys), extra_seeds=(px, py)):
            out.append((s, o.lift[0], o.lift[1]))
    return out


TONGUE_HEADER = ["t", "lower", "upper", "lower_radius", "upper_radius", "lower_snap", "upper_snap", "locked"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def tongue_csv(rows: Sequence[TongueRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TONGUE_HEADER)
    for r in rows:
        iv = r.interval
        w.writerow([
            _fmt(r.t), _fmt(iv.lower), _fmt(iv.upper), _fmt(iv.lower_radius), _fmt(iv.upper_radius),
            _fmt(iv.lower_snap), _fmt(iv.upper_snap), int(r.locked),
        ])
    return buf.getvalue()
