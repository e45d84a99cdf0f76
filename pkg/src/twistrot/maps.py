"""Lifts of torus twist maps homotopic to Dehn twists.

A lift has the form ``F(x, y) = (x + k*y + phi1(x, y), y + phi2(x, y) + t)``
with 1-periodic ``phi1``, ``phi2``.  Optionally a fiber translation
``(x, y) -> (x, y + psi(x))`` is composed after it.
"""

from __future__ import annotations

import enum
import hashlib
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as K
from .expr import ParseError, TrigPoly, parse_program

_ZERO = TrigPoly()
EPS_CLAMP = 1e-12
DEFAULT_PAD = 0.05
DECK_TOL = 1e-9


class TwistViolation(ValueError):
    """Raised when ``k + d(phi1)/dy`` fails to keep the sign of ``k``."""

    def __init__(self, point, value):
        self.point = tuple(float(v) for v in point)
        self.value = float(value)
        super().__init__(
            f"twist condition fails at (x, y) = ({self.point[0]:.6g}, {self.point[1]:.6g}): "
            f"k + dphi1/dy = {self.value:.6g}"
        )


class BracketError(RuntimeError):
    def __init__(self, expansions):
        self.expansions = expansions
        super().__init__(
            f"no sign change after {expansions} bracket expansions; twist constant misestimated?"
        )


@dataclass(frozen=True)
class LiftSpec:
    k: int
    phi1: TrigPoly = field(default_factory=TrigPoly)
    phi2: TrigPoly = field(default_factory=TrigPoly)
    t: float = 0.0
    psi: TrigPoly = field(default_factory=TrigPoly)

    def __post_init__(self):
        if int(self.k) != self.k or self.k == 0:
            raise ValueError("k must be a nonzero integer")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "t", float(self.t))
        if self.psi.depends_on_y:
            raise ValueError("psi must depend on x only")

    # evaluation ---------------------------------------------------------
    def _args(self):
        fq, co = self._fused
        return (fq, co, self.psi.terms, float(self.k), self.t)

    @property
    def _fused(self):
        cached = self.__dict__.get("_fused_cache")
        if cached is None:
            cached = fuse_tables(self.phi1, self.phi2)
            object.__setattr__(self, "_fused_cache", cached)
        return cached

    def __call__(self, x, y):
        return self.iterate(x, y, 1)

    def iterate(self, x, y, n: int = 1):
        """Apply the lift ``n`` times (vectorized over array inputs)."""
        xs, ys, shape = _flat(x, y)
        ox, oy = K.iterate(*self._args(), xs, ys, int(n))
        return ox.reshape(shape), oy.reshape(shape)

    def iterate_jac(self, x, y, n: int = 1):
        xs, ys, shape = _flat(x, y)
        ox, oy, J = K.iterate_jac(*self._args(), xs, ys, int(n))
        return ox.reshape(shape), oy.reshape(shape), J.reshape(shape + (2, 2))

    def jacobian(self, x, y, n: int = 1):
        return self.iterate_jac(x, y, n)[2]

    def inverse(self, xp, yp, tol: float = 1e-13, maxit: int = 60):
        """Invert one step by damped Newton iteration."""
        xp = np.asarray(xp, dtype=np.float64)
        yp = np.asarray(yp, dtype=np.float64)
        y = yp - self.t - (self.psi(xp) if not self.psi.is_zero else 0.0)
        x = xp - self.k * y
        y = y - self.phi2(x, y)
        x = xp - self.k * y - self.phi1(x, y)
        for _ in range(maxit):
            fx, fy, J = self.iterate_jac(x, y, 1)
            rx, ry = xp - fx, yp - fy
            err = np.maximum(np.abs(rx), np.abs(ry))
            if np.all(err <= tol * (1.0 + np.abs(xp) + np.abs(yp))):
                return x, y
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            dx = (J[..., 1, 1] * rx - J[..., 0, 1] * ry) / det
            dy = (-J[..., 1, 0] * rx + J[..., 0, 0] * ry) / det
            lam = np.minimum(1.0, 0.5 / np.maximum(np.hypot(dx, dy), 1e-300))
            x = x + lam * dx
            y = y + lam * dy
        fx, fy = self.iterate(x, y, 1)
        if np.max(np.abs(fx - xp) + np.abs(fy - yp)) > 1e-9 * (1.0 + np.max(np.abs(xp) + np.abs(yp))):
            raise RuntimeError("inverse iteration did not converge")
        return x, y

    # derived maps -------------------------------------------------------
    def with_t(self, t: float) -> "LiftSpec":
        return replace(self, t=float(t))

    def translated(self, c: float) -> "LiftSpec":
        """The lift of ``f + (0, c)``."""
        return replace(self, t=self.t + float(c))

    def conjugated(self, t: float) -> "LiftSpec":
        """The strongly increasing family member ``F(x, y + t/2) + (0, t/2)``."""
        s = 0.5 * float(t)
        return LiftSpec(
            self.k,
            self.phi1.shift_y(s) + TrigPoly.constant(self.k * s),
            self.phi2.shift_y(s),
            self.t + 2.0 * s,
            self.psi,
        )

    def to_text(self) -> str:
        parts = [f"k = {self.k}", f"phi1 = {self.phi1.to_text()}", f"phi2 = {self.phi2.to_text()}", f"t = {float(self.t)!r}"]
        if not self.psi.is_zero:
            parts.append(f"psi = {self.psi.to_text()}")
        return "\n".join(parts) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @property
    def is_integrable(self) -> bool:
        return self.phi1.is_zero and self.phi2.is_zero and self.psi.is_zero


def fuse_tables(phi1: TrigPoly, phi2: TrigPoly):
    """Shared frequency table and per-frequency coefficients of two polynomials."""
    keys = sorted({(int(a), int(b)) for a, b in phi1.terms[:, :2]} | {(int(a), int(b)) for a, b in phi2.terms[:, :2]})
    index = {key: i for i, key in enumerate(keys)}
    fq = np.array(keys, dtype=np.float64).reshape(-1, 2)
    co = np.zeros((len(keys), 4))
    for col, P in ((0, phi1), (2, phi2)):
        for a, b, c, d in P.terms:
            i = index[(int(a), int(b))]
            co[i, col] += c
            co[i, col + 1] += d
    return fq, co


def _flat(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = np.broadcast_arrays(x, y)
    return np.ascontiguousarray(x.ravel()), np.ascontiguousarray(y.ravel()), x.shape


# ---------------------------------------------------------------------------
# parsing


_FIELDS = ("phi1", "phi2", "psi")


def parse_lift(text: str, audit_samples: int = 64) -> LiftSpec:
    """Parse map-definition text such as ``"k=1; phi1=0; phi2=0"``.

    ``k`` and ``t`` are constants; ``phi1``, ``phi2`` (and optionally ``psi``,
    a function of ``x`` alone) are periodic expressions.  Other names are
    free parameters usable in later statements.
    """
    env, polys = parse_program(text, _FIELDS)
    if "k" not in env:
        raise ParseError("missing required field 'k'", len(text), text)
    k = env["k"]
    if k != int(k) or k == 0:
        raise ParseError(f"k must be a nonzero integer (got {k!r})", text.find("k"), text)
    psi = polys.get("psi", _ZERO)
    if psi.depends_on_y:
        raise ParseError("psi may depend on x only", text.find("psi"), text)
    L = LiftSpec(int(k), polys.get("phi1", _ZERO), polys.get("phi2", _ZERO), env.get("t", 0.0), psi)
    twist_audit(L, audit_samples)
    rep = deck_audit(L, audit_samples * audit_samples)
    if not rep.passed:
        raise ValueError(f"deck equivariance audit failed (deviation {rep.max_deviation:.3g})")
    return L


def _load_toml(path: Path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def lift_from_mapping(data: dict) -> LiftSpec:
    """Build a lift from a mapping with fields ``k``, ``phi1``, ``phi2``, ``t``."""
    params = data.get("params", {})
    lines = [f"{name} = {value}" for name, value in params.items()]
    for key in ("k", "t", "phi1", "phi2", "psi"):
        if key in data:
            lines.append(f"{key} = {data[key]}")
    return parse_lift("\n".join(lines))


def load_lift(path) -> LiftSpec:
    """Load a map from a TOML file (a ``[map]`` table or top-level fields)."""
    data = _load_toml(Path(path))
    return lift_from_mapping(data.get("map", data))


# ---------------------------------------------------------------------------
# audits and constants


def apply_lift(L: LiftSpec, z):
    x, y = L(z[0], z[1])
    return (float(x), float(y)) if np.ndim(x) == 0 else (x, y)


@dataclass(frozen=True)
class DeckReport:
    max_deviation: float
    passed: bool


def deck_audit(L, samples: int = 4096, seed: int = 0) -> DeckReport:
    """Check ``F(x+n, y+m) = F(x, y) + (n + k*m, m)`` for ``n, m`` in ``{-1, 0, 1}``."""
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    y = rng.random(samples)
    fx, fy = L(x, y)
    dev = 0.0
    for n in (-1, 0, 1):
        for m in (-1, 0, 1):
            gx, gy = L(x + n, y + m)
            d = np.maximum(np.abs(gx - fx - (n + L.k * m)), np.abs(gy - fy - m))
            dev = max(dev, float(np.max(d)))
    return DeckReport(dev, dev < DECK_TOL)


def _grid(samples):
    u = (np.arange(samples) + 0.5) / samples
    return np.meshgrid(u, u, indexing="ij")


def twist_audit(L: LiftSpec, samples: int = 64) -> float:
    """Return ``min sign(k) * (k + dphi1/dy)`` over a grid; raise if not positive."""
    X, Y = _grid(samples)
    _, gy = L.phi1.grad(X, Y)
    val = np.sign(L.k) * (L.k + gy)
    i = int(np.argmin(val))
    if val.flat[i] <= 0.0:
        raise TwistViolation((X.flat[i], Y.flat[i]), (L.k + gy).flat[i])
    return float(val.flat[i])


@dataclass(frozen=True)
class TwistConstants:
    k_tw: float
    A: float
    B: float
    M: float
    pad: float = DEFAULT_PAD


def twist_constants(L: LiftSpec, samples: int = 64, pad: float = DEFAULT_PAD) -> TwistConstants:
    """Sampled twist, displacement, shear and Lipschitz bounds, padded by ``pad``."""
    kmin = twist_audit(L, samples)
    X, Y = _grid(samples)
    fx, _, J = L.iterate_jac(X, Y, 1)
    disp = L.phi2(X, Y)
    if not L.psi.is_zero:
        disp = disp + L.psi(fx)
    gx, _ = L.phi1.grad(X, Y)
    sv = np.linalg.svd(J.reshape(-1, 2, 2), compute_uv=False)
    M = float(np.max(np.maximum(sv[:, 0], 1.0 / sv[:, 1])))
    return TwistConstants(
        k_tw=kmin / (1.0 + pad),
        A=max(float(np.max(np.abs(disp))) * (1.0 + pad), EPS_CLAMP),
        B=max(float(np.max(np.abs(gx))) * (1.0 + pad), EPS_CLAMP),
        M=max(M * (1.0 + pad), 1.0),
        pad=pad,
    )


# ---------------------------------------------------------------------------
# generating pair and orders


class GeneratingPair:
    """``F(x, y) = (x', y')  <=>  y = g(x, x'),  y' = g'(x, x')``."""

    def __init__(self, L: LiftSpec, tol: float = 1e-12, max_expansions: int = 10_000):
        self.L = L
        self.tol = tol
        self.max_expansions = max_expansions
        self.k_tw = twist_audit(L, 32) / (1.0 + DEFAULT_PAD)

    def _F(self, x, y, xp):
        L = self.L
        return x + L.k * y + L.phi1(x, y) - xp

    def g(self, x, xp):
        L = self.L
        x = np.asarray(x, dtype=np.float64)
        xp = np.asarray(xp, dtype=np.float64)
        x, xp = np.broadcast_arrays(x, xp)
        sk = 1.0 if L.k > 0 else -1.0
        y0 = (xp - x) / L.k
        if L.phi1.is_zero:
            return y0.copy()
        h = 1.0 / (2.0 * self.k_tw * abs(L.k))
        f0 = sk * self._F(x, y0, xp)
        # step against the sign of the (increasing) sk*F until it flips
        direction = -np.sign(f0)
        lo, hi = y0.copy(), y0.copy()
        done = f0 == 0.0
        cur = y0.copy()
        n = 0
        while not np.all(done):
            if n >= self.max_expansions:
                raise BracketError(n)
            n += 1
            nxt = np.where(done, cur, cur + direction * h)
            fn = sk * self._F(x, nxt, xp)
            flipped = ~done & (np.sign(fn) != np.sign(f0))
            lo = np.where(flipped, np.minimum(cur, nxt), lo)
            hi = np.where(flipped, np.maximum(cur, nxt), hi)
            done = done | flipped
            cur = nxt
        for _ in range(200):
            if np.all(hi - lo <= self.tol):
                break
            mid = 0.5 * (lo + hi)
            fm = sk * self._F(x, mid, xp)
            lo = np.where(fm < 0.0, mid, lo)
            hi = np.where(fm < 0.0, hi, mid)
        y = 0.5 * (lo + hi)
        for _ in range(3):
            _, gy = L.phi1.grad(x, y)
            yn = y - self._F(x, y, xp) / (L.k + gy)
            ok = (yn >= lo - self.tol) & (yn <= hi + self.tol)
            y = np.where(ok, yn, y)
        return y

    def __call__(self, x, xp):
        y = self.g(x, xp)
        _, yp = self.L(np.asarray(x, dtype=np.float64) + 0.0 * y, y)
        return y, yp

    def gprime(self, x, xp):
        return self(x, xp)[1]


def generating_pair(L: LiftSpec, x, xprime):
    y, yp = GeneratingPair(L)(x, xprime)
    if np.ndim(y) == 0:
        return float(y), float(yp)
    return y, yp


class Order(enum.Enum):
    EQUAL = "="
    LE = "<="
    GE = ">="
    STRONGLY_LESS = "<<"
    STRONGLY_GREATER = ">>"
    INCOMPARABLE = "incomparable"


def compare_order(L1: LiftSpec, L2: LiftSpec, grid: int = 64, tol: float = 1e-10) -> Order:
    """Compare two twist lifts in the generating-pair order (``L1 ? L2``)."""
    if L1.k != L2.k:
        raise ValueError("order comparison needs equal twist degree")
    u = np.arange(grid) / grid
    X, XP = np.meshgrid(u, u * abs(L1.k), indexing="ij")
    g1, gp1 = GeneratingPair(L1)(X, XP)
    g2, gp2 = GeneratingPair(L2)(X, XP)
    dg = g1 - g2       # >= 0 when L1 <= L2
    dgp = gp2 - gp1    # >= 0 when L1 <= L2
    if np.all(np.abs(dg) <= tol) and np.all(np.abs(dgp) <= tol):
        return Order.EQUAL
    if np.all(dg > tol) and np.all(dgp > tol):
        return Order.STRONGLY_LESS
    if np.all(dg < -tol) and np.all(dgp < -tol):
        return Order.STRONGLY_GREATER
    if np.all(dg >= -tol) and np.all(dgp >= -tol):
        return Order.LE
    if np.all(dg <= tol) and np.all(dgp <= tol):
        return Order.GE
    return Order.INCOMPARABLE


# ---------------------------------------------------------------------------
# annulus return maps


@dataclass(frozen=True)
class AnnulusMap:
    """``(x, y) -> F^q(x, y) - (0, p)`` on ``T^1 x R``.

    ``flipped`` conjugates by ``(x, y) -> (x, -y)``; ``inverted`` uses the
    inverse map.  Both keep commuting with the deck translation ``(0, 1)``.
    """

    base: LiftSpec
    q: int = 1
    p: int = 0
    flipped: bool = False
    inverted: bool = False

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")

    def lift(self, x, y):
        """Evaluate without reducing ``x`` modulo 1."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.flipped:
            y = -y
        if self.inverted:
            y = y + self.p
            for _ in range(self.q):
                x, y = self.base.inverse(x, y)
        else:
            x, y = self.base.iterate(x, y, self.q)
            y = y - self.p
        if self.flipped:
            y = -y
        return x, y

    def __call__(self, x, y):
        x, y = self.lift(x, y)
        return x - np.floor(x), y

    def trajectory(self, x, y):
        """Intermediate points of one application (``q + 1`` points, unreduced)."""
        pts = [(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))]
        for _ in range(self.q):
            pts.append(self.base.iterate(*pts[-1], 1))
        return pts

    def flip(self) -> "AnnulusMap":
        return replace(self, flipped=not self.flipped)

    def inverse(self) -> "AnnulusMap":
        return replace(self, inverted=not self.inverted)

    def lipschitz(self, C: TwistConstants | None = None) -> float:
        C = C or twist_constants(self.base)
        return C.M ** self.q

    def displacement_bound(self, C: TwistConstants | None = None) -> float:
        C = C or twist_constants(self.base)
        return self.q * (C.A + abs(self.base.t)) + abs(self.p)


def power_minus(L: LiftSpec, q: int, p: int) -> AnnulusMap:
    return AnnulusMap(L, int(q), int(p))


# ---------------------------------------------------------------------------
# fiber translations


def trig_interpolant(samples) -> TrigPoly:
    """Trigonometric interpolant of values sampled at ``x_j = j/N``."""
    v = np.asarray(samples, dtype=np.float64)
    N = v.size
    X = np.fft.rfft(v) / N
    rows = [(0, 0, X[0].real, 0.0)]
    for m in range(1, X.size):
        scale = 1.0 if (N % 2 == 0 and m == N // 2) else 2.0
        # X_m e^{2 pi i m x} + conj  ->  2 Re X_m cos - 2 Im X_m sin
        c, d = scale * X[m].real, -scale * X[m].imag
        if N % 2 == 0 and m == N // 2:
            d = 0.0
        rows.append((m, 0, c, d))
    arr = np.array(rows, dtype=np.float64)
    # drop round-off noise from the transform
    tiny = 1e-14 * max(1.0, float(np.max(np.abs(v))))
    arr[:, 2:][np.abs(arr[:, 2:]) < tiny] = 0.0
    return TrigPoly.from_terms(arr)


def compose_fiber_translation(L: LiftSpec, psi) -> LiftSpec:
    """The lift of ``T o f`` with ``T(x, y) = (x, y + psi(x))``.

    ``psi`` may be a constant, a :class:`TrigPoly` in ``x``, or an array of
    samples on a uniform grid of ``[0, 1)`` (trigonometric interpolation).
    """
    if isinstance(psi, TrigPoly):
        poly = psi
    elif np.ndim(psi) == 0:
        poly = TrigPoly.constant(float(psi))
    else:
        poly = trig_interpolant(psi)
    if poly.depends_on_y:
        raise ValueError("psi must depend on x only")
    return replace(L, psi=L.psi + poly)


def sup_norm(poly: TrigPoly, samples: int = 4096) -> float:
    u = np.arange(samples) / samples
    return float(np.max(np.abs(poly(u, 0.0))))


STANDARD_TEMPLATE = "a = {a!r}\nk = 1\nphi1 = (a/(2*pi))*sin(2*pi*x)\nphi2 = (a/(2*pi))*sin(2*pi*x)\nt = {t!r}\n"


def standard_map(a: float, t: float = 0.0) -> LiftSpec:
    """Lift of ``(x, y) -> (x + y + a/(2 pi) sin(2 pi x), y + a/(2 pi) sin(2 pi x))``."""
    return parse_lift(STANDARD_TEMPLATE.format(a=float(a), t=float(t)))


def integrable(k: int = 1, t: float = 0.0) -> LiftSpec:
    return LiftSpec(k, t=t)


def fundamental_period_check(L: LiftSpec) -> float:
    """Max deviation of ``phi1, phi2`` from 1-periodicity on a sample grid."""
    X, Y = _grid(16)
    dev = 0.0
    for P in (L.phi1, L.phi2):
        v = P(X, Y)
        dev = max(dev, float(np.max(np.abs(P(X + 1, Y) - v))), float(np.max(np.abs(P(X, Y + 1) - v))))
    return dev

