"""Periodic expression grammar.

Expressions built from constants, ``+``, ``-``, ``*``, ``/`` (by constants),
non-negative integer powers and ``sin``/``cos`` of ``2*pi*(a*x + b*y) + c``
with integer ``a``, ``b``.  The coordinates ``x`` and ``y`` may only occur
inside trigonometric arguments, so every accepted expression is 1-periodic
in both variables by construction.

EBNF::

    program    = statement { (";" | newline) statement } ;
    statement  = name "=" expr ;
    expr       = term { ("+" | "-") term } ;
    term       = unary { ("*" | "·" | "/") unary } ;
    unary      = ("+" | "-") unary | juxtapose ;
    juxtapose  = power { power } ;              (* implicit product, binds tighter than / *)
    power      = primary [ ("^" | "**") unary ] ;
    primary    = number | "pi" | "π" | name | call | "(" expr ")" ;
    call       = ("sin" | "cos") "(" expr ")" ;

Every accepted expression is expanded into a :class:`TrigPoly`, a finite sum
``sum_j c_j cos(2 pi (a_j x + b_j y)) + d_j sin(2 pi (a_j x + b_j y))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
_INT_TOL = 1e-9


class ParseError(ValueError):
    """Malformed map text; ``pos`` is a 0-based character offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        loc = f" at position {pos}"
        if text:
            lo = max(0, pos - 20)
            loc += f": ...{text[lo:pos]}<HERE>{text[pos:pos + 20]}..."
        super().__init__(message + loc)


@dataclass(frozen=True)
class TrigPoly:
    """Trigonometric polynomial on the 2-torus.

    Rows of ``terms`` are ``(a, b, c, d)`` meaning
    ``c*cos(2 pi (a x + b y)) + d*sin(2 pi (a x + b y))``; frequencies are
    stored as floats (integer valued) so the array can go straight into the
    compiled kernels.
    """

    terms: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        arr = np.asarray(self.terms, dtype=np.float64).reshape(-1, 4)
        arr.setflags(write=False)
        object.__setattr__(self, "terms", arr)

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "TrigPoly":
        return cls._canonical({(0, 0): [float(c), 0.0]})

    @classmethod
    def from_terms(cls, rows) -> "TrigPoly":
        acc: dict[tuple[int, int], list[float]] = {}
        for a, b, c, d in rows:
            _accumulate(acc, int(a), int(b), float(c), float(d))
        return cls._canonical(acc)

    @classmethod
    def _canonical(cls, acc) -> "TrigPoly":
        rows = []
        for (a, b) in sorted(acc):
            c, d = acc[(a, b)]
            if a == 0 and b == 0:
                d = 0.0
            if c != 0.0 or d != 0.0:
                rows.append((a, b, c, d))
        return cls(np.array(rows, dtype=np.float64).reshape(-1, 4))

    def _dict(self):
        acc: dict[tuple[int, int], list[float]] = {}
        for a, b, c, d in self.terms:
            _accumulate(acc, int(a), int(b), c, d)
        return acc

    # algebra ------------------------------------------------------------
    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        acc = self._dict()
        for a, b, c, d in other.terms:
            _accumulate(acc, int(a), int(b), c, d)
        return TrigPoly._canonical(acc)

    def scale(self, s: float) -> "TrigPoly":
        arr = self.terms.copy()
        arr[:, 2:] *= s
        return TrigPoly.from_terms(arr)

    def __neg__(self) -> "TrigPoly":
        return self.scale(-1.0)

    def __sub__(self, other: "TrigPoly") -> "TrigPoly":
        return self + (-other)

    def __mul__(self, other: "TrigPoly") -> "TrigPoly":
        acc: dict[tuple[int, int], list[float]] = {}
        for a1, b1, c1, d1 in self.terms:
            for a2, b2, c2, d2 in other.terms:
                a1i, b1i, a2i, b2i = int(a1), int(b1), int(a2), int(b2)
                sp, sm = (a1i + a2i, b1i + b2i), (a1i - a2i, b1i - b2i)
                # cos*cos, sin*sin, sin*cos, cos*sin via product-to-sum
                _accumulate(acc, *sm, 0.5 * (c1 * c2 + d1 * d2), 0.5 * (d1 * c2 - c1 * d2))
                _accumulate(acc, *sp, 0.5 * (c1 * c2 - d1 * d2), 0.5 * (d1 * c2 + c1 * d2))
        return TrigPoly._canonical(acc)

    def __pow__(self, n: int) -> "TrigPoly":
        out = TrigPoly.constant(1.0)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def shift_y(self, s: float) -> "TrigPoly":
        """Return ``(x, y) -> self(x, y + s)``."""
        rows = []
        for a, b, c, d in self.terms:
            ph = TWO_PI * b * s
            cp, sp = math.cos(ph), math.sin(ph)
            # c cos(th+ph) + d sin(th+ph)
            rows.append((a, b, c * cp + d * sp, d * cp - c * sp))
        return TrigPoly.from_terms(rows)

    # queries ------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.terms.shape[0] == 0

    @property
    def depends_on_y(self) -> bool:
        return bool(np.any(self.terms[:, 1] != 0))

    def sup_bound(self) -> float:
        """Crude upper bound on the sup norm (sum of amplitudes)."""
        return float(np.sum(np.hypot(self.terms[:, 2], self.terms[:, 3])))

    def __call__(self, x, y=0.0):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(np.broadcast(x, y).shape)
        xr, yr = x - np.floor(x), y - np.floor(y)
        for a, b, c, d in self.terms:
            th = TWO_PI * (a * xr + b * yr)
            out = out + c * np.cos(th) + d * np.sin(th)
        return out

    def grad(self, x, y=0.0):
        """Partial derivatives ``(d/dx, d/dy)`` evaluated at ``(x, y)``."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gx = np.zeros(np.broadcast(x, y).shape)
        gy = np.zeros_like(gx)
        xr, yr = x - np.floor(x), y - np.floor(y)
        for a, b, c, d in self.terms:
            th = TWO_PI * (a * xr + b * yr)
            w = -c * np.sin(th) + d * np.cos(th)
            gx = gx + TWO_PI * a * w
            gy = gy + TWO_PI * b * w
        return gx, gy

    def to_text(self) -> str:
        """Canonical source text accepted by :func:`parse_expression`."""
        if self.is_zero:
            return "0"
        parts = []
        for a, b, c, d in self.terms:
            a, b = int(a), int(b)
            if a == 0 and b == 0:
                parts.append(repr(float(c)))
                continue
            arg = f"2*pi*({a}*x + {b}*y)"
            if c != 0.0:
                parts.append(f"{float(c)!r}*cos({arg})")
            if d != 0.0:
                parts.append(f"{float(d)!r}*sin({arg})")
        return " + ".join(parts)

    def __eq__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return self.terms.shape == other.terms.shape and bool(np.all(self.terms == other.terms))

    def __hash__(self):
        return hash(self.terms.tobytes())


def _accumulate(acc, a, b, c, d):
    if (a, b) < (0, 0):
        a, b, d = -a, -b, -d
    if a == 0 and b == 0:
        d = 0.0
    cur = acc.setdefault((a, b), [0.0, 0.0])
    cur[0] += c
    cur[1] += d


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<pi>π)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^()=;·\n×])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    val: str
    pos: int


def _tokenize(text: str, start: int = 0, end: int | None = None) -> list[_Tok]:
    end = len(text) if end is None else end
    toks = []
    i = start
    while i < end:
        m = _TOKEN_RE.match(text, i, end)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", i, text)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group()
            if kind == "name" and val == "pi":
                kind = "pi"
            if kind == "op" and val in ("·", "×"):
                val = "*"
            if kind == "op" and val == "**":
                val = "^"
            toks.append(_Tok(kind, val, m.start()))
        i = m.end()
    toks.append(_Tok("eof", "", end))
    return toks


@dataclass(frozen=True)
class _Affine:
    cx: float
    cy: float
    c0: float

    @property
    def is_const(self):
        return self.cx == 0.0 and self.cy == 0.0


class _Parser:
    def __init__(self, text: str, env: dict[str, float], toks=None):
        self.text = text
        self.toks = toks if toks is not None else _tokenize(text)
        self.i = 0
        self.env = env

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t.val != val:
            raise ParseError(f"expected {val!r}, found {t.val or 'end of input'!r}", t.pos, self.text)
        return t

    def fail(self, msg, pos):
        raise ParseError(msg, pos, self.text)

    # values are _Affine or TrigPoly
    def _as_poly(self, v, pos):
        if isinstance(v, TrigPoly):
            return v
        if not v.is_const:
            var = "y" if v.cy != 0.0 else "x"
            self.fail(
                f"non-periodic dependence on {var}: coordinates may only appear inside sin/cos arguments",
                pos,
            )
        return TrigPoly.constant(v.c0)

    def _const(self, v, pos, what):
        if isinstance(v, _Affine) and v.is_const:
            return v.c0
        if isinstance(v, TrigPoly) and not v.terms[:, :2].any():
            return float(v.terms[0, 2]) if v.terms.shape[0] else 0.0
        self.fail(f"{what} must be a constant", pos)

    def expr(self):
        pos = self.peek().pos
        v = self.term()
        while self.peek().val in ("+", "-"):
            op = self.take()
            w = self.term()
            v = self._addsub(v, w, op.val == "-", op.pos)
        return v

    def _addsub(self, v, w, neg, pos):
        if isinstance(v, _Affine) and isinstance(w, _Affine):
            s = -1.0 if neg else 1.0
            return _Affine(v.cx + s * w.cx, v.cy + s * w.cy, v.c0 + s * w.c0)
        pv, pw = self._as_poly(v, pos), self._as_poly(w, pos)
        return pv - pw if neg else pv + pw

    def term(self):
        v = self.unary()
        while self.peek().val in ("*", "/"):
            op = self.take()
            w = self.unary()
            v = self._mul(v, w, op.pos) if op.val == "*" else self._div(v, w, op.pos)
        return v

    def _mul(self, v, w, pos):
        if isinstance(v, _Affine) and isinstance(w, _Affine):
            if v.is_const:
                return _Affine(v.c0 * w.cx, v.c0 * w.cy, v.c0 * w.c0)
            if w.is_const:
                return _Affine(w.c0 * v.cx, w.c0 * v.cy, w.c0 * v.c0)
            self.fail("product of coordinates is not periodic", pos)
        if isinstance(v, _Affine) and v.is_const:
            return self._as_poly(w, pos).scale(v.c0)
        if isinstance(w, _Affine) and w.is_const:
            return self._as_poly(v, pos).scale(w.c0)
        return self._as_poly(v, pos) * self._as_poly(w, pos)

    def _div(self, v, w, pos):
        c = self._const(w, pos, "divisor")
        if c == 0.0:
            self.fail("division by zero", pos)
        if isinstance(v, _Affine):
            return _Affine(v.cx / c, v.cy / c, v.c0 / c)
        return v.scale(1.0 / c)

    def unary(self):
        t = self.peek()
        if t.val in ("+", "-"):
            self.take()
            v = self.unary()
            if t.val == "-":
                v = _Affine(-v.cx, -v.cy, -v.c0) if isinstance(v, _Affine) else -v
            return v
        return self.juxtapose()

    def _starts_primary(self, t):
        return t.kind in ("num", "pi", "name") or t.val == "("

    def juxtapose(self):
        v = self.power()
        while self._starts_primary(self.peek()):
            pos = self.peek().pos
            w = self.power()
            v = self._mul(v, w, pos)
        return v

    def power(self):
        v = self.primary()
        if self.peek().val == "^":
            op = self.take()
            e = self.unary()
            n = self._const(e, op.pos, "exponent")
            if n < 0 or abs(n - round(n)) > _INT_TOL:
                self.fail("exponent must be a non-negative integer", op.pos)
            n = int(round(n))
            if isinstance(v, _Affine) and v.is_const:
                return _Affine(0.0, 0.0, v.c0 ** n)
            return self._as_poly(v, op.pos) ** n
        return v

    def primary(self):
        t = self.take()
        if t.kind == "num":
            return _Affine(0.0, 0.0, float(t.val))
        if t.kind == "pi":
            return _Affine(0.0, 0.0, math.pi)
        if t.val == "(":
            v = self.expr()
            self.expect(")")
            return v
        if t.kind == "name":
            if t.val in ("sin", "cos") and self.peek().val == "(":
                self.take()
                arg_pos = self.peek().pos
                arg = self.expr()
                self.expect(")")
                return self._trig(t.val, arg, arg_pos)
            if t.val == "x":
                return _Affine(1.0, 0.0, 0.0)
            if t.val == "y":
                return _Affine(0.0, 1.0, 0.0)
            if t.val in self.env:
                return _Affine(0.0, 0.0, self.env[t.val])
            self.fail(f"unknown name {t.val!r}", t.pos)
        self.fail(f"unexpected {t.val or 'end of input'!r}", t.pos)

    def _trig(self, fn, arg, pos):
        if isinstance(arg, TrigPoly):
            if arg.terms[:, :2].any():
                self.fail(f"{fn} argument must be affine in x and y", pos)
            arg = _Affine(0.0, 0.0, float(arg.terms[0, 2]) if arg.terms.shape[0] else 0.0)
        fa, fb = arg.cx / TWO_PI, arg.cy / TWO_PI
        for f, var in ((fa, "x"), (fb, "y")):
            if abs(f - round(f)) > _INT_TOL * max(1.0, abs(f)):
                self.fail(
                    f"{fn} argument coefficient of {var} must be 2*pi times an integer (got {f * TWO_PI:g})",
                    pos,
                )
        a, b = int(round(fa)), int(round(fb))
        cp, sp = math.cos(arg.c0), math.sin(arg.c0)
        if fn == "cos":
            # cos(th + c0) = cos th cos c0 - sin th sin c0
            return TrigPoly.from_terms([(a, b, cp, -sp)])
        return TrigPoly.from_terms([(a, b, sp, cp)])


def parse_expression(text: str, env: dict[str, float] | None = None) -> TrigPoly:
    """Parse a single periodic expression into a :class:`TrigPoly`."""
    p = _Parser(text, dict(env or {}))
    pos = p.peek().pos
    v = p.expr()
    t = p.peek()
    if t.kind != "eof":
        p.fail(f"unexpected {t.val!r}", t.pos)
    return p._as_poly(v, pos)


def parse_statements(text: str) -> list[tuple[str, int, int, int]]:
    """Split program text into ``(name, expr_start, expr_end, name_pos)`` spans."""
    out = []
    pos = 0
    for chunk in re.split(r"([;\n])", text):
        if chunk in (";", "\n"):
            pos += 1
            continue
        body = chunk.split("#", 1)[0]
        if body.strip():
            if "=" not in body:
                raise ParseError("expected 'name = expression'", pos + len(body) - len(body.lstrip()), text)
            name, _, _ = body.partition("=")
            name_s = name.strip()
            npos = pos + len(name) - len(name.lstrip())
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name_s):
                raise ParseError(f"invalid name {name_s!r}", npos, text)
            start = pos + len(name) + 1
            out.append((name_s, start, pos + len(body), npos))
        pos += len(chunk)
    return out


def parse_program(text: str, fields: tuple[str, ...]) -> tuple[dict[str, float], dict[str, TrigPoly]]:
    """Parse ``name = expr`` statements.

    Names in ``fields`` are parsed as periodic expressions (after all
    constants); every other name must be a constant expression and becomes
    available to later statements.
    """
    env: dict[str, float] = {}
    exprs: dict[str, tuple[int, int, int]] = {}
    for name, s, e, npos in parse_statements(text):
        if name in ("x", "y", "pi", "sin", "cos"):
            raise ParseError(f"{name!r} is reserved", npos, text)
        if name in env or name in exprs:
            raise ParseError(f"duplicate assignment to {name!r}", npos, text)
        if name in fields:
            exprs[name] = (s, e, npos)
            continue
        p = _Parser(text, env, _tokenize(text, s, e))
        v = p.expr()
        if p.peek().kind != "eof":
            p.fail(f"unexpected {p.peek().val!r}", p.peek().pos)
        env[name] = p._const(v, s, f"parameter {name!r}")
    polys = {}
    for name, (s, e, _) in exprs.items():
        p = _Parser(text, env, _tokenize(text, s, e))
        if p.peek().kind == "eof":
            p.fail(f"empty expression for {name!r}", s)
        v = p.expr()
        if p.peek().kind != "eof":
            p.fail(f"unexpected {p.peek().val!r}", p.peek().pos)
        polys[name] = p._as_poly(v, s)
    return env, polys
