"""Graded polynomial algebra for local dg manifold charts.

A chart is a graded coordinate system (degree-0 coordinates ``x`` living in an
open box plus positive-degree coordinates ``xi``), together with the structure
polynomials ``F^i = Q xi^i``.  Coefficients are exact rationals and every
identity here (Q^2 = 0, Leibniz rules) is checked by exact comparison.

Sign conventions: monomials in positive-degree coordinates are stored sorted by
coordinate index, derivatives are left derivatives, and for a Lie algebra with
bracket constants ``f`` the structure polynomials are
``Q xi^i = -1/2 f^i_jk xi^j xi^k`` (see :func:`lie_algebra_fq`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

Number = Fraction | int


class ChartError(ValueError):
    """Raised for malformed or invalid chart data."""


class ChartParseError(ChartError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class Q2Violation(ChartError):
    def __init__(self, coords: Sequence[str], residuals):
        super().__init__("Q^2 != 0 on coordinates: " + ", ".join(coords))
        self.coords = list(coords)
        self.residuals = residuals


@dataclass(frozen=True)
class GradedCoordSystem:
    names: tuple[str, ...]
    degrees: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.degrees):
            raise ChartError("names and degrees differ in length")
        if len(set(self.names)) != len(self.names):
            raise ChartError("coordinate names must be unique")
        for d in self.degrees:
            if not isinstance(d, int) or d < 0:
                raise ChartError(f"invalid coordinate degree {d!r}")
        if self.degrees and max(self.degrees) == 0:
            raise ChartError("at least one coordinate of positive degree is required")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def ell(self) -> int:
        return max(self.degrees) if self.degrees else 0

    @cached_property
    def zero_idx(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.degrees) if d == 0)

    @cached_property
    def pos_idx(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.degrees) if d > 0)

    @cached_property
    def _zero_pos(self) -> dict[int, int]:
        return {c: k for k, c in enumerate(self.zero_idx)}

    def zero_slot(self, i: int) -> int:
        """Position of degree-0 coordinate ``i`` inside coefficient exponents."""
        return self._zero_pos[i]

    def dims(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for d in self.degrees:
            out[d] = out.get(d, 0) + 1
        return out

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ChartError(f"unknown coordinate {name!r}") from None


@dataclass(frozen=True)
class OpenBox:
    """Product of open intervals, one per degree-0 coordinate."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ChartError("box bounds differ in length")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ChartError(f"empty interval ({a}, {b})")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: Sequence[float], shrink: float = 0.0) -> bool:
        for xi, a, b in zip(x, self.lo, self.hi):
            if math.isfinite(a) and math.isfinite(b):
                pad = shrink * (b - a) / 2
                a, b = a + pad, b - pad
            if not a < xi < b:
                return False
        return True

    def center(self) -> tuple[float, ...]:
        out = []
        for a, b in zip(self.lo, self.hi):
            if math.isfinite(a) and math.isfinite(b):
                out.append((a + b) / 2)
            elif math.isfinite(a):
                out.append(a + 1.0)
            elif math.isfinite(b):
                out.append(b - 1.0)
            else:
                out.append(0.0)
        return tuple(out)


def koszul_normalize(mono: Sequence[int], degrees: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sort a product of coordinates, returning (sign, sorted indices).

    The sign is 0 when an odd coordinate repeats.
    """
    seq = list(mono)
    sign = 1
    # insertion sort, tracking the Koszul sign of each adjacent swap
    for a in range(1, len(seq)):
        b = a
        while b > 0 and seq[b - 1] > seq[b]:
            if degrees[seq[b - 1]] % 2 and degrees[seq[b]] % 2:
                sign = -sign
            seq[b - 1], seq[b] = seq[b], seq[b - 1]
            b -= 1
    for a in range(1, len(seq)):
        if seq[a] == seq[a - 1] and degrees[seq[a]] % 2:
            return 0, ()
    return sign, tuple(seq)


def _mono_degree(mono: tuple[int, ...], degrees: Sequence[int]) -> int:
    return sum(degrees[i] for i in mono)


class GradedPolynomial:
    """Element of C[x] (x) S(xi) with exact rational coefficients.

    ``terms`` maps ``(xexp, mono)`` to a nonzero Fraction, where ``xexp`` is
    the exponent tuple over the degree-0 coordinates and ``mono`` the sorted
    tuple of positive-degree coordinate indices.
    """

    __slots__ = ("coords", "terms")

    def __init__(self, coords: GradedCoordSystem, terms: Mapping | Iterable = ()):
        self.coords = coords
        out: dict[tuple, Fraction] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        degs = coords.degrees
        nz = len(coords.zero_idx)
        for (xexp, mono), c in items:
            xexp = tuple(xexp)
            if len(xexp) != nz:
                raise ChartError("coefficient exponent has wrong length")
            for i in mono:
                if degs[i] == 0:
                    raise ChartError("degree-0 coordinate inside a monomial")
            sign, mono = koszul_normalize(mono, degs)
            if sign == 0:
                continue
            key = (xexp, mono)
            out[key] = out.get(key, Fraction(0)) + sign * Fraction(c)
        self.terms = {k: v for k, v in out.items() if v != 0}

    # constructors
    @classmethod
    def zero(cls, coords: GradedCoordSystem) -> "GradedPolynomial":
        return cls(coords)

    @classmethod
    def const(cls, coords: GradedCoordSystem, c: Number) -> "GradedPolynomial":
        return cls(coords, {((0,) * len(coords.zero_idx), ()): c})

    @classmethod
    def var(cls, coords: GradedCoordSystem, i: int) -> "GradedPolynomial":
        nz = len(coords.zero_idx)
        if coords.degrees[i] == 0:
            xexp = [0] * nz
            xexp[coords.zero_slot(i)] = 1
            return cls(coords, {(tuple(xexp), ()): 1})
        return cls(coords, {((0,) * nz, (i,)): 1})

    # algebra
    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0) + v
        return GradedPolynomial(self.coords, t)

    __radd__ = __add__

    def __neg__(self):
        return GradedPolynomial(self.coords, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return GradedPolynomial(self.coords, {k: v * other for k, v in self.terms.items()})
        other = self._coerce(other)
        out = []
        for (xa, ma), ca in self.terms.items():
            for (xb, mb), cb in other.terms.items():
                xexp = tuple(p + q for p, q in zip(xa, xb))
                out.append(((xexp, ma + mb), ca * cb))
        return GradedPolynomial(self.coords, out)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self * other
        return self._coerce(other) * self

    def __pow__(self, k: int):
        out = GradedPolynomial.const(self.coords, 1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = GradedPolynomial.const(self.coords, other)
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        return self.coords == other.coords and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def _coerce(self, other) -> "GradedPolynomial":
        if isinstance(other, GradedPolynomial):
            if other.coords != self.coords:
                raise ChartError("polynomials over different coordinate systems")
            return other
        if isinstance(other, (int, Fraction)):
            return GradedPolynomial.const(self.coords, other)
        raise TypeError(f"cannot combine GradedPolynomial with {type(other).__name__}")

    # structure
    def is_zero(self) -> bool:
        return not self.terms

    def degrees(self) -> set[int]:
        return {_mono_degree(m, self.coords.degrees) for (_, m) in self.terms}

    @property
    def degree(self) -> int | None:
        """Cohomological degree, or None for zero / inhomogeneous polynomials."""
        ds = self.degrees()
        return ds.pop() if len(ds) == 1 else None

    def normalized(self) -> "GradedPolynomial":
        return GradedPolynomial(self.coords, self.terms)

    def x_degree(self) -> int:
        return max((sum(x) for (x, _) in self.terms), default=0)

    def evaluate_coefficients(self, x: Sequence[float]) -> dict[tuple[int, ...], float]:
        """Evaluate the degree-0 coefficients at x, keeping the xi-monomials."""
        out: dict[tuple[int, ...], float] = {}
        for (xexp, mono), c in self.terms.items():
            v = float(c)
            for xi, e in zip(x, xexp):
                v *= xi**e
            out[mono] = out.get(mono, 0.0) + v
        return out

    def __repr__(self):
        return f"GradedPolynomial({format_polynomial(self)})"


def grade_partial(p: GradedPolynomial, i: int) -> GradedPolynomial:
    """Left graded partial derivative with respect to coordinate ``i``.

    For a degree-0 coordinate this is the ordinary derivative of the
    coefficient polynomial.
    """
    coords = p.coords
    degs = coords.degrees
    out = []
    if degs[i] == 0:
        slot = coords.zero_slot(i)
        for (xexp, mono), c in p.terms.items():
            e = xexp[slot]
            if e:
                nx = xexp[:slot] + (e - 1,) + xexp[slot + 1 :]
                out.append(((nx, mono), c * e))
        return GradedPolynomial(coords, out)
    for (xexp, mono), c in p.terms.items():
        if i not in mono:
            continue
        r = mono.index(i)
        mult = mono.count(i)
        before = sum(degs[j] for j in mono[:r])
        sign = -1 if (degs[i] * before) % 2 else 1
        rest = mono[:r] + mono[r + 1 :]
        out.append(((xexp, rest), c * sign * mult))
    return GradedPolynomial(coords, out)


def apply_vector_field(fields: Sequence[GradedPolynomial], p: GradedPolynomial) -> GradedPolynomial:
    """Apply the derivation sum_i fields[i] * d/dxi^i to p."""
    out = GradedPolynomial.zero(p.coords)
    for i, f in enumerate(fields):
        if f.is_zero():
            continue
        dp = grade_partial(p, i)
        if not dp.is_zero():
            out = out + f * dp
    return out


def substitute(p: GradedPolynomial, images: Sequence[GradedPolynomial]) -> GradedPolynomial:
    """Algebra map sending coordinate i to images[i] (images share one system)."""
    if not images:
        raise ChartError("substitute needs at least one image")
    target = images[0].coords
    src = p.coords
    out = GradedPolynomial.zero(target)
    for (xexp, mono), c in p.terms.items():
        term = GradedPolynomial.const(target, c)
        for slot, e in enumerate(xexp):
            if e:
                term = term * images[src.zero_idx[slot]] ** e
        for j in mono:
            term = term * images[j]
        out = out + term
    return out


@dataclass(frozen=True, eq=False)
class ChartedDgManifold:
    coords: GradedCoordSystem
    box: OpenBox
    fq: tuple[GradedPolynomial, ...]
    omega: object = None
    label: str = "chart"
    checked: bool = field(default=True)

    def __post_init__(self):
        c = self.coords
        if len(self.fq) != c.dim:
            raise ChartError("one structure polynomial per coordinate is required")
        if self.box.dim != len(c.zero_idx):
            raise ChartError("box must have one interval per degree-0 coordinate")
        for i, f in enumerate(self.fq):
            if f.coords != c:
                raise ChartError("structure polynomial over wrong coordinates")
            ds = f.degrees()
            if ds and ds != {c.degrees[i] + 1}:
                raise ChartError(f"Q{c.names[i]} must have degree {c.degrees[i] + 1}")

    @property
    def ell(self) -> int:
        return self.coords.ell

    @property
    def dim(self) -> int:
        return self.coords.dim

    @cached_property
    def dfq(self) -> tuple[tuple[GradedPolynomial, ...], ...]:
        """dfq[k][i] = left derivative of F^k with respect to coordinate i."""
        return tuple(tuple(grade_partial(f, i) for i in range(self.dim)) for f in self.fq)

    def is_lie_algebra(self) -> bool:
        return not self.coords.zero_idx and set(self.coords.degrees) == {1} and all(
            f.is_zero() or f.x_degree() == 0 for f in self.fq
        )

    def bracket_constants(self):
        """Bracket constants f[i][j][k] with [e_j, e_k] = f^i_jk e_i (Lie charts only)."""
        if not self.is_lie_algebra():
            raise ChartError("not a Lie algebra chart")
        n = self.dim
        f = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
        for i, p in enumerate(self.fq):
            for (_, mono), c in p.terms.items():
                if len(mono) != 2:
                    raise ChartError("Lie algebra chart must be quadratic")
                j, k = mono
                f[i][j][k] = -c
                f[i][k][j] = c
        return f


def check_q2(dg: ChartedDgManifold) -> list[GradedPolynomial]:
    """Residual polynomials Q(F^k) = sum_i F^i dF^k/dxi^i, one per coordinate."""
    return [apply_vector_field(dg.fq, fk) for fk in dg.fq]


def q2_ok(dg: ChartedDgManifold) -> bool:
    return all(r.is_zero() for r in check_q2(dg))


def linearize_fq(dg: ChartedDgManifold, x: Sequence[float], check_box: bool = True):
    """Matrix M[k, i] = dF^k/dxi^i at the point (x, xi=0).

    The linearized differential acts on W by (Q_lin w)^k = -sum_i w^i M[k, i].
    """
    import numpy as np

    if check_box and not dg.box.contains(x):
        raise ChartError(f"point {tuple(x)} outside the box")
    n = dg.dim
    m = np.zeros((n, n))
    for k in range(n):
        for i in range(n):
            coeffs = dg.dfq[k][i].evaluate_coefficients(x)
            m[k, i] = coeffs.get((), 0.0)
    return m


def lie_algebra_fq(coords: GradedCoordSystem, bracket) -> tuple[GradedPolynomial, ...]:
    """Structure polynomials of a Lie algebra from bracket constants f[i][j][k]."""
    out = []
    n = coords.dim
    for i in range(n):
        terms = []
        for j in range(n):
            for k in range(n):
                c = Fraction(bracket[i][j][k])
                if c:
                    terms.append((((), (j, k)), -c / 2))
        out.append(GradedPolynomial(coords, terms))
    return tuple(out)


# ----------------------------------------------------------------- text format

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class _ExprParser:
    def __init__(self, text: str, coords: GradedCoordSystem, line: int, col0: int):
        self.coords = coords
        self.line = line
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ChartParseError(f"unexpected character {text[pos].strip() or text[pos]!r}", line, col0 + pos)
            start = m.start(m.lastindex)
            kind = ("num", "name", "op")[m.lastindex - 1]
            self.toks.append((kind, m.group(m.lastindex), col0 + start))
            pos = m.end()
        self.i = 0
        self.end_col = col0 + len(text)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("end", "", self.end_col)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ChartParseError(msg, self.line, tok[2])

    def parse(self) -> GradedPolynomial:
        if not self.toks:
            self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()
            if op[1] == "*":
                p = p * self.unary()
            else:
                tok = self.peek()
                q = self.unary()
                if q.degree not in (0, None) or any(x != (0,) * len(x) or m for (x, m) in q.terms):
                    self.error("division only by numeric constants", tok)
                if q.is_zero():
                    self.error("division by zero", tok)
                p = p * (1 / next(iter(q.terms.values())))
        return p

    def unary(self):
        if self.peek() == ("op", "-", self.peek()[2]):
            self.take()
            return -self.unary()
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.take()
            return self.unary()
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] in ("^", "**"):
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.error("exponent must be a non-negative integer", tok)
            base = base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return GradedPolynomial.const(self.coords, Fraction(val))
        if kind == "name":
            if val not in self.coords.names:
                self.error(f"unknown coordinate {val!r}", tok)
            return GradedPolynomial.var(self.coords, self.coords.index(val))
        if kind == "end":
            self.error("unexpected end of expression", tok)
        if val == "(":
            p = self.expr()
            if self.take()[1] != ")":
                self.error("unclosed '('", tok)
            return p
        self.error(f"unexpected token {val!r}", tok)


def parse_expression(text: str, coords: GradedCoordSystem, line: int = 1, col: int = 1) -> GradedPolynomial:
    return _ExprParser(text, coords, line, col).parse()


def _parse_float(tok: str, line: int, col: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ChartParseError(f"invalid number {tok!r}", line, col) from None


def parse_dg_spec(text: str, label: str = "chart", allow_unchecked: bool = False) -> ChartedDgManifold:
    """Parse and validate a chart file."""
    sections: dict[str, list[tuple[int, int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ChartParseError("unterminated section header", lineno, col)
            current = stripped[1:-1].strip().lower()
            if current not in ("coords", "box", "q", "omega", "label"):
                raise ChartParseError(f"unknown section [{current}]", lineno, col)
            if current in sections:
                raise ChartParseError(f"duplicate section [{current}]", lineno, col)
            sections[current] = []
            continue
        if current is None:
            raise ChartParseError("content before the first section", lineno, col)
        sections[current].append((lineno, col, line))

    if "coords" not in sections:
        raise ChartParseError("missing [coords] section", 1, 1)
    if "q" not in sections:
        raise ChartParseError("missing [Q] section", 1, 1)

    names, degrees = [], []
    for lineno, col, line in sections["coords"]:
        parts = line.split()
        if len(parts) != 2:
            raise ChartParseError("expected 'name degree'", lineno, col)
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", parts[0]):
            raise ChartParseError(f"invalid coordinate name {parts[0]!r}", lineno, col)
        if parts[0] in names:
            raise ChartParseError(f"duplicate coordinate {parts[0]!r}", lineno, col)
        if not parts[1].isdigit():
            raise ChartParseError("degree must be a non-negative integer", lineno, line.index(parts[1], len(parts[0])) + 1)
        names.append(parts[0])
        degrees.append(int(parts[1]))
    try:
        coords = GradedCoordSystem(tuple(names), tuple(degrees))
    except ChartError as e:
        raise ChartParseError(str(e), sections["coords"][0][0] if sections["coords"] else 1, 1) from None

    for lineno, col, line in sections.get("label", []):
        label = line.strip()

    lo = {}
    hi = {}
    for lineno, col, line in sections.get("box", []):
        parts = line.split()
        if len(parts) != 3:
            raise ChartParseError("expected 'name lo hi'", lineno, col)
        name = parts[0]
        if name not in names:
            raise ChartParseError(f"unknown coordinate {name!r}", lineno, col)
        i = names.index(name)
        if degrees[i] != 0:
            raise ChartParseError(f"box given for positive-degree coordinate {name!r}", lineno, col)
        a = _parse_float(parts[1], lineno, col)
        b = _parse_float(parts[2], lineno, col)
        if not a < b:
            raise ChartParseError("box interval must satisfy lo < hi", lineno, col)
        lo[i], hi[i] = a, b
    box = OpenBox(
        tuple(lo.get(i, -math.inf) for i in coords.zero_idx),
        tuple(hi.get(i, math.inf) for i in coords.zero_idx),
    )

    fq: list[GradedPolynomial | None] = [None] * coords.dim
    for lineno, col, line in sections["q"]:
        if "=" not in line:
            raise ChartParseError("expected 'name = expression'", lineno, col)
        lhs, rhs = line.split("=", 1)
        name = lhs.strip()
        if name not in names:
            raise ChartParseError(f"unknown coordinate {name!r}", lineno, col)
        i = names.index(name)
        if fq[i] is not None:
            raise ChartParseError(f"duplicate Q entry for {name!r}", lineno, col)
        rcol = len(lhs) + 2
        p = parse_expression(rhs, coords, lineno, rcol)
        if not p.is_zero() and p.degrees() != {degrees[i] + 1}:
            raise ChartParseError(f"Q{name} must be homogeneous of degree {degrees[i] + 1}", lineno,
                                  rcol + len(rhs) - len(rhs.lstrip()))
        fq[i] = p
    fq_t = tuple(p if p is not None else GradedPolynomial.zero(coords) for p in fq)

    dg = ChartedDgManifold(coords, box, fq_t, None, label, checked=not allow_unchecked)
    if not allow_unchecked:
        res = check_q2(dg)
        bad = [names[k] for k, r in enumerate(res) if not r.is_zero()]
        if bad:
            raise Q2Violation(bad, res)

    if "omega" in sections:
        from .symplectic import PreSymplecticData

        entries = []
        for lineno, col, line in sections["omega"]:
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise ChartParseError("expected 'name_i name_j value'", lineno, col)
            for nm in parts[:2]:
                if nm not in names:
                    raise ChartParseError(f"unknown coordinate {nm!r}", lineno, col)
            vcol = line.index(parts[2], len(parts[0]) + len(parts[1])) + 1
            val = parse_expression(parts[2], coords, lineno, vcol)
            entries.append((names.index(parts[0]), names.index(parts[1]), val, lineno, col))
        try:
            omega = PreSymplecticData.from_entries(coords, entries)
        except ChartError as e:
            raise ChartParseError(str(e), entries[0][3] if entries else 1, 1) from None
        dg = ChartedDgManifold(coords, box, fq_t, omega, label, checked=dg.checked)
        if not allow_unchecked:
            omega.check_invariance(dg)
    return dg


def format_polynomial(p: GradedPolynomial) -> str:
    c = p.coords
    if p.is_zero():
        return "0"
    parts = []
    for (xexp, mono), coef in sorted(p.terms.items(), key=lambda kv: (sorted(kv[0][1]), kv[0])):
        factors = []
        for slot, e in enumerate(xexp):
            name = c.names[c.zero_idx[slot]]
            factors.extend([name] * e)
        factors.extend(c.names[j] for j in mono)
        mag = abs(coef)
        sign = "-" if coef < 0 else "+"
        if mag != 1 or not factors:
            factors.insert(0, str(mag))
        parts.append((sign, "*".join(factors)))
    s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, body in parts[1:]:
        s += f" {sign} {body}"
    return s


def format_dg_spec(dg: ChartedDgManifold) -> str:
    c = dg.coords
    lines = ["[label]", dg.label, "", "[coords]"]
    lines += [f"{n} {d}" for n, d in zip(c.names, c.degrees)]
    if c.zero_idx:
        lines += ["", "[box]"]
        for slot, i in enumerate(c.zero_idx):
            lines.append(f"{c.names[i]} {dg.box.lo[slot]!r} {dg.box.hi[slot]!r}")
    lines += ["", "[Q]"]
    lines += [f"{n} = {format_polynomial(f)}" for n, f in zip(c.names, dg.fq)]
    if dg.omega is not None:
        lines += ["", "[omega]"]
        for (i, j), val in sorted(dg.omega.components.items()):
            if i <= j:
                lines.append(f"{c.names[i]} {c.names[j]} {format_polynomial(val)}")
    return "\n".join(lines) + "\n"
