"""W-valued polynomial differential forms on the standard simplex.

The simplex Delta^n sits in R^n with vertex 0 at the origin and vertex i at the
i-th unit vector, so the barycentric coordinates are t_0 = 1 - sum(x) and
t_i = x_i.  A form is stored as a coefficient array of shape (dim W, N) where
N = (number of multi-indices J) * (number of monomials of degree <= D).
Coefficients may be floats or exact Fractions (object arrays); every operator
works for both.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graded import GradedCoordSystem
from .linop import LinearOp

LATTICE_RESOLUTION = 8


def _det(m: list[list[Fraction]]) -> Fraction:
    k = len(m)
    if k == 0:
        return Fraction(1)
    total = Fraction(0)
    for perm in itertools.permutations(range(k)):
        inv = sum(1 for a in range(k) for b in range(a + 1, k) if perm[a] > perm[b])
        prod = Fraction(1)
        for r in range(k):
            prod *= m[r][perm[r]]
            if prod == 0:
                break
        total += -prod if inv % 2 else prod
    return total


def _monomials(n: int, D: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(D + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            e = [0] * n
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(p + q for p, q in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


class SimplexFrame:
    """Coefficient layout and cached operators for forms on Delta^n, x-degree <= D."""

    def __init__(self, n: int, D: int):
        if n < 0 or D < 0:
            raise ValueError("n and D must be non-negative")
        self.n = n
        self.D = D
        self.monos = _monomials(n, D)
        self.mono_index = {e: i for i, e in enumerate(self.monos)}
        self.M = len(self.monos)
        self.mono_deg = np.array([sum(e) for e in self.monos], dtype=np.int64)
        self.subsets = [J for k in range(n + 1) for J in itertools.combinations(range(n), k)]
        self.J_index = {J: i for i, J in enumerate(self.subsets)}
        self.nJ = len(self.subsets)
        self.N = self.nJ * self.M

    def __repr__(self):
        return f"SimplexFrame(n={self.n}, D={self.D})"

    def idx(self, J: tuple[int, ...], mono: tuple[int, ...]) -> int:
        return self.J_index[tuple(J)] * self.M + self.mono_index[tuple(mono)]

    def form_degree_mask(self, k: int) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        for J, j in self.J_index.items():
            if len(J) == k:
                mask[j * self.M : (j + 1) * self.M] = True
        return mask

    @cached_property
    def J_sizes(self) -> np.ndarray:
        return np.repeat(np.array([len(J) for J in self.subsets]), self.M)

    @cached_property
    def entry_degrees(self) -> np.ndarray:
        return np.tile(self.mono_deg, self.nJ)

    # ---------------------------------------------------------- primitives
    @cached_property
    def d_op(self) -> LinearOp:
        rows, cols, vals = [], [], []
        for J, jj in self.J_index.items():
            for m, e in enumerate(self.monos):
                for j in range(self.n):
                    if j in J or e[j] == 0:
                        continue
                    pos = sum(1 for q in J if q < j)
                    newJ = tuple(sorted(J + (j,)))
                    ne = e[:j] + (e[j] - 1,) + e[j + 1 :]
                    rows.append(self.idx(newJ, ne))
                    cols.append(jj * self.M + m)
                    vals.append(Fraction((-1) ** pos * e[j]))
        return LinearOp.from_entries((self.N, self.N), rows, cols, vals)

    @cached_property
    def h0_op(self) -> LinearOp:
        rows, cols, vals = [], [], []
        orow, ocol = [], []
        for J, jj in self.J_index.items():
            k = len(J)
            if k == 0:
                continue
            for m, e in enumerate(self.monos):
                deg = sum(e)
                col = jj * self.M + m
                if deg + 1 > self.D:
                    orow.append(len(orow))
                    ocol.append(col)
                    continue
                for r, j in enumerate(J):
                    newJ = J[:r] + J[r + 1 :]
                    ne = e[:j] + (e[j] + 1,) + e[j + 1 :]
                    rows.append(self.idx(newJ, ne))
                    cols.append(col)
                    vals.append(Fraction((-1) ** r, deg + k))
        return LinearOp.from_entries((self.N, self.N), rows, cols, vals, (orow, ocol))

    def pullback_op(self, source: "SimplexFrame", lin, offset) -> LinearOp:
        """Pullback along y -> lin @ y + offset, from forms on self to forms on source.

        ``lin`` is an (self.n x source.n) matrix of rationals.
        """
        n, m = self.n, source.n
        if source.D != self.D:
            raise ValueError("degree caps differ")
        lin = [[Fraction(lin[i][j]) for j in range(m)] for i in range(n)]
        offset = [Fraction(b) for b in offset]
        # powers of the affine coordinate functions, as dicts over source monomials
        zero = (0,) * m
        linear = []
        for i in range(n):
            p = {zero: offset[i]} if offset[i] else {}
            for j in range(m):
                if lin[i][j]:
                    e = tuple(1 if q == j else 0 for q in range(m))
                    p[e] = p.get(e, 0) + lin[i][j]
            linear.append(p)
        powers = [[{zero: Fraction(1)}] for _ in range(n)]
        for i in range(n):
            for _ in range(self.D):
                powers[i].append(_poly_mul(powers[i][-1], linear[i]))
        subst = []
        for e in self.monos:
            p = {zero: Fraction(1)}
            for i, ei in enumerate(e):
                if ei:
                    p = _poly_mul(p, powers[i][ei])
            subst.append(p)
        rows, cols, vals = [], [], []
        for J, jj in self.J_index.items():
            for L in source.subsets:
                if len(L) != len(J):
                    continue
                minor = _det([[lin[a][b] for b in L] for a in J])
                if minor == 0:
                    continue
                lj = source.J_index[L]
                for mi, p in enumerate(subst):
                    for e, c in p.items():
                        rows.append(lj * source.M + source.mono_index[e])
                        cols.append(jj * self.M + mi)
                        vals.append(minor * c)
        return LinearOp.from_entries((source.N, self.N), rows, cols, vals)

    def vertex_point(self, v: int) -> list[Fraction]:
        return [Fraction(1 if i + 1 == v else 0) for i in range(self.n)]

    def simplex_map_op(self, source: "SimplexFrame", images: Sequence[int]) -> LinearOp:
        """Pullback along the affine map Delta^m -> Delta^n sending vertex j to images[j]."""
        return _simplex_map_op(self, source, tuple(images))

    def face_op(self, i: int) -> LinearOp:
        """Pullback to the i-th face (the face opposite vertex i)."""
        return self.simplex_map_op(frame(self.n - 1, self.D), [v for v in range(self.n + 1) if v != i])

    def degeneracy_op(self, i: int) -> LinearOp:
        """Pullback along the codegeneracy Delta^(n+1) -> Delta^n collapsing i, i+1."""
        up = frame(self.n + 1, self.D)
        return self.simplex_map_op(up, [j if j <= i else j - 1 for j in range(self.n + 2)])

    def permutation_op(self, perm: Sequence[int]) -> LinearOp:
        """Pullback along the affine automorphism sending vertex j to perm[j]."""
        return self.simplex_map_op(self, perm)

    def h_op(self, v: int) -> LinearOp:
        """Radial homotopy operator contracting onto vertex v."""
        return _h_op(self, v)

    def multiplication_op(self, form: np.ndarray) -> LinearOp:
        """Left multiplication by a fixed scalar form (exact coefficients)."""
        rows, cols, vals = [], [], []
        orow, ocol = [], []
        nz = [(q, form[q]) for q in range(self.N) if form[q] != 0]
        for q, c in nz:
            J1 = self.subsets[q // self.M]
            a = self.monos[q % self.M]
            for J2, j2 in self.J_index.items():
                if set(J1) & set(J2):
                    continue
                sign, Jout = _merge_sign(J1, J2)
                jo = self.J_index[Jout]
                for mb, b in enumerate(self.monos):
                    col = j2 * self.M + mb
                    e = tuple(p + r for p, r in zip(a, b))
                    if sum(e) > self.D:
                        orow.append(len(orow))
                        ocol.append(col)
                        continue
                    rows.append(jo * self.M + self.mono_index[e])
                    cols.append(col)
                    vals.append(sign * Fraction(c))
        return LinearOp.from_entries((self.N, self.N), rows, cols, vals, (orow, ocol))

    # ---------------------------------------------------------- products
    @cached_property
    def _mono_product(self):
        a_idx, b_idx, o_idx = [], [], []
        for ia, ea in enumerate(self.monos):
            for ib, eb in enumerate(self.monos):
                e = tuple(p + q for p, q in zip(ea, eb))
                if sum(e) <= self.D:
                    a_idx.append(ia)
                    b_idx.append(ib)
                    o_idx.append(self.mono_index[e])
        table = {(a, b): o for a, b, o in zip(a_idx, b_idx, o_idx)}
        return np.array(a_idx), np.array(b_idx), np.array(o_idx), table

    @cached_property
    def _J_pairs(self):
        out = []
        for J1, j1 in self.J_index.items():
            for J2, j2 in self.J_index.items():
                if set(J1) & set(J2):
                    continue
                sign, Jout = _merge_sign(J1, J2)
                out.append((j1, j2, self.J_index[Jout], sign))
        return out

    def multiply(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, bool]:
        """Wedge product of two scalar forms given as length-N coefficient vectors."""
        M = self.M
        U = u.reshape(self.nJ, M)
        V = v.reshape(self.nJ, M)
        exact = u.dtype == object or v.dtype == object
        if exact:
            out = np.zeros((self.nJ, M), dtype=object)
            out[...] = 0
        else:
            out = np.zeros((self.nJ, M))
        unz = U != 0
        vnz = V != 0
        urow = np.any(unz, axis=1)
        vrow = np.any(vnz, axis=1)
        udeg = np.where(unz, self.mono_deg[None, :], -1).max(axis=1)
        vdeg = np.where(vnz, self.mono_deg[None, :], -1).max(axis=1)
        a_idx, b_idx, o_idx, table = self._mono_product
        trunc = False
        for j1, j2, jo, sign in self._J_pairs:
            if not (urow[j1] and vrow[j2]):
                continue
            if udeg[j1] + vdeg[j2] > self.D:
                trunc = True
            if exact:
                ua = np.nonzero(unz[j1])[0]
                vb = np.nonzero(vnz[j2])[0]
                row = out[jo]
                for a in ua:
                    ca = U[j1, a] * sign
                    for b in vb:
                        o = table.get((a, b))
                        if o is not None:
                            row[o] += ca * V[j2, b]
            else:
                vals = U[j1, a_idx] * V[j2, b_idx]
                out[jo] += sign * np.bincount(o_idx, weights=vals, minlength=M)
        return out.reshape(self.N), trunc

    def right_multiplication_matrix(self, form: np.ndarray) -> sp.csr_matrix:
        """Float matrix of u -> u ^ form for a fixed scalar form (truncated at D)."""
        G = np.asarray(form, dtype=float).reshape(self.nJ, self.M)
        a_idx, b_idx, o_idx, _ = self._mono_product
        rows, cols, vals = [], [], []
        for j1, j2, jo, sign in self._J_pairs:
            g = G[j2, b_idx]
            keep = g != 0
            if not np.any(keep):
                continue
            rows.append(jo * self.M + o_idx[keep])
            cols.append(j1 * self.M + a_idx[keep])
            vals.append(sign * g[keep])
        if not rows:
            return sp.csr_matrix((self.N, self.N))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.N, self.N))

    # ---------------------------------------------------------- functionals
    @cached_property
    def lattice_points(self) -> np.ndarray:
        r = LATTICE_RESOLUTION
        pts = [c for c in itertools.product(range(r + 1), repeat=self.n) if sum(c) <= r]
        return np.array(pts, dtype=float).reshape(len(pts), self.n) / r

    @cached_property
    def lattice_eval(self) -> np.ndarray:
        """Matrix (points x monomials) of monomial values on the lattice."""
        pts = self.lattice_points
        E = np.ones((len(pts), self.M))
        for m, e in enumerate(self.monos):
            for i, ei in enumerate(e):
                if ei:
                    E[:, m] *= pts[:, i] ** ei
        return E

    def integration_row(self, vertices: Sequence[int]) -> dict[int, Fraction]:
        """Exact linear functional: integral over the oriented subsimplex."""
        return _integration_row(self, tuple(vertices))

    def vertex_eval_row(self, v: int) -> dict[int, Fraction]:
        """Functional evaluating the 0-form part at vertex v."""
        out = {}
        for m, e in enumerate(self.monos):
            if v == 0:
                if sum(e) == 0:
                    out[m] = Fraction(1)
            elif sum(e) == e[v - 1]:
                out[m] = Fraction(1)
        return out


def _merge_sign(J1, J2):
    seq = list(J1) + list(J2)
    inv = sum(1 for a in range(len(seq)) for b in range(a + 1, len(seq)) if seq[a] > seq[b])
    return (-1) ** inv, tuple(sorted(seq))


@lru_cache(maxsize=None)
def frame(n: int, D: int) -> SimplexFrame:
    return SimplexFrame(n, D)


@lru_cache(maxsize=None)
def _simplex_map_op(target: SimplexFrame, source: SimplexFrame, images: tuple[int, ...]) -> LinearOp:
    if len(images) != source.n + 1:
        raise ValueError("need one image per source vertex")
    if any(not 0 <= v <= target.n for v in images):
        raise ValueError("vertex image out of range")
    pts = [target.vertex_point(v) for v in images]
    lin = [[pts[j + 1][i] - pts[0][i] for j in range(source.n)] for i in range(target.n)]
    return target.pullback_op(source, lin, pts[0])


@lru_cache(maxsize=None)
def _h_op(fr: SimplexFrame, v: int) -> LinearOp:
    if not 0 <= v <= fr.n:
        raise ValueError("vertex out of range")
    if v == 0:
        return fr.h0_op
    ident = [[1 if i == j else 0 for j in range(fr.n)] for i in range(fr.n)]
    p = fr.vertex_point(v)
    to_origin = fr.pullback_op(fr, ident, p)  # phi(y) = y + p
    back = fr.pullback_op(fr, ident, [-c for c in p])
    return back @ fr.h0_op @ to_origin


def _dirichlet(e: Sequence[int]) -> Fraction:
    num = 1
    for a in e:
        num *= math.factorial(a)
    return Fraction(num, math.factorial(sum(e) + len(e)))


@lru_cache(maxsize=None)
def _integration_row(fr: SimplexFrame, vertices: tuple[int, ...]) -> dict[int, Fraction]:
    k = len(vertices) - 1
    if k < 0 or len(set(vertices)) != len(vertices) or any(not 0 <= v <= fr.n for v in vertices):
        raise ValueError(f"invalid subsimplex {vertices}")
    sub = frame(k, fr.D)
    pull = fr.simplex_map_op(sub, vertices).exact
    top = sub.J_index[tuple(range(k))]
    weights = {top * sub.M + m: _dirichlet(e) for m, e in enumerate(sub.monos)}
    out: dict[int, Fraction] = {}
    for c, (rows, vals) in pull.cols.items():
        s = Fraction(0)
        for r, v in zip(rows, vals):
            w = weights.get(int(r))
            if w is not None:
                s += v * w
        if s:
            out[c] = s
    return out


# ================================================================== PolyForm


class FrameMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FormNorm:
    value: float
    scheme: str = "lattice-sup"

    def __float__(self):
        return float(self.value)


class PolyForm:
    """A W-valued polynomial form; ``coords`` is None for scalar forms."""

    __slots__ = ("frame", "coords", "coef", "truncated")

    def __init__(self, fr: SimplexFrame, coords: GradedCoordSystem | None, coef: np.ndarray, truncated: bool = False):
        dim = 1 if coords is None else coords.dim
        coef = np.asarray(coef)
        if coef.shape != (dim, fr.N):
            raise ValueError(f"coefficient shape {coef.shape} != {(dim, fr.N)}")
        self.frame = fr
        self.coords = coords
        self.coef = coef
        self.truncated = bool(truncated)

    # construction
    @classmethod
    def zero(cls, fr: SimplexFrame, coords: GradedCoordSystem | None, exact: bool = False) -> "PolyForm":
        dim = 1 if coords is None else coords.dim
        if exact:
            c = np.zeros((dim, fr.N), dtype=object)
            c[...] = 0
        else:
            c = np.zeros((dim, fr.N))
        return cls(fr, coords, c)

    @classmethod
    def from_terms(cls, fr, coords, terms, exact: bool = False) -> "PolyForm":
        """terms: iterable of (coordinate index, J, exponents, coefficient).

        J lists 1-based differential indices (dx1 = 1), as in the text table.
        """
        out = cls.zero(fr, coords, exact)
        for i, J, e, c in terms:
            J0 = tuple(sorted(j - 1 for j in J))
            if len(set(J0)) != len(J0):
                continue
            sign = _merge_sign((), tuple(j - 1 for j in J))[0]
            out.coef[i, fr.idx(J0, tuple(e))] += sign * (Fraction(c) if exact else float(c))
        return out

    @property
    def dim(self) -> int:
        return self.coef.shape[0]

    @property
    def exact(self) -> bool:
        return self.coef.dtype == object

    def degrees(self) -> tuple[int, ...]:
        return (0,) if self.coords is None else self.coords.degrees

    def _like(self, coef, truncated=False) -> "PolyForm":
        return PolyForm(self.frame, self.coords, coef, self.truncated or truncated)

    def copy(self) -> "PolyForm":
        return self._like(self.coef.copy())

    def to_float(self) -> "PolyForm":
        return self._like(self.coef.astype(float))

    def to_exact(self) -> "PolyForm":
        c = np.empty(self.coef.shape, dtype=object)
        c[...] = [[Fraction(v) for v in row] for row in self.coef]
        return self._like(c)

    def _check(self, other: "PolyForm"):
        if other.frame is not self.frame:
            raise FrameMismatch(f"{self.frame} vs {other.frame}")
        if other.coords != self.coords:
            raise FrameMismatch("coordinate systems differ")

    def __add__(self, other: "PolyForm") -> "PolyForm":
        self._check(other)
        return PolyForm(self.frame, self.coords, self.coef + other.coef, self.truncated or other.truncated)

    def __sub__(self, other: "PolyForm") -> "PolyForm":
        self._check(other)
        return PolyForm(self.frame, self.coords, self.coef - other.coef, self.truncated or other.truncated)

    def __neg__(self) -> "PolyForm":
        return self._like(-self.coef)

    def __mul__(self, c) -> "PolyForm":
        return self._like(self.coef * c)

    __rmul__ = __mul__

    # views
    def component(self, i: int, J: Sequence[int]) -> np.ndarray:
        """Polynomial coefficient of dx^J (0-based sorted J) in coordinate i."""
        j = self.frame.J_index[tuple(J)]
        return self.coef[i, j * self.frame.M : (j + 1) * self.frame.M]

    def form_degrees(self) -> set[tuple[int, int]]:
        """Set of (coordinate, form degree) pairs carrying nonzero coefficients."""
        out = set()
        sizes = self.frame.J_sizes
        for i in range(self.dim):
            nz = np.nonzero(self.coef[i] != 0)[0]
            out.update((i, int(s)) for s in set(sizes[nz].tolist()))
        return out

    @property
    def total_degree(self) -> int | None:
        degs = self.degrees()
        ds = {k - degs[i] for i, k in self.form_degrees()}
        if len(ds) == 1:
            return ds.pop()
        return 0 if not ds else None

    def is_zero(self, atol: float = 0.0) -> bool:
        if self.exact or atol == 0:
            return not np.any(self.coef != 0)
        return float(np.max(np.abs(self.coef), initial=0.0)) <= atol

    def equals(self, other: "PolyForm", atol: float = 0.0) -> bool:
        return (self - other).is_zero(atol)

    def max_coef(self) -> float:
        return float(np.max(np.abs(self.coef.astype(float)), initial=0.0))

    # operators
    def apply(self, op: LinearOp, fr: SimplexFrame | None = None) -> "PolyForm":
        out, trunc = op.apply(self.coef)
        return PolyForm(fr or self.frame, self.coords, out, self.truncated or trunc)

    def restrict_degree_mask(self, keep) -> "PolyForm":
        c = self.coef.copy()
        c[:, ~keep] = 0
        return self._like(c)

    def __repr__(self):
        names = None if self.coords is None else self.coords.names
        return f"PolyForm(n={self.frame.n}, D={self.frame.D}, coords={names}, nnz={int(np.count_nonzero(self.coef != 0))})"


def scalar_form(fr: SimplexFrame, vec: np.ndarray, truncated: bool = False) -> PolyForm:
    return PolyForm(fr, None, np.asarray(vec).reshape(1, fr.N), truncated)


def d(form: PolyForm) -> PolyForm:
    """Exterior derivative."""
    return form.apply(form.frame.d_op)


def homotopy_h(form: PolyForm, vertex: int = 0) -> PolyForm:
    """Radial de Rham homotopy operator towards the given vertex."""
    return form.apply(form.frame.h_op(vertex))


def evaluate_at_vertex(form: PolyForm, vertex: int) -> PolyForm:
    """The constant form with the 0-form part's value at the vertex."""
    fr = form.frame
    row = fr.vertex_eval_row(vertex)
    out = PolyForm.zero(fr, form.coords, form.exact)
    for m, w in row.items():
        out.coef[:, 0] = out.coef[:, 0] + form.coef[:, m] * (w if form.exact else float(w))
    return out


def pullback_affine(form: PolyForm, images: Sequence[int] | None = None, source_n: int | None = None,
                    lin=None, offset=None) -> PolyForm:
    """Pull back along an affine map of simplices.

    Either give vertex images (vertex j of the source goes to images[j]) or an
    explicit affine map ``y -> lin @ y + offset`` with ``source_n`` columns.
    """
    fr = form.frame
    if images is not None:
        src = frame(len(images) - 1, fr.D)
        op = fr.simplex_map_op(src, images)
    else:
        if lin is None or offset is None or source_n is None:
            raise ValueError("affine pullback needs images or (lin, offset, source_n)")
        if len(lin) != fr.n or any(len(r) != source_n for r in lin):
            raise ValueError("affine map has the wrong shape")
        src = frame(source_n, fr.D)
        op = fr.pullback_op(src, lin, offset)
    return form.apply(op, src)


def face(form: PolyForm, i: int) -> PolyForm:
    fr = form.frame
    return form.apply(fr.face_op(i), frame(fr.n - 1, fr.D))


def degeneracy(form: PolyForm, i: int) -> PolyForm:
    fr = form.frame
    return form.apply(fr.degeneracy_op(i), frame(fr.n + 1, fr.D))


def permute(form: PolyForm, perm: Sequence[int]) -> PolyForm:
    return form.apply(form.frame.permutation_op(tuple(perm)))


def _sign_w(degree_w: int, form_deg: int) -> int:
    return -1 if (degree_w * form_deg) % 2 else 1


def wedge(a: PolyForm, b: PolyForm) -> PolyForm:
    """Wedge product; at least one factor must be scalar.

    Moving the scalar form past the W-basis vector of degree -p gives the
    Koszul sign (-1)^(p * form degree).
    """
    if a.frame is not b.frame:
        raise FrameMismatch(f"{a.frame} vs {b.frame}")
    fr = a.frame
    if a.coords is not None and b.coords is not None:
        raise ValueError("wedge of two W-valued forms is not W-valued; wedge components instead")
    coords = a.coords if a.coords is not None else b.coords
    exact = a.exact or b.exact
    out = PolyForm.zero(fr, coords, exact)
    trunc = a.truncated or b.truncated
    if a.coords is None:
        for i in range(out.dim):
            prod, t = fr.multiply(a.coef[0], b.coef[i])
            out.coef[i] = prod
            trunc |= t
    else:
        degs = a.coords.degrees
        for i in range(out.dim):
            if degs[i] % 2:
                # split b by parity of its form degree
                odd = fr.J_sizes % 2 == 1
                bo = b.coef[0].copy()
                bo[~odd] = 0
                be = b.coef[0] - bo
                p1, t1 = fr.multiply(a.coef[i], be)
                p2, t2 = fr.multiply(a.coef[i], bo)
                out.coef[i] = p1 - p2
                trunc |= t1 or t2
            else:
                prod, t = fr.multiply(a.coef[i], b.coef[0])
                out.coef[i] = prod
                trunc |= t
    out.truncated = trunc
    return out


def integrate(form: PolyForm, vertices: Sequence[int] | None = None) -> np.ndarray:
    """Integral of each component over an oriented subsimplex (default: all of Delta^n)."""
    fr = form.frame
    if vertices is None:
        vertices = tuple(range(fr.n + 1))
    row = fr.integration_row(tuple(vertices))
    if form.exact:
        out = np.empty(form.dim, dtype=object)
        out[...] = 0
    else:
        out = np.zeros(form.dim)
    for c, w in row.items():
        out = out + form.coef[:, c] * (w if form.exact else float(w))
    return out


def norm(form: PolyForm) -> FormNorm:
    fr = form.frame
    coef = form.coef.astype(float).reshape(form.dim, fr.nJ, fr.M)
    vals = coef @ fr.lattice_eval.T
    return FormNorm(float(np.max(np.abs(vals), initial=0.0)))


def zero_form_values(form: PolyForm) -> np.ndarray:
    """Values of the 0-form part of each component on the lattice, shape (dim, points)."""
    fr = form.frame
    return form.coef[:, : fr.M].astype(float) @ fr.lattice_eval.T


# ------------------------------------------------------------ serialization


def _fmt_num(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


def to_table(form: PolyForm) -> str:
    """Flat text table with rows ``xi_name, J, exponents, coefficient``."""
    fr = form.frame
    names = ("1",) if form.coords is None else form.coords.names
    lines = [f"# polyform n={fr.n} D={fr.D} exact={int(form.exact)} truncated={int(form.truncated)}",
             "xi_name, J, exponents, coefficient"]
    for i in range(form.dim):
        for q in np.nonzero(form.coef[i] != 0)[0]:
            J = fr.subsets[q // fr.M]
            e = fr.monos[q % fr.M]
            Js = "{" + ";".join(str(j + 1) for j in J) + "}"
            es = "(" + ";".join(str(a) for a in e) + ")"
            lines.append(f"{names[i]}, {Js}, {es}, {_fmt_num(form.coef[i, q])}")
    return "\n".join(lines) + "\n"


def from_table(text: str, coords: GradedCoordSystem | None, D: int | None = None) -> PolyForm:
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "polyform" in line:
                header = dict(tok.split("=") for tok in line.split() if "=" in tok)
            continue
        if line.replace(" ", "").startswith("xi_name,"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields")
        rows.append((lineno, parts))
    if header is None:
        raise ValueError("missing '# polyform n=.. D=..' header")
    n = int(header["n"])
    D = int(header["D"]) if D is None else D
    exact = header.get("exact", "0") == "1"
    fr = frame(n, D)
    names = ("1",) if coords is None else coords.names
    terms = []
    for lineno, (nm, Js, es, cs) in rows:
        if nm not in names:
            raise ValueError(f"line {lineno}: unknown coordinate {nm!r}")
        J = tuple(int(t) for t in Js.strip("{}").split(";") if t)
        e = tuple(int(t) for t in es.strip("()").split(";") if t)
        if len(e) != n or sum(e) > D or any(not 1 <= j <= n for j in J):
            raise ValueError(f"line {lineno}: entry does not fit the frame")
        c = Fraction(cs) if exact else float(cs)
        terms.append((names.index(nm), J, e, c))
    out = PolyForm.from_terms(fr, coords, terms, exact)
    out.truncated = header.get("truncated", "0") == "1"
    return out
