"""Whitney forms, the Dupont gauge, Moore's horn filler and horn filling of
Maurer-Cartan forms."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

from .graded import ChartedDgManifold, GradedCoordSystem
from .linop import LinearOp
from .mc import MCSolution, kuranishi, kuranishi_inverse
from .polyform import (
    PolyForm,
    SimplexFrame,
    d,
    frame,
    integrate,
    scalar_form,
)


class HornError(ValueError):
    pass


def subsimplices(n: int, size: int | None = None) -> list[tuple[int, ...]]:
    """Nonempty sorted vertex subsets of {0..n}, ordered by size then lexicographically."""
    sizes = range(1, n + 2) if size is None else [size]
    return [I for k in sizes for I in itertools.combinations(range(n + 1), k)]


# ------------------------------------------------------------ Whitney forms


@lru_cache(maxsize=None)
def _barycentric(fr: SimplexFrame):
    """Exact coefficient vectors of t_i and dt_i."""
    t, dt = [], []
    for i in range(fr.n + 1):
        v = np.zeros(fr.N, dtype=object)
        v[...] = 0
        w = v.copy()
        if i == 0:
            v[fr.idx((), (0,) * fr.n)] = Fraction(1)
            for j in range(fr.n):
                e = tuple(1 if q == j else 0 for q in range(fr.n))
                v[fr.idx((), e)] = Fraction(-1)
                w[fr.idx((j,), (0,) * fr.n)] = Fraction(-1)
        else:
            e = tuple(1 if q == i - 1 else 0 for q in range(fr.n))
            v[fr.idx((), e)] = Fraction(1)
            w[fr.idx((i - 1,), (0,) * fr.n)] = Fraction(1)
        t.append(v)
        dt.append(w)
    return t, dt


@lru_cache(maxsize=None)
def whitney_vector(fr: SimplexFrame, I: tuple[int, ...]) -> np.ndarray:
    """Exact coefficients of the elementary Whitney form for the vertex list I."""
    if not I or len(set(I)) != len(I) or any(not 0 <= i <= fr.n for i in I):
        raise ValueError(f"invalid vertex list {I}")
    if fr.D < 1 and len(I) > 0 and fr.n > 0:
        raise ValueError("Whitney forms need degree cap D >= 1")
    t, dt = _barycentric(fr)
    k = len(I) - 1
    out = np.zeros(fr.N, dtype=object)
    out[...] = 0
    for j in range(k + 1):
        term = t[I[j]]
        for q in range(k + 1):
            if q != j:
                term, _ = fr.multiply(term, dt[I[q]])
        out = out + term * ((-1) ** j * math.factorial(k))
    return out


def elementary_form(indices: Sequence[int], fr: SimplexFrame) -> PolyForm:
    return scalar_form(fr, whitney_vector(fr, tuple(indices)).copy())


# ------------------------------------------------------------ cochains


class WhitneyCochain:
    """Coefficients of elementary Whitney forms, per subsimplex and W-coordinate.

    ``degree`` is the total degree: entry (I, i) is present when
    |I| - 1 - deg(xi^i) equals it.  Values are stored in a flat vector in the
    order given by :meth:`slots`.
    """

    __slots__ = ("n", "coords", "degree", "values")

    def __init__(self, n: int, coords: GradedCoordSystem, values=None, degree: int = 0):
        self.n = n
        self.coords = coords
        self.degree = degree
        slots = cochain_slots(n, coords, degree)
        if values is None:
            values = np.zeros(len(slots))
        values = np.asarray(values)
        if values.shape != (len(slots),):
            raise ValueError(f"expected {len(slots)} cochain values, got {values.shape}")
        self.values = values

    def slots(self) -> list[tuple[tuple[int, ...], int]]:
        return cochain_slots(self.n, self.coords, self.degree)

    def slot_index(self) -> dict:
        return _slot_index(self.n, self.coords, self.degree)

    def __getitem__(self, key):
        return self.values[self.slot_index()[key]]

    def as_dict(self) -> dict:
        return {s: v for s, v in zip(self.slots(), self.values)}

    @classmethod
    def from_dict(cls, n, coords, entries: dict, degree: int = 0, exact: bool = False) -> "WhitneyCochain":
        c = cls.zero(n, coords, degree, exact)
        idx = c.slot_index()
        for key, v in entries.items():
            if key not in idx:
                raise KeyError(f"no cochain slot {key}")
            c.values[idx[key]] = v
        return c

    @classmethod
    def zero(cls, n, coords, degree: int = 0, exact: bool = False) -> "WhitneyCochain":
        size = len(cochain_slots(n, coords, degree))
        if exact:
            v = np.zeros(size, dtype=object)
            v[...] = 0
        else:
            v = np.zeros(size)
        return cls(n, coords, v, degree)

    def _like(self, values) -> "WhitneyCochain":
        return WhitneyCochain(self.n, self.coords, values, self.degree)

    def __add__(self, other):
        return self._like(self.values + other.values)

    def __sub__(self, other):
        return self._like(self.values - other.values)

    def __neg__(self):
        return self._like(-self.values)

    def __mul__(self, c):
        return self._like(self.values * c)

    __rmul__ = __mul__

    def copy(self):
        return self._like(self.values.copy())

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values.astype(float)), initial=0.0))

    def to_form(self, fr: SimplexFrame | None = None) -> PolyForm:
        """Realization sum_I c(I, i) w_I (x) e_i."""
        if fr is None:
            fr = frame(self.n, 8)
        if fr.n != self.n:
            raise ValueError("frame dimension differs from cochain dimension")
        exact = self.values.dtype == object
        out = PolyForm.zero(fr, self.coords, exact)
        for (I, i), v in zip(self.slots(), self.values):
            if v != 0:
                w = whitney_vector(fr, I)
                out.coef[i] = out.coef[i] + (w * v if exact else w.astype(float) * float(v))
        return out

    def pullback(self, images: Sequence[int]) -> "WhitneyCochain":
        """Pullback along the vertex map Delta^m -> Delta^n, j -> images[j]."""
        m = len(images) - 1
        out = WhitneyCochain.zero(m, self.coords, self.degree, self.values.dtype == object)
        src = self.slot_index()
        for q, (I, i) in enumerate(out.slots()):
            img = [images[a] for a in I]
            if len(set(img)) != len(img):
                continue
            order = sorted(range(len(img)), key=lambda a: img[a])
            inv = sum(1 for a in range(len(order)) for b in range(a + 1, len(order)) if order[a] > order[b])
            out.values[q] = (-1) ** inv * self.values[src[(tuple(sorted(img)), i)]]
        return out

    def face(self, i: int) -> "WhitneyCochain":
        return self.pullback([v for v in range(self.n + 1) if v != i])

    def degeneracy(self, i: int) -> "WhitneyCochain":
        return self.pullback([j if j <= i else j - 1 for j in range(self.n + 2)])

    def coboundary(self) -> "WhitneyCochain":
        """The cochain of d(realization): d w_I = sum_v w_{v I}."""
        out = WhitneyCochain.zero(self.n, self.coords, self.degree + 1, self.values.dtype == object)
        idx = out.slot_index()
        for (I, i), v in zip(self.slots(), self.values):
            if v == 0:
                continue
            for u in range(self.n + 1):
                if u in I:
                    continue
                pos = sum(1 for a in I if a < u)
                J = tuple(sorted(I + (u,)))
                out.values[idx[(J, i)]] += (-1) ** pos * v
        return out

    def __repr__(self):
        return f"WhitneyCochain(n={self.n}, degree={self.degree}, values={self.values!r})"


@lru_cache(maxsize=None)
def cochain_slots(n: int, coords: GradedCoordSystem, degree: int = 0) -> list[tuple[tuple[int, ...], int]]:
    out = []
    for I in subsimplices(n):
        for i, di in enumerate(coords.degrees):
            if len(I) - 1 - di == degree:
                out.append((I, i))
    return out


@lru_cache(maxsize=None)
def _slot_index(n, coords, degree):
    return {s: q for q, s in enumerate(cochain_slots(n, coords, degree))}


def whitney_project(form: PolyForm, degree: int | None = None) -> WhitneyCochain:
    """Cochain of integrals over subsimplices (the Whitney projection)."""
    if degree is None:
        degree = form.total_degree or 0
    fr = form.frame
    coords = form.coords
    if coords is None:
        raise ValueError("whitney_project expects a W-valued form")
    out = WhitneyCochain.zero(fr.n, coords, degree, form.exact)
    cache = {}
    for q, (I, i) in enumerate(out.slots()):
        if I not in cache:
            cache[I] = integrate(form, I)
        out.values[q] = cache[I][i]
    return out


# ------------------------------------------------------------ gauge operators


@lru_cache(maxsize=None)
def projection_op(fr: SimplexFrame) -> LinearOp:
    """p = sum_I w_I (x) integral over I."""
    rows, cols, vals = [], [], []
    for I in subsimplices(fr.n):
        w = whitney_vector(fr, I)
        wnz = [(q, w[q]) for q in range(fr.N) if w[q] != 0]
        for c, a in fr.integration_row(I).items():
            for q, b in wnz:
                rows.append(q)
                cols.append(c)
                vals.append(a * b)
    return LinearOp.from_entries((fr.N, fr.N), rows, cols, vals)


@lru_cache(maxsize=None)
def whitney_mult_op(fr: SimplexFrame, I: tuple[int, ...]) -> LinearOp:
    return fr.multiplication_op(whitney_vector(fr, I))


@lru_cache(maxsize=None)
def dupont_op(fr: SimplexFrame) -> LinearOp:
    """s_n = sum_{k<n} (-1)^k sum_{i0<..<ik} w_{i0..ik} h_{ik} ... h_{i0}.

    The sign (-1)^k matches our radial homotopies, which satisfy
    d h_v + h_v d = 1 - (evaluation at v).
    """
    total = LinearOp.zero((fr.N, fr.N))
    chains: dict[tuple[int, ...], LinearOp] = {}
    for k in range(fr.n):
        for I in itertools.combinations(range(fr.n + 1), k + 1):
            prev = chains.get(I[:-1])
            chain = fr.h_op(I[-1]) if prev is None else fr.h_op(I[-1]) @ prev
            chains[I] = chain
            term = whitney_mult_op(fr, I) @ chain
            total = total - term if k % 2 else total + term
    return total


class GaugeSystem:
    """The Dupont gauge on one simplex: s, p and the derived operators."""

    def __init__(self, fr: SimplexFrame):
        self.frame = fr

    @cached_property
    def s(self) -> LinearOp:
        return dupont_op(self.frame)

    @cached_property
    def p(self) -> LinearOp:
        return projection_op(self.frame)

    @cached_property
    def h0p(self) -> LinearOp:
        return self.frame.h0_op @ self.p

    @cached_property
    def h_tot(self) -> LinearOp:
        return self.h0p + self.s

    def pi(self, form: PolyForm) -> PolyForm:
        return form - d(form).apply(self.h_tot)


@lru_cache(maxsize=None)
def gauge(fr: SimplexFrame) -> GaugeSystem:
    return GaugeSystem(fr)


def dupont_gauge(form: PolyForm) -> PolyForm:
    return form.apply(gauge(form.frame).s)


def whitney_projection_form(form: PolyForm) -> PolyForm:
    return form.apply(gauge(form.frame).p)


def gauge_project_pi(form: PolyForm) -> PolyForm:
    """pi(a) = a - (h0 p + s)(d a)."""
    return gauge(form.frame).pi(form)


# ------------------------------------------------------------ Moore filler


@dataclass(frozen=True)
class SimplicialOps:
    """Face, degeneracy and vertex-map pullbacks of a simplicial vector space."""

    face: Callable
    degeneracy: Callable
    pullback: Callable  # (x, images) -> pullback of x along the vertex map


FORM_OPS = SimplicialOps(
    face=lambda x, i: x.apply(x.frame.face_op(i), frame(x.frame.n - 1, x.frame.D)),
    degeneracy=lambda x, i: x.apply(x.frame.degeneracy_op(i), frame(x.frame.n + 1, x.frame.D)),
    pullback=lambda x, images: x.apply(
        x.frame.simplex_map_op(frame(len(images) - 1, x.frame.D), tuple(images)), frame(len(images) - 1, x.frame.D)
    ),
)

COCHAIN_OPS = SimplicialOps(
    face=lambda x, i: x.face(i),
    degeneracy=lambda x, i: x.degeneracy(i),
    pullback=lambda x, images: x.pullback(images),
)


def _ops_for(x) -> SimplicialOps:
    return COCHAIN_OPS if isinstance(x, WhitneyCochain) else FORM_OPS


def _moore_last(ys: Sequence, ops: SimplicialOps):
    """Moore's filler for the horn missing the last face: ys = y_0..y_{n-1}."""
    n = len(ys)
    w = ops.degeneracy(ys[0], 0)
    for i in range(1, n):
        w = w - ops.degeneracy(ops.face(w, i), i) + ops.degeneracy(ys[i], i)
    return w


def _relabel(n: int, k: int) -> list[int]:
    """Vertex permutation pi of {0..n} with pi(n) = k (a transposition)."""
    perm = list(range(n + 1))
    perm[n], perm[k] = k, n
    return perm


def check_horn(faces: Sequence, k: int, atol: float = 0.0) -> float:
    """Maximal mismatch of d_i y_j = d_(j-1) y_i over horn faces i < j."""
    n = len(faces) - 1
    ops = _ops_for(next(f for f in faces if f is not None))
    worst = 0.0
    for j in range(n + 1):
        for i in range(j):
            if k in (i, j):
                continue
            a = ops.face(faces[j], i)
            b = ops.face(faces[i], j - 1)
            diff = a - b
            err = diff.max_abs() if isinstance(diff, WhitneyCochain) else diff.max_coef()
            worst = max(worst, err)
    if worst > atol:
        raise HornError(f"incompatible horn: face mismatch {worst:.3g}")
    return worst


def moore_fill(faces: Sequence, k: int, check: bool = True, atol: float = 0.0):
    """Fill a horn in a simplicial vector space (closed forms or cochains).

    ``faces`` has n+1 entries indexed by face number, with faces[k] None.
    """
    n = len(faces) - 1
    if n < 1 or not 0 <= k <= n or faces[k] is not None:
        raise HornError("faces must have n+1 entries with the k-th one missing")
    ops = _ops_for(next(f for f in faces if f is not None))
    if check:
        check_horn(faces, k, atol)
    if k == n:
        return _moore_last(list(faces[:n]), ops)
    perm = _relabel(n, k)
    ys = []
    for j in range(n):
        pj = perm[j]
        rest = [v for v in range(n + 1) if v != pj]
        q_images = [rest.index(perm[v]) for v in range(n + 1) if v != j]
        ys.append(ops.pullback(faces[pj], q_images))
    w_rel = _moore_last(ys, ops)
    inverse = [perm.index(v) for v in range(n + 1)]
    return ops.pullback(w_rel, inverse)


# ------------------------------------------------------------ horn filling in K^big


@dataclass
class HornData:
    n: int
    k: int
    faces: list

    def __post_init__(self):
        if len(self.faces) != self.n + 1 or self.faces[self.k] is not None:
            raise HornError("horn needs n+1 face slots with the k-th one empty")


@dataclass
class BigFill:
    solution: MCSolution
    closed_extension: PolyForm
    restriction_error: float


def horn_fill_big(dg: ChartedDgManifold, horn: HornData, tol: float = 1e-10, max_iter: int = 200,
                  compat_atol: float = 1e-12, closed_tol: float = 1e-8) -> BigFill:
    """Kuranishi map on each face, Moore-fill the closed forms, invert Kuranishi.

    Faces that are Maurer-Cartan only to a tolerance give extensions that are
    closed to a comparable tolerance; ``closed_tol`` bounds that defect.
    """
    n, k = horn.n, horn.k
    faces = [f.form if isinstance(f, MCSolution) else f for f in horn.faces]
    check_horn(faces, k, compat_atol)
    closed = []
    for j, A in enumerate(faces):
        if A is None:
            closed.append(None)
            continue
        kv = k if k < j else k - 1
        closed.append(kuranishi(dg, A, kv))
    B = moore_fill(closed, k, check=False)
    sol = kuranishi_inverse(dg, B, tol=tol, max_iter=max_iter, vertex=k, closed_tol=closed_tol)
    err = 0.0
    for j, A in enumerate(faces):
        if A is None:
            continue
        err = max(err, (FORM_OPS.face(sol.form, j) - A).max_coef())
    return BigFill(sol, B, err)
