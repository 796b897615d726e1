"""Graded symplectic forms on charts and the induced 2-forms on simplices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .graded import (
    ChartError,
    GradedCoordSystem,
    GradedPolynomial,
    apply_vector_field,
    linearize_fq,
    substitute,
)
from .groupoid import GroupoidElement, curvature_jacobian, tangent_matrix
from .mc import evaluate_polys, linearization_matrix, linearized_fq, solve_identity_minus
from .polyform import PolyForm, d, frame, scalar_form
from .simplicial import WhitneyCochain, cochain_slots, subsimplices, whitney_vector


class InvarianceError(ChartError):
    pass


def _extended(coords: GradedCoordSystem):
    """Coordinates xi, u, v with u, v copies of xi; returns (system, maps)."""
    names = list(coords.names) + [f"u_{n}" for n in coords.names] + [f"v_{n}" for n in coords.names]
    degs = list(coords.degrees) * 3
    ext = GradedCoordSystem(tuple(names), tuple(degs))
    n = coords.dim
    return ext, list(range(n)), [n + i for i in range(n)], [2 * n + i for i in range(n)]


@dataclass(frozen=True, eq=False)
class PreSymplecticData:
    """A graded 2-form sum_ij w_ij dxi^i dxi^j with coefficients in the degree-0 coordinates.

    ``components`` holds both (i, j) and (j, i), related by
    w_ji = -(-1)^(|i||j|) w_ij.
    """

    coords: GradedCoordSystem
    k: int
    components: dict

    @classmethod
    def from_entries(cls, coords: GradedCoordSystem, entries) -> "PreSymplecticData":
        comps: dict[tuple[int, int], GradedPolynomial] = {}
        degs = coords.degrees
        k = None
        for item in entries:
            i, j, val = item[0], item[1], item[2]
            if not isinstance(val, GradedPolynomial):
                val = GradedPolynomial.const(coords, Fraction(val))
            if any(m for (_, m) in val.terms):
                raise ChartError("2-form coefficients may only depend on degree-0 coordinates")
            kk = degs[i] + degs[j]
            if k is None:
                k = kk
            elif kk != k and not val.is_zero():
                raise ChartError(f"2-form is not homogeneous: degrees {k} and {kk}")
            sign = -1 if (degs[i] * degs[j]) % 2 == 0 else 1
            mirror = val * sign
            for key, v in (((i, j), val), ((j, i), mirror)):
                if key in comps and comps[key] != v:
                    if i == j:
                        raise ChartError(f"diagonal entry ({coords.names[i]}, {coords.names[i]}) violates graded antisymmetry")
                    raise ChartError(f"inconsistent entries for ({coords.names[key[0]]}, {coords.names[key[1]]})")
                comps[key] = v
        comps = {key: v for key, v in comps.items() if not v.is_zero()}
        return cls(coords, k if k is not None else 0, comps)

    def matrix_at(self, x) -> np.ndarray:
        n = self.coords.dim
        m = np.zeros((n, n))
        for (i, j), p in self.components.items():
            m[i, j] = p.evaluate_coefficients(x).get((), 0.0)
        return m

    def is_symplectic(self, x=None) -> bool:
        """Nondegeneracy of the constant block at x (default: origin of the box)."""
        if x is None:
            x = [0.0] * len(self.coords.zero_idx)
        m = self.matrix_at(x)
        return bool(np.linalg.matrix_rank(m, tol=1e-12) == self.coords.dim)

    def invariance_defect(self, dg) -> GradedPolynomial:
        """The polynomial L_Q(w) evaluated on two generic tangent vectors u, v.

        For tangent forms u, v of total degree 0 one has
        d(w_ij u^i v^j) = Q(w_ij) u^i v^j + w_ij (L(u)^i v^j + (-1)^|i| u^i L(v)^j)
        with L(u)^i = u^m dF^i/dxi^m; Q-invariance is the vanishing of this
        polynomial identically in xi, u and v.
        """
        c = self.coords
        ext, xs, us, vs = _extended(c)
        base_images = [GradedPolynomial.var(ext, xs[i]) for i in range(c.dim)]

        def emb(p):
            return substitute(p, base_images) if not p.is_zero() else GradedPolynomial.zero(ext)

        fq = [emb(f) for f in dg.fq] + [GradedPolynomial.zero(ext)] * (2 * c.dim)
        U = [GradedPolynomial.var(ext, us[i]) for i in range(c.dim)]
        V = [GradedPolynomial.var(ext, vs[i]) for i in range(c.dim)]
        dfq = [[emb(dg.dfq[i][m]) for m in range(c.dim)] for i in range(c.dim)]

        def L(w):
            out = []
            for i in range(c.dim):
                acc = GradedPolynomial.zero(ext)
                for m in range(c.dim):
                    if not dfq[i][m].is_zero():
                        acc = acc + w[m] * dfq[i][m]
                out.append(acc)
            return out

        LU, LV = L(U), L(V)
        total = GradedPolynomial.zero(ext)
        for (i, j), wij in self.components.items():
            w = emb(wij)
            qw = apply_vector_field(fq, w)
            sign = -1 if c.degrees[i] % 2 else 1
            total = total + qw * U[i] * V[j] + w * (LU[i] * V[j] + sign * (U[i] * LV[j]))
        return total

    def check_invariance(self, dg) -> None:
        defect = self.invariance_defect(dg)
        if not defect.is_zero():
            raise InvarianceError(f"2-form is not Q-invariant; defect has {len(defect.terms)} terms")


# ------------------------------------------------------------ pairings on simplices


def d_tot(dg, A: PolyForm, u: PolyForm) -> PolyForm:
    """Twisted differential d_tot u = du - (-1)^m L_A(u) for u of total degree m."""
    m = u.total_degree or 0
    lin = linearized_fq(dg, A, u)
    return d(u) - lin if m % 2 == 0 else d(u) + lin


def _coefficient_forms(dg, omega: PreSymplecticData, A: PolyForm) -> dict:
    keys = sorted(omega.components)
    polys = [omega.components[key] for key in keys]
    vals = evaluate_polys(dg, A, polys)
    return {key: vals.coef[q] for q, key in enumerate(keys)}


def omega_pair(dg, A: PolyForm, u: PolyForm, v: PolyForm, omega: PreSymplecticData | None = None) -> float:
    """Integral over the simplex of w_ij(A) u^i v^j."""
    omega = omega if omega is not None else dg.omega
    if omega is None:
        raise ValueError("chart carries no 2-form")
    fr = A.frame
    if omega.k != fr.n:
        raise ValueError(f"2-form of degree {omega.k} pairs tangents on {omega.k}-simplices, not {fr.n}-simplices")
    return float(omega_pair_matrix(dg, A, [u], [v], omega)[0, 0])


def omega_pair_matrix(dg, A: PolyForm, us, vs, omega: PreSymplecticData | None = None) -> np.ndarray:
    """Matrix of omega_pair over two lists of tangent forms."""
    omega = omega if omega is not None else dg.omega
    fr = A.frame
    coefs = _coefficient_forms(dg, omega, A)
    row = fr.integration_row(tuple(range(fr.n + 1)))
    cols = np.array(sorted(row))
    weights = np.array([float(row[c]) for c in cols])
    out = np.zeros((len(us), len(vs)))
    for (i, j), w in coefs.items():
        if not np.any(w):
            continue
        wu = [fr.multiply(w.astype(float), u.coef[i].astype(float))[0] for u in us]
        for b, v in enumerate(vs):
            rmat = fr.right_multiplication_matrix(v.coef[j])
            top = rmat[cols, :]
            for a, x in enumerate(wu):
                out[a, b] += float(weights @ (top @ x))
    return out


def mc_tangent_basis(dg, A: PolyForm, directions: Sequence[PolyForm], vertex: int = 0) -> list[PolyForm]:
    """Tangent vectors to Maurer-Cartan forms: solve u = b + h_v L_A(u) for closed b."""
    fr = A.frame
    T = linearization_matrix(dg, A, fr.h_op(vertex))
    rhs = np.stack([b.to_float().coef.reshape(-1) for b in directions], axis=1)
    sol = solve_identity_minus(T, rhs)
    return [PolyForm(fr, A.coords, sol[:, q].reshape(A.coef.shape)) for q in range(len(directions))]


def delta_omega_big(dg, A: PolyForm, us: Sequence[PolyForm]) -> np.ndarray:
    """Alternating face sum of pairings of tangent vectors on a (k+1)-simplex."""
    fr = A.frame
    n = fr.n
    total = np.zeros((len(us), len(us)))
    for p in range(n + 1):
        op = fr.face_op(p)
        sub = frame(n - 1, fr.D)
        Af = A.apply(op, sub)
        uf = [u.apply(op, sub) for u in us]
        total += (-1) ** p * omega_pair_matrix(dg, Af, uf, uf)
    return total


@dataclass
class KsTangent:
    """Tangent space of the gauge-fixed groupoid at an element, in cochain coordinates."""

    cochains: np.ndarray  # columns: tangent directions in cochain coordinates
    forms: list[PolyForm]
    constraint_rank: int


def ks_tangent(dg, g: GroupoidElement, rtol: float = 1e-10) -> KsTangent:
    """Kernel of the linearized curvature, and the corresponding tangent forms."""
    A = g.form
    fr = A.frame
    c = g.cochain
    free = list(range(len(c.slots())))
    eqs = list(range(len(cochain_slots(c.n, c.coords, 1))))
    J = curvature_jacobian(dg, A, free, eqs)
    if J.size:
        U, S, Vt = np.linalg.svd(J)
        rank = int(np.sum(S > rtol * max(1.0, S.max(initial=0.0))))
        basis = Vt[rank:].T
    else:
        rank, basis = 0, np.eye(len(free))
    rhs = np.zeros((dg.dim * fr.N, basis.shape[1]))
    for q in range(basis.shape[1]):
        e = WhitneyCochain(c.n, c.coords, basis[:, q].copy())
        rhs[:, q] = e.to_form(fr).coef.reshape(-1)
    sol = tangent_matrix(dg, A, rhs)
    forms = [PolyForm(fr, A.coords, sol[:, q].reshape(A.coef.shape)) for q in range(basis.shape[1])]
    return KsTangent(basis, forms, rank)


def omega_s_matrix(dg, g: GroupoidElement, tangent: KsTangent | None = None) -> np.ndarray:
    """Matrix of the restricted 2-form on a basis of the tangent space of K^s."""
    t = tangent if tangent is not None else ks_tangent(dg, g)
    return omega_pair_matrix(dg, g.form, t.forms, t.forms)


def delta_omega_s(dg, g: GroupoidElement) -> np.ndarray:
    """Alternating sum over faces of omega^s pulled back along the face maps.

    Tangent vectors are computed on the (k+1)-simplex; their face cochains are
    pushed through the linearized reconstruction on each face separately.
    """
    t = ks_tangent(dg, g)
    n = g.n
    total = np.zeros((t.cochains.shape[1],) * 2)
    for p in range(n + 1):
        gf = g.face(dg, p)
        fr = gf.form.frame
        faces = [WhitneyCochain(n, g.cochain.coords, t.cochains[:, q].copy()).face(p)
                 for q in range(t.cochains.shape[1])]
        rhs = np.stack([f.to_form(fr).coef.reshape(-1) for f in faces], axis=1)
        sol = tangent_matrix(dg, gf.form, rhs)
        forms = [PolyForm(fr, gf.form.coords, sol[:, q].reshape(gf.form.coef.shape)) for q in range(len(faces))]
        total += (-1) ** p * omega_pair_matrix(dg, gf.form, forms, forms)
    return total


# ------------------------------------------------------------ Grassmann complex


def _sorted_sign(seq: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    if len(set(seq)) != len(seq):
        return 0, ()
    inv = sum(1 for a in range(len(seq)) for b in range(a + 1, len(seq)) if seq[a] > seq[b])
    return (-1) ** inv, tuple(sorted(seq))


class GrassmannElement:
    """Element of the exterior algebra on eps_0..eps_n with rational coefficients."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = {S: Fraction(c) for S, c in (terms or {}).items() if c != 0}

    @classmethod
    def basis(cls, n: int, S: Sequence[int]) -> "GrassmannElement":
        sign, key = _sorted_sign(list(S))
        return cls(n, {key: sign} if sign else {})

    def __add__(self, other):
        out = dict(self.terms)
        for S, c in other.terms.items():
            out[S] = out.get(S, 0) + c
        return GrassmannElement(self.n, out)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.n, {S: c * other for S, c in self.terms.items()})
        out: dict = {}
        for S, a in self.terms.items():
            for T, b in other.terms.items():
                sign, key = _sorted_sign(list(S) + list(T))
                if sign:
                    out[key] = out.get(key, 0) + sign * a * b
        return GrassmannElement(self.n, out)

    def __eq__(self, other):
        return isinstance(other, GrassmannElement) and self.n == other.n and self.terms == other.terms

    def d(self) -> "GrassmannElement":
        """Left multiplication by eps_0 + ... + eps_n."""
        total = GrassmannElement(self.n)
        for i in range(self.n + 1):
            total = total + GrassmannElement.basis(self.n, [i]) * self
        return total

    def partial(self) -> "GrassmannElement":
        """Sum of the left derivatives d/d eps_i."""
        out: dict = {}
        for S, c in self.terms.items():
            for pos, i in enumerate(S):
                key = S[:pos] + S[pos + 1 :]
                out[key] = out.get(key, 0) + (-1) ** pos * c
        return GrassmannElement(self.n, out)

    def degrees(self) -> set[int]:
        return {len(S) for S in self.terms}

    def to_form(self, fr) -> PolyForm:
        """chi: eps_S -> w_S, 1 -> 0."""
        vec = np.zeros(fr.N, dtype=object)
        vec[...] = 0
        for S, c in self.terms.items():
            if S:
                vec = vec + whitney_vector(fr, S) * c
        return scalar_form(fr, vec)

    def __repr__(self):
        return f"GrassmannElement(n={self.n}, {self.terms})"


def grassmann_basis(n: int) -> list[tuple[int, ...]]:
    return [()] + subsimplices(n)


def top_pairing(s: GrassmannElement, t: GrassmannElement) -> Fraction:
    """<s, t>: the coefficient of eps_0...eps_n in s t."""
    return (s * t).terms.get(tuple(range(s.n + 1)), Fraction(0))


def pairing_direct(s: GrassmannElement, t: GrassmannElement, D: int | None = None) -> Fraction:
    """(s, t) = integral over Delta^n of chi(s) chi(t), exact."""
    n = s.n
    fr = frame(n, D if D is not None else max(2, n + 1))
    a, b = s.to_form(fr), t.to_form(fr)
    prod, trunc = fr.multiply(a.coef[0], b.coef[0])
    if trunc:
        raise ValueError("degree cap too small for the Grassmann pairing")
    row = fr.integration_row(tuple(range(n + 1)))
    return sum((w * prod[c] for c, w in row.items()), Fraction(0))


def pairing_closed(s: GrassmannElement, t: GrassmannElement) -> Fraction:
    """Closed formula (i-1)!(j-1)!/(n+1)! <s, dt> on homogeneous parts with i, j >= 1."""
    n = s.n
    total = Fraction(0)
    for S, a in s.terms.items():
        for T, b in t.terms.items():
            i, j = len(S), len(T)
            if i < 1 or j < 1:
                continue
            coef = Fraction(math.factorial(i - 1) * math.factorial(j - 1), math.factorial(n + 1))
            total += coef * a * b * top_pairing(GrassmannElement(n, {S: 1}), GrassmannElement(n, {T: 1}).partial())
    return total


@dataclass
class GrassmannTables:
    n: int
    basis: list[tuple[int, ...]]
    top: list[list[Fraction]]
    direct: list[list[Fraction]]
    closed: list[list[Fraction]]

    def max_disagreement(self) -> float:
        return max((abs(float(a - b)) for ra, rb in zip(self.direct, self.closed) for a, b in zip(ra, rb)),
                   default=0.0)


def grassmann_pairings(n: int) -> GrassmannTables:
    if n < 1:
        raise ValueError("n must be at least 1")
    basis = grassmann_basis(n)
    els = [GrassmannElement(n, {S: 1}) for S in basis]
    top = [[top_pairing(a, b) for b in els] for a in els]
    fr = frame(n, max(2, n + 1))
    forms = [e.to_form(fr).coef[0] for e in els]
    row = fr.integration_row(tuple(range(n + 1)))
    direct = [[Fraction(0)] * len(els) for _ in els]
    for a, S in enumerate(basis):
        for b, T in enumerate(basis):
            # only top-degree products have nonzero integral
            if not S or not T or (len(S) - 1) + (len(T) - 1) != n:
                continue
            prod, _ = fr.multiply(forms[a], forms[b])
            direct[a][b] = sum((w * prod[c] for c, w in row.items()), Fraction(0))
    closed = [[pairing_closed(a, b) for b in els] for a in els]
    return GrassmannTables(n, basis, top, direct, closed)


def _rref_nullspace(rows: list[list[Fraction]], ncols: int) -> list[list[Fraction]]:
    """Exact nullspace basis of a rational matrix."""
    m = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    free = [c for c in range(ncols) if c not in pivots]
    out = []
    for fcol in free:
        v = [Fraction(0)] * ncols
        v[fcol] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -m[i][fcol]
        out.append(v)
    return out


def _rank(rows: list[list[Fraction]], ncols: int) -> int:
    return ncols - len(_rref_nullspace(rows, ncols)) if rows else 0


def kernel_matches_partial_closed(n: int, tables: GrassmannTables | None = None) -> bool:
    """Exact check that the kernel of (,) equals the kernel of the partial operator."""
    t = tables if tables is not None else grassmann_pairings(n)
    basis = t.basis
    pos = {S: q for q, S in enumerate(basis)}
    ker_pair = _rref_nullspace(t.direct, len(basis))
    dmat = [[Fraction(0)] * len(basis) for _ in basis]
    for q, S in enumerate(basis):
        img = GrassmannElement(n, {S: 1}).partial()
        for T, c in img.terms.items():
            dmat[pos[T]][q] = c
    ker_d = _rref_nullspace(dmat, len(basis))
    if len(ker_pair) != len(ker_d):
        return False
    return _rank(ker_pair + ker_d, len(basis)) == len(ker_d)


def d_partial_identity(n: int) -> bool:
    """d partial + partial d = n + 1 on every basis element, exactly."""
    for S in grassmann_basis(n):
        e = GrassmannElement(n, {S: 1})
        if e.partial().d() + e.d().partial() != e * (n + 1):
            return False
    return True


# ------------------------------------------------------------ nondegeneracy at base points


@dataclass
class NondegeneracyReport:
    k: int
    point: tuple
    closed_dim: int
    rank: int
    kernel_law: bool

    @property
    def nondegenerate(self) -> bool:
        return self.closed_dim == self.rank


def nondegeneracy_check(dg, x: Sequence[float] | None = None, k: int | None = None,
                        threshold: float = 1e-8) -> NondegeneracyReport:
    """Rank of (,) (x) w_x on the d_tot-closed degree-1 part of E~_k (x) W."""
    omega = dg.omega
    if omega is None:
        raise ValueError("chart carries no 2-form")
    if x is None:
        x = dg.box.center()
    k = omega.k if k is None else k
    P = omega.matrix_at(x)
    if np.linalg.matrix_rank(P, tol=1e-12) < dg.dim:
        raise InvarianceError("2-form is degenerate at the base point")
    M = linearize_fq(dg, x)
    qlin = -M  # e_i -> sum_k qlin[k, i] e_k
    degs = dg.coords.degrees
    basis = [(S, i) for S in grassmann_basis(k) for i in range(dg.dim) if len(S) - degs[i] == 1]
    target = [(S, i) for S in grassmann_basis(k) for i in range(dg.dim) if len(S) - degs[i] == 2]
    tpos = {b: q for q, b in enumerate(target)}
    Dt = np.zeros((len(target), len(basis)))
    for col, (S, i) in enumerate(basis):
        dS = GrassmannElement(k, {S: 1}).d()
        for T, c in dS.terms.items():
            Dt[tpos[(T, i)], col] += float(c)
        for kk in range(dg.dim):
            if qlin[kk, i]:
                Dt[tpos[(S, kk)], col] += (-1) ** len(S) * qlin[kk, i]
    closed = null_space(Dt) if Dt.size else np.eye(len(basis))
    tables = grassmann_pairings(k)
    gpos = {S: q for q, S in enumerate(tables.basis)}
    G = np.array([[float(tables.direct[gpos[S]][gpos[T]]) * P[i, j] for (T, j) in basis] for (S, i) in basis])
    R = closed.T @ G @ closed
    sv = np.linalg.svd(R, compute_uv=False) if R.size else np.zeros(0)
    rank = int(np.sum(sv > threshold * max(1.0, sv.max(initial=0.0))))
    return NondegeneracyReport(k, tuple(float(v) for v in x), closed.shape[1], rank,
                               kernel_matches_partial_closed(k, tables))
