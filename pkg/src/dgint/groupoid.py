"""The finite-dimensional gauge-fixed groupoid K^s.

An element on Delta^n is a Whitney cochain c.  Its form is the unique
solution of A = c + s F_Q(A) near zero, so p(A) = c and s(A) = 0 hold by
construction; A is Maurer-Cartan exactly when the curvature cochain
R(c) = dc - p F_Q(A(c)) vanishes.  Horn fillers and products come from Newton
solves of R = 0 over the cochain entries that the horn does not fix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import bernoulli

from .graded import (
    ChartError,
    ChartedDgManifold,
    GradedCoordSystem,
    GradedPolynomial,
    apply_vector_field,
    substitute,
)
from .mc import (
    ConvergenceError,
    MCSolution,
    evaluate_fq,
    evaluate_polys,
    BOX_SHRINK,
    check_range,
    fixed_point,
    linearization_matrix,
    linearized_fq,
    mc_residual,
    solve_identity_minus,
)
from .polyform import PolyForm, d, frame, norm
from .simplicial import WhitneyCochain, check_horn, cochain_slots, gauge, moore_fill, whitney_project

DEFAULT_D = 8


class SingularJacobianError(RuntimeError):
    pass


class RetractionError(RuntimeError):
    pass


@dataclass
class GroupoidElement:
    n: int
    cochain: WhitneyCochain
    form: PolyForm
    mc_residual_norm: float
    gauge_defect_norm: float
    iterations: int = 0

    def accepted(self, tol: float = 1e-10) -> bool:
        return self.mc_residual_norm <= tol and self.gauge_defect_norm <= tol

    def face(self, dg: ChartedDgManifold, i: int, tol: float = 1e-13) -> "GroupoidElement":
        return reconstruct(dg, self.cochain.face(i), tol=tol, D=self.form.frame.D)


# ------------------------------------------------------------ reconstruction


def reconstruct(dg: ChartedDgManifold, c: WhitneyCochain, tol: float = 1e-13, max_iter: int = 50,
                D: int = DEFAULT_D) -> GroupoidElement:
    """Solve A = c + s F_Q(A) near c and attach diagnostics.

    Float cochains use Newton's method with the exact linearization; exact
    (Fraction) cochains use the Picard iteration, which terminates for
    nilpotent charts.
    """
    if c.degree != 0:
        raise ValueError("reconstruction needs a total-degree-0 cochain")
    if c.coords != dg.coords:
        raise ValueError("cochain and chart use different coordinates")
    fr = frame(c.n, D)
    C = c.to_form(fr)
    s = gauge(fr).s
    if c.n == 0:
        A, its = C, 0
    elif C.exact:
        A, its, _ = fixed_point(lambda A: C + evaluate_fq(dg, A, check=False).apply(s), C, dg, tol, max_iter,
                                "reconstruction")
    else:
        A, its = _newton_reconstruct(dg, C, s, tol, max_iter)
    _, rn = mc_residual(dg, A)
    gd = norm(A.apply(s)).value
    return GroupoidElement(c.n, c, A, rn.value, gd, its)


def _newton_reconstruct(dg, C: PolyForm, s, tol: float, max_iter: int):
    A = C
    last = np.inf
    for it in range(1, max_iter + 1):
        check_range(dg, A, BOX_SHRINK)
        phi = A - C - evaluate_fq(dg, A, check=False).apply(s)
        T = linearization_matrix(dg, A, s)
        step = solve_identity_minus(T, -phi.coef.reshape(-1))
        A = PolyForm(A.frame, A.coords, A.coef + step.reshape(A.coef.shape), A.truncated or phi.truncated)
        delta = float(np.max(np.abs(step), initial=0.0))
        if delta <= tol or (delta <= 1e3 * tol and delta >= 0.5 * last):
            return A, it
        if not np.isfinite(delta) or delta > 1e6:
            raise ConvergenceError(f"reconstruction: Newton diverged at iterate {it}", A)
        last = delta
    raise ConvergenceError(f"reconstruction: no convergence after {max_iter} Newton steps", A)


def tangent_matrix(dg: ChartedDgManifold, A: PolyForm, rhs: np.ndarray) -> np.ndarray:
    """Derivatives of reconstruction: solve u = v + s L_A(u) for each column v of rhs."""
    s = gauge(A.frame).s
    T = linearization_matrix(dg, A, s)
    return solve_identity_minus(T, rhs)


def tangent(dg: ChartedDgManifold, A: PolyForm, dc: PolyForm) -> PolyForm:
    u = tangent_matrix(dg, A, dc.to_float().coef.reshape(-1, 1))[:, 0]
    return PolyForm(A.frame, A.coords, u.reshape(A.coef.shape))


def curvature(dg: ChartedDgManifold, c: WhitneyCochain, tol: float = 1e-13,
              element: GroupoidElement | None = None, D: int = DEFAULT_D) -> WhitneyCochain:
    """R(c) = dc - p F_Q(A(c)) as a degree-1 cochain."""
    g = element if element is not None else reconstruct(dg, c, tol=tol, D=D)
    return c.coboundary() - whitney_project(evaluate_fq(dg, g.form, check=False), degree=1)


def constant_element(dg: ChartedDgManifold, n: int, x: Sequence[float] | None = None,
                     D: int = DEFAULT_D) -> GroupoidElement:
    """The degenerate simplex at the point x (default: box center)."""
    if x is None:
        x = dg.box.center()
    c = WhitneyCochain.zero(n, dg.coords)
    idx = c.slot_index()
    for v in range(n + 1):
        for slot, i in enumerate(dg.coords.zero_idx):
            c.values[idx[((v,), i)]] = x[slot]
    return reconstruct(dg, c, D=D)


def element_from_vector(dg: ChartedDgManifold, a: Sequence[float], x: Sequence[float] | None = None,
                        D: int = DEFAULT_D, tol: float = 1e-12) -> GroupoidElement:
    """Element on Delta^1 starting at x with edge entries a for the degree-1 coordinates.

    For a Lie algebra chart this is the group element exp(a).  With degree-0
    coordinates the endpoint is solved for so that the edge is Maurer-Cartan.
    """
    c = constant_element(dg, 1, x, D).cochain.copy()
    idx = c.slot_index()
    ones = [i for i, di in enumerate(dg.coords.degrees) if di == 1]
    if len(a) != len(ones):
        raise ValueError(f"expected {len(ones)} edge entries")
    for i, v in zip(ones, a):
        c.values[idx[((0, 1), i)]] = v
    if not dg.coords.zero_idx:
        return reconstruct(dg, c, D=D)
    free = [idx[((1,), i)] for i in dg.coords.zero_idx]
    eqs = list(range(len(cochain_slots(1, dg.coords, 1))))
    g, _ = _newton_cochain(dg, c, free, eqs, tol, 30, D)
    return g


def solve_element(dg: ChartedDgManifold, c: WhitneyCochain, tol: float = 1e-12, max_iter: int = 30,
                  D: int = DEFAULT_D) -> GroupoidElement:
    """An element of K^s near c, by minimum-norm Newton steps on all cochain entries."""
    free = list(range(len(c.slots())))
    eqs = list(range(len(cochain_slots(c.n, c.coords, 1))))
    g, _ = _newton_cochain(dg, c, free, eqs, tol, max_iter, D)
    return g


def vertex_values(g: GroupoidElement, v: int) -> np.ndarray:
    """Degree-0 coordinates at vertex v."""
    idx = g.cochain.slot_index()
    return np.array([float(g.cochain.values[idx[((v,), i)]]) for i in g.cochain.coords.zero_idx])


def edge_vector(g: GroupoidElement) -> np.ndarray:
    """Edge entries of the degree-1 coordinates of an element on Delta^1."""
    idx = g.cochain.slot_index()
    return np.array([float(g.cochain.values[idx[((0, 1), i)]])
                     for i, di in enumerate(g.cochain.coords.degrees) if di == 1])


# ------------------------------------------------------------ horn filling


@dataclass
class KsFill:
    element: GroupoidElement
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    unknowns: int = 0
    equations: int = 0


def _free_slots(c: WhitneyCochain, k: int):
    n = c.n
    full = tuple(range(n + 1))
    missing = tuple(v for v in range(n + 1) if v != k)
    return [q for q, (I, _) in enumerate(c.slots()) if I in (full, missing)]


def _equation_slots(n: int, coords: GradedCoordSystem, k: int):
    full = tuple(range(n + 1))
    missing = tuple(v for v in range(n + 1) if v != k)
    return [q for q, (I, _) in enumerate(cochain_slots(n, coords, 1)) if I in (full, missing)]


def horn_fill_ks(dg: ChartedDgManifold, faces: Sequence, k: int, tol: float = 1e-12, max_iter: int = 30,
                 start: np.ndarray | None = None, D: int | None = None, cond_max: float = 1e10) -> KsFill:
    """Fill a horn of gauge-fixed elements by Newton on the curvature equation.

    ``faces`` has n+1 entries (GroupoidElement or WhitneyCochain) with faces[k]
    None.  The free unknowns are the cochain entries on the missing face and on
    the top cell.  When there are more unknowns than equations (n <= ell) the
    minimum-norm Newton step is used, so the filler is one of a family.
    """
    n = len(faces) - 1
    cochains = [None if f is None else (f.cochain if isinstance(f, GroupoidElement) else f) for f in faces]
    if D is None:
        D = next((f.form.frame.D for f in faces if isinstance(f, GroupoidElement)), DEFAULT_D)
    check_horn(cochains, k, atol=0.0)
    base = moore_fill(cochains, k, check=False)
    free = _free_slots(base, k)
    eqs = _equation_slots(n, dg.coords, k)
    c = base.copy()
    c.values = c.values.astype(float)
    if start is not None:
        c.values[free] = start
    g, history = _newton_cochain(dg, c, free, eqs, tol, max_iter, D, cond_max, unique=n > dg.ell)
    return KsFill(g, len(history), history, len(free), len(eqs))


def _newton_cochain(dg: ChartedDgManifold, c: WhitneyCochain, free, eqs, tol: float, max_iter: int,
                    D: int, cond_max: float = 1e10, unique: bool = False):
    """Newton on the curvature entries ``eqs`` over the cochain entries ``free``.

    With ``unique`` the Jacobian must be injective (condition number at most
    cond_max); otherwise minimum-norm steps pick one solution of the family.
    """
    c = c.copy()
    c.values = c.values.astype(float)
    history: list[float] = []
    for _ in range(max_iter):
        g = reconstruct(dg, c, D=D)
        R = curvature(dg, c, element=g).values[eqs]
        res = float(np.max(np.abs(R), initial=0.0))
        history.append(res)
        if res <= tol or not free:
            break
        J = curvature_jacobian(dg, g.form, free, eqs)
        if unique:
            cond = np.linalg.cond(J) if J.size else 1.0
            if len(free) > len(eqs) or not np.isfinite(cond) or cond > cond_max:
                raise SingularJacobianError(f"curvature Jacobian is singular (condition {cond:.3g})")
        step = np.linalg.lstsq(J, -R, rcond=1e-10)[0]
        c.values[free] = c.values[free] + step
    else:
        raise ConvergenceError(f"Newton did not converge (curvature {history[-1]:.3g})", None, history)
    if history[-1] > tol:
        raise ConvergenceError(f"horn is not fillable at this tolerance (curvature {history[-1]:.3g})", None, history)
    return g, history


def curvature_jacobian(dg: ChartedDgManifold, A: PolyForm, free, eqs) -> np.ndarray:
    """Columns dR/dc_q for the free cochain slots, by the exact linearization."""
    fr = A.frame
    n = fr.n
    basis = []
    rhs = np.zeros((dg.dim * fr.N, len(free)))
    for col, q in enumerate(free):
        e = WhitneyCochain.zero(n, dg.coords)
        e.values[q] = 1.0
        basis.append(e)
        rhs[:, col] = e.to_form(fr).coef.reshape(-1)
    U = tangent_matrix(dg, A, rhs)
    J = np.zeros((len(eqs), len(free)))
    for col, e in enumerate(basis):
        u = PolyForm(fr, dg.coords, U[:, col].reshape(dg.dim, fr.N))
        dR = e.coboundary() - whitney_project(linearized_fq(dg, A, u, check=False), degree=1)
        J[:, col] = dR.values[eqs]
    return J


def multiply(dg: ChartedDgManifold, a: GroupoidElement, b: GroupoidElement, tol: float = 1e-12) -> GroupoidElement:
    """Composite of two 1-simplices: fill the inner horn at vertex 1, take face 1."""
    fill = horn_fill_ks(dg, [b, None, a], 1, tol=tol)
    return fill.element.face(dg, 1)


def divide_left(dg: ChartedDgManifold, a: GroupoidElement, c: GroupoidElement, tol: float = 1e-12) -> GroupoidElement:
    """The b with a * b = c (outer horn at vertex 0)."""
    fill = horn_fill_ks(dg, [None, c, a], 0, tol=tol)
    return fill.element.face(dg, 0)


def divide_right(dg: ChartedDgManifold, c: GroupoidElement, b: GroupoidElement, tol: float = 1e-12) -> GroupoidElement:
    """The a with a * b = c (outer horn at vertex 2)."""
    fill = horn_fill_ks(dg, [b, c, None], 2, tol=tol)
    return fill.element.face(dg, 2)


def triangle(dg: ChartedDgManifold, a: GroupoidElement, b: GroupoidElement, tol: float = 1e-12) -> GroupoidElement:
    """The 2-simplex with edges a (01) and b (12)."""
    return horn_fill_ks(dg, [b, None, a], 1, tol=tol).element


def associativity_defect(dg: ChartedDgManifold, a, b, c, tol: float = 1e-12) -> dict:
    """Compare (ab)c with a(bc) through the 3-simplex spanned by a, b, c.

    Faces 012, 123 and 023 (the last with edges ab and c) form the horn
    missing face 2.  For a Lie algebra chart that horn has no free entries, so
    its curvature on face 013 measures associativity directly.
    """
    ab = multiply(dg, a, b, tol)
    bc = multiply(dg, b, c, tol)
    left = multiply(dg, ab, c, tol)
    right = multiply(dg, a, bc, tol)
    faces = [triangle(dg, b, c, tol), triangle(dg, ab, c, tol), None, triangle(dg, a, b, tol)]
    cochains = [None if f is None else f.cochain for f in faces]
    filled = moore_fill(cochains, 2)
    eqs = _equation_slots(3, dg.coords, 2)
    R = curvature(dg, filled).values[eqs]
    return {
        "product_difference": float(np.max(np.abs(edge_vector(left) - edge_vector(right)))),
        "horn_curvature": float(np.max(np.abs(R), initial=0.0)),
        "free_unknowns": len(_free_slots(filled, 2)),
    }


# ------------------------------------------------------------ retraction


@dataclass
class Retraction:
    element: GroupoidElement
    times: np.ndarray
    defects: np.ndarray


def gauge_flow_retract(dg: ChartedDgManifold, A: PolyForm | MCSolution, tau_max: float = 20.0,
                       step: float = 0.1, tol: float = 1e-8, fixed_tol: float = 1e-14,
                       stop_below: float = 1e-14, noise_floor: float = 1e-12) -> Retraction:
    """Flow dA/dtau = dH + L_A(H) with H = -s(A) until s(A) vanishes.

    The vertical datum keeps A Maurer-Cartan; at linear order s(A) decays
    like exp(-tau).  Inputs already in the gauge are returned unchanged.  Once
    the defect is below noise_floor * max(1, |A|) it is rounding error, so a
    step that fails to decrease it ends the flow at the previous iterate.
    """
    if isinstance(A, MCSolution):
        A = A.form
    fr = A.frame
    s = gauge(fr).s

    def rhs(X):
        H = -X.apply(s)
        return d(H) + linearized_fq(dg, X, H, check=False)

    defect = norm(A.apply(s)).value
    times, defects = [0.0], [defect]
    if defect > fixed_tol:
        tau = 0.0
        floor = noise_floor * max(1.0, A.max_coef())
        nsteps = int(round(tau_max / step))
        for _ in range(nsteps):
            k1 = rhs(A)
            k2 = rhs(A + k1 * (step / 2))
            k3 = rhs(A + k2 * (step / 2))
            k4 = rhs(A + k3 * step)
            nxt = A + (k1 + k2 * 2 + k3 * 2 + k4) * (step / 6)
            new = norm(nxt.apply(s)).value
            if new >= defects[-1] and defects[-1] <= floor:
                break
            if new > defects[-1]:
                raise RetractionError(f"gauge defect increased at tau = {tau + step:.3g} ({defects[-1]:.3g} -> {new:.3g})")
            A = nxt
            tau += step
            times.append(tau)
            defects.append(new)
            if new <= stop_below:
                break
        if defects[-1] > tol:
            raise RetractionError(f"gauge defect {defects[-1]:.3g} above {tol:g} at tau = {tau:.3g}")
    _, rn = mc_residual(dg, A)
    c = whitney_project(A, degree=0)
    g = GroupoidElement(fr.n, c, A, rn.value, defects[-1])
    return Retraction(g, np.array(times), np.array(defects))


# ------------------------------------------------------------ chart maps


@dataclass(frozen=True, eq=False)
class ChartMap:
    """A degree-preserving map of charts, given by pullbacks of target coordinates."""

    source: ChartedDgManifold
    target: ChartedDgManifold
    images: tuple[GradedPolynomial, ...]
    dg: bool = False

    @classmethod
    def build(cls, source: ChartedDgManifold, target: ChartedDgManifold,
              images: Sequence[GradedPolynomial]) -> "ChartMap":
        images = tuple(images)
        if len(images) != target.dim:
            raise ChartError("one image per target coordinate is required")
        for j, p in enumerate(images):
            if p.coords != source.coords:
                raise ChartError("images must be polynomials in the source coordinates")
            ds = p.degrees()
            if ds and ds != {target.coords.degrees[j]}:
                raise ChartError(f"image of {target.coords.names[j]} has the wrong degree")
        # phi^* Q' = Q phi^*, checked on generators
        for j, p in enumerate(images):
            lhs = apply_vector_field(source.fq, p)
            rhs = substitute(target.fq[j], list(images)) if not target.fq[j].is_zero() else GradedPolynomial.zero(source.coords)
            if lhs != rhs:
                raise ChartError(f"map does not intertwine the differentials on {target.coords.names[j]}")
        return cls(source, target, images, True)

    @classmethod
    def identity(cls, dg: ChartedDgManifold) -> "ChartMap":
        return cls.build(dg, dg, [GradedPolynomial.var(dg.coords, i) for i in range(dg.dim)])

    @classmethod
    def linear(cls, source, target, matrix) -> "ChartMap":
        """Linear map xi'^j = sum_i matrix[j][i] xi^i."""
        imgs = []
        for j in range(target.dim):
            p = GradedPolynomial.zero(source.coords)
            for i in range(source.dim):
                if matrix[j][i]:
                    p = p + GradedPolynomial.var(source.coords, i) * Fraction(matrix[j][i])
            imgs.append(p)
        return cls.build(source, target, imgs)

    def push_form(self, A: PolyForm) -> PolyForm:
        return evaluate_polys(self.source, A, self.images, coords=self.target.coords)


def pushforward_ks(phi: ChartMap, g: GroupoidElement, tol: float = 1e-8) -> GroupoidElement:
    if not phi.dg:
        raise ChartError("chart map has not been verified to be a dg map")
    B = phi.push_form(g.form)
    return gauge_flow_retract(phi.target, B, tol=tol).element


# ------------------------------------------------------------ Lie oracle


def bch_product(bracket, a, b, rtol: float = 1e-12) -> np.ndarray:
    """log(exp(a) exp(b)) for bracket constants f[i][j][k] with [e_j, e_k] = f^i_jk e_i.

    Integrates z' = psi(ad_z) b from z(0) = a, with psi(x) = x / (1 - e^-x).
    """
    f = np.array(bracket, dtype=float)
    b = np.asarray(b, dtype=float)
    Bn = bernoulli(24)
    coeffs = [(-1) ** m * Bn[m] / math.factorial(m) for m in range(25)]

    def rhs(_t, z):
        ad = np.einsum("ijk,j->ik", f, z)
        out = np.zeros_like(z)
        term = b.copy()
        for m, cm in enumerate(coeffs):
            if m:
                term = ad @ term
            out += cm * term
        return out

    sol = solve_ivp(rhs, (0.0, 1.0), np.asarray(a, dtype=float), method="DOP853", rtol=rtol, atol=1e-15)
    return sol.y[:, -1]
