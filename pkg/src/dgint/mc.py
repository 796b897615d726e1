"""Maurer-Cartan forms: evaluation of F_Q, residuals, the Kuranishi map and its
Picard inverse, and propagation of solutions along a homotopy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graded import ChartedDgManifold, GradedPolynomial
from .polyform import FormNorm, PolyForm, d, homotopy_h, norm, zero_form_values

BOX_SHRINK = 0.1


class RangeError(ValueError):
    """The degree-0 part of a form leaves the chart box."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterate: PolyForm | None = None, history: Sequence[float] = ()):
        super().__init__(message)
        self.iterate = iterate
        self.history = list(history)


class ExitError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


def check_range(dg: ChartedDgManifold, A: PolyForm, shrink: float = 0.0) -> None:
    zi = dg.coords.zero_idx
    if not zi:
        return
    vals = zero_form_values(A)[list(zi)]
    box = dg.box
    for slot, i in enumerate(zi):
        lo, hi = box.lo[slot], box.hi[slot]
        if np.isfinite(lo) and np.isfinite(hi):
            pad = shrink * (hi - lo) / 2
            lo, hi = lo + pad, hi - pad
        v = vals[slot]
        if np.any(v <= lo) or np.any(v >= hi):
            raise RangeError(
                f"coordinate {dg.coords.names[i]} leaves ({lo:g}, {hi:g}): range [{v.min():.6g}, {v.max():.6g}]"
            )


class _Substitution:
    """Evaluate graded polynomials at a total-degree-0 form, with product caching."""

    def __init__(self, dg: ChartedDgManifold, A: PolyForm):
        self.dg = dg
        self.A = A
        self.fr = A.frame
        self.exact = A.exact
        self.truncated = A.truncated
        self._mono: dict[tuple, np.ndarray] = {}
        self._xpow: dict[tuple, np.ndarray] = {}
        one = self._zero()
        one[0] = 1
        self.one = one

    def _zero(self) -> np.ndarray:
        if self.exact:
            z = np.zeros(self.fr.N, dtype=object)
            z[...] = 0
            return z
        return np.zeros(self.fr.N)

    def _mul(self, u, v):
        out, t = self.fr.multiply(u, v)
        self.truncated |= t
        return out

    def mono(self, m: tuple[int, ...]) -> np.ndarray:
        if not m:
            return self.one
        got = self._mono.get(m)
        if got is None:
            got = self._mul(self.mono(m[:-1]), self.A.coef[m[-1]]) if len(m) > 1 else self.A.coef[m[0]]
            self._mono[m] = got
        return got

    def xpow(self, e: tuple[int, ...]) -> np.ndarray:
        if not any(e):
            return self.one
        got = self._xpow.get(e)
        if got is None:
            slot = max(s for s, v in enumerate(e) if v)
            prev = e[:slot] + (e[slot] - 1,) + e[slot + 1 :]
            comp = self.A.coef[self.dg.coords.zero_idx[slot]]
            got = self._mul(self.xpow(prev), comp) if any(prev) else comp
            self._xpow[e] = got
        return got

    def poly(self, p: GradedPolynomial) -> np.ndarray:
        out = self._zero()
        for (xexp, m), c in p.terms.items():
            term = self.mono(m)
            if any(xexp):
                term = self._mul(self.xpow(xexp), term)
            out = out + term * (c if self.exact else float(c))
        return out


def evaluate_polys(dg: ChartedDgManifold, A: PolyForm, polys: Sequence[GradedPolynomial],
                   coords=None) -> PolyForm:
    """Substitute the components of A (in the chart's coordinates) into polynomials."""
    if A.coords != dg.coords:
        raise ValueError("form and chart use different coordinates")
    sub = _Substitution(dg, A)
    coef = np.stack([sub.poly(f) for f in polys]) if len(polys) else A.coef[:0]
    return PolyForm(A.frame, coords if coords is not None else A.coords, coef, sub.truncated)


def evaluate_fq(dg: ChartedDgManifold, A: PolyForm, check: bool = True) -> PolyForm:
    """F_Q(A): substitute the components of A into the structure polynomials."""
    if A.coords != dg.coords:
        raise ValueError("form and chart use different coordinates")
    if check:
        check_range(dg, A)
    return evaluate_polys(dg, A, dg.fq)


def linearized_fq(dg: ChartedDgManifold, A: PolyForm, u: PolyForm, check: bool = True) -> PolyForm:
    """sum_i u^i ^ (dF/dxi^i)(A): the derivative of F_Q at A applied to u."""
    if check:
        check_range(dg, A)
    sub = _Substitution(dg, A)
    fr = A.frame
    out = PolyForm.zero(fr, A.coords, A.exact or u.exact)
    trunc = u.truncated
    for k in range(dg.dim):
        acc = out.coef[k]
        for i in range(dg.dim):
            p = dg.dfq[k][i]
            if p.is_zero() or not np.any(u.coef[i] != 0):
                continue
            val = sub.poly(p)
            prod, t = fr.multiply(u.coef[i], val)
            trunc |= t
            acc = acc + prod
        out.coef[k] = acc
    out.truncated = trunc or sub.truncated
    return out


def linearization_matrix(dg: ChartedDgManifold, A: PolyForm, op=None) -> sp.csr_matrix:
    """Sparse matrix of u -> op(L_A(u)) on stacked coefficient vectors (float).

    L_A(u)^k = sum_i u^i ^ (dF^k/dxi^i)(A); ``op`` is an optional LinearOp
    applied to every component afterwards.
    """
    fr = A.frame
    sub = _Substitution(dg, A.to_float() if A.exact else A)
    blocks = [[None] * dg.dim for _ in range(dg.dim)]
    for k in range(dg.dim):
        for i in range(dg.dim):
            p = dg.dfq[k][i]
            if p.is_zero():
                continue
            m = fr.right_multiplication_matrix(sub.poly(p))
            blocks[k][i] = op.csr @ m if op is not None else m
    for k in range(dg.dim):
        if blocks[k][k] is None:
            blocks[k][k] = sp.csr_matrix((fr.N, fr.N))
    return sp.bmat(blocks, format="csr")


def solve_identity_minus(T: sp.spmatrix, rhs: np.ndarray, rtol: float = 1e-14) -> np.ndarray:
    """Solve (I - T) x = rhs for a vector or for each column of a matrix.

    For small forms T is a small perturbation, so restarted GMRES converges in
    a handful of matrix products; the sparse direct solver is the fallback.
    """
    M = (sp.identity(T.shape[0], format="csr") - T).tocsr()
    rhs = np.asarray(rhs, dtype=float)
    cols = rhs.reshape(rhs.shape[0], -1)
    out = np.empty_like(cols)
    lu = None
    for q in range(cols.shape[1]):
        b = cols[:, q]
        scale = float(np.max(np.abs(b), initial=0.0))
        if scale == 0.0:
            out[:, q] = 0.0
            continue
        x, info = spla.gmres(M, b, rtol=rtol, atol=0.0, restart=100, maxiter=20)
        if info != 0 or not np.all(np.isfinite(x)) or np.max(np.abs(M @ x - b)) > 1e-12 * scale:
            if lu is None:
                lu = spla.splu(M.tocsc())
            x = lu.solve(b)
        out[:, q] = x
    return out.reshape(rhs.shape)


def mc_residual(dg: ChartedDgManifold, A: PolyForm) -> tuple[PolyForm, FormNorm]:
    r = d(A) - evaluate_fq(dg, A)
    return r, norm(r)


def kuranishi(dg: ChartedDgManifold, A: PolyForm, vertex: int = 0) -> PolyForm:
    """kappa(A) = A - h(F_Q(A)) with h contracting onto the given vertex."""
    return A - homotopy_h(evaluate_fq(dg, A), vertex)


@dataclass
class MCSolution:
    form: PolyForm
    residual_norm: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def truncated(self) -> bool:
        return self.form.truncated


def fixed_point(step: Callable[[PolyForm], PolyForm], start: PolyForm, dg: ChartedDgManifold,
                tol: float, max_iter: int, what: str) -> tuple[PolyForm, int, list[float]]:
    """Iterate A <- step(A) until the coefficient change stops decreasing below tol."""
    A = start
    history: list[float] = []
    for it in range(1, max_iter + 1):
        try:
            check_range(dg, A, BOX_SHRINK)
            new = step(A)
        except RangeError as e:
            raise ConvergenceError(f"{what}: iterate {it} left the box ({e})", A, history) from None
        delta = (new - A).max_coef()
        history.append(delta)
        A = new
        if delta == 0.0:
            return A, it, history
        if delta <= tol and len(history) > 1 and delta >= history[-2] * 0.5:
            return A, it, history
        if delta <= tol * 1e-4:
            return A, it, history
        if not np.isfinite(delta) or (len(history) > 3 and delta > 1e3 * max(history[0], tol)):
            raise ConvergenceError(f"{what}: diverging at iterate {it} (change {delta:.3g})", A, history)
    if history and history[-1] <= tol:
        return A, max_iter, history
    raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations (change {history[-1]:.3g})", A, history)


def kuranishi_inverse(dg: ChartedDgManifold, B: PolyForm, tol: float = 1e-10, max_iter: int = 200,
                      vertex: int = 0, initial: PolyForm | None = None, closed_tol: float = 1e-12,
                      mc_tol: float | None = None) -> MCSolution:
    """Solve kappa(A) = B by the Picard iteration A <- B + h(F_Q(A))."""
    dB = d(B)
    if B.exact:
        if not dB.is_zero():
            raise ValueError("input form is not closed")
    elif dB.max_coef() > closed_tol * max(1.0, B.max_coef()):
        raise ValueError(f"input form is not closed (|dB| = {dB.max_coef():.3g})")
    h = B.frame.h_op(vertex)

    def step(A):
        return B + evaluate_fq(dg, A, check=False).apply(h)

    A, its, hist = fixed_point(step, initial if initial is not None else B, dg, tol, max_iter, "inverse Kuranishi")
    _, rn = mc_residual(dg, A)
    mc_tol = tol if mc_tol is None else mc_tol
    return MCSolution(A, rn.value, its, rn.value <= mc_tol, hist)


@dataclass
class CylinderForm:
    """Time slices of the horizontal part A_h on Delta^n x [0, 1] and the vertical datum."""

    times: np.ndarray
    slices: list[PolyForm]
    vertical: list[PolyForm]

    def residual_norms(self, dg: ChartedDgManifold) -> np.ndarray:
        return np.array([mc_residual(dg, A)[1].value for A in self.slices])

    @property
    def final(self) -> PolyForm:
        return self.slices[-1]


def homotopy_rhs(dg: ChartedDgManifold, A: PolyForm, H: PolyForm) -> PolyForm:
    """dA_h/dt = d H + H^i (dF/dxi^i)(A_h) for a vertical datum H of total degree -1."""
    return d(H) + linearized_fq(dg, A, H, check=False)


def propagate_homotopy(dg: ChartedDgManifold, A0: PolyForm | MCSolution,
                       H: PolyForm | Callable[[float], PolyForm], steps: int = 64,
                       t_end: float = 1.0) -> CylinderForm:
    """Classical RK4 for the homotopy ODE, starting at the MC solution A0."""
    if isinstance(A0, MCSolution):
        A0 = A0.form
    Hf = H if callable(H) else (lambda t, _H=H: _H)
    for i, k in Hf(0.0).form_degrees():
        if k != dg.coords.degrees[i] - 1:
            raise ValueError("vertical datum must have total degree -1")
    dt = t_end / steps
    times = np.linspace(0.0, t_end, steps + 1)
    A = A0
    slices, vert = [A0], [Hf(0.0)]
    for s in range(steps):
        t = times[s]
        try:
            check_range(dg, A)
            h_mid = Hf(t + dt / 2)
            k1 = homotopy_rhs(dg, A, Hf(t))
            k2 = homotopy_rhs(dg, A + k1 * (dt / 2), h_mid)
            k3 = homotopy_rhs(dg, A + k2 * (dt / 2), h_mid)
            k4 = homotopy_rhs(dg, A + k3 * dt, Hf(t + dt))
        except RangeError as e:
            raise ExitError(f"degree-0 flow leaves the box at t = {t:.6g}: {e}", float(t)) from None
        A = A + (k1 + k2 * 2 + k3 * 2 + k4) * (dt / 6)
        slices.append(A)
        vert.append(Hf(times[s + 1]))
    try:
        check_range(dg, A)
    except RangeError as e:
        raise ExitError(f"degree-0 flow leaves the box at t = {t_end:.6g}: {e}", float(t_end)) from None
    return CylinderForm(times, slices, vert)
