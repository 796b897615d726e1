"""Seeded generators of small test data: points, closed forms, cochains."""

from __future__ import annotations

import numpy as np

from .graded import ChartedDgManifold
from .polyform import PolyForm, d, frame


def random_point(dg: ChartedDgManifold, rng: np.random.Generator, fraction: float = 0.5) -> np.ndarray:
    """A point in the inner part of the box (finite sides scaled by ``fraction``)."""
    c = np.array(dg.box.center(), dtype=float)
    out = c.copy()
    for slot, (lo, hi) in enumerate(zip(dg.box.lo, dg.box.hi)):
        half = (hi - lo) / 2 if np.isfinite(lo) and np.isfinite(hi) else 1.0
        out[slot] = c[slot] + fraction * half * rng.uniform(-1, 1)
    return out


def random_potential(dg: ChartedDgManifold, n: int, D: int, rng: np.random.Generator, scale: float,
                     max_degree: int = 2) -> PolyForm:
    """Random form of total degree -1 with polynomial degree at most ``max_degree``.

    Coefficients of degree 2 and above are damped by 1/10 so that the
    resulting closed forms stay inside the Picard neighborhood at D = 8.
    """
    fr = frame(n, D)
    beta = PolyForm.zero(fr, dg.coords)
    deg = fr.entry_degrees
    for i, di in enumerate(dg.coords.degrees):
        idx = np.nonzero((fr.J_sizes == di - 1) & (deg <= max_degree))[0]
        damp = np.where(deg[idx] <= 1, 1.0, 0.1)
        beta.coef[i, idx] = rng.uniform(-scale, scale, len(idx)) * damp
    return beta


def random_closed_form(dg: ChartedDgManifold, n: int, D: int, rng: np.random.Generator, scale: float = 0.03,
                       point: np.ndarray | None = None) -> PolyForm:
    """x + d(beta): a closed total-degree-0 form near the constant point x."""
    B = d(random_potential(dg, n, D, rng, scale))
    x = random_point(dg, rng) if point is None else point
    for slot, i in enumerate(dg.coords.zero_idx):
        B.coef[i, 0] += x[slot]
    return B


def random_polynomial_form(fr, dim: int, rng: np.random.Generator, max_degree: int, low: int = -3,
                           high: int = 3) -> np.ndarray:
    """Exact integer coefficients of a random form (all form degrees), shape (dim, N)."""
    from fractions import Fraction

    out = np.zeros((dim, fr.N), dtype=object)
    out[...] = 0
    deg = fr.entry_degrees
    for i in range(dim):
        for q in np.nonzero(deg <= max_degree)[0]:
            v = int(rng.integers(low, high + 1))
            if v:
                out[i, q] = Fraction(v)
    return out
