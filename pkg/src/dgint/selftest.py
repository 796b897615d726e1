"""A compact invariant suite run by ``dgint selftest``.

Every line of the report is derived from seeded computations only (no
timings), so two runs with the same seed give identical text.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import charts
from .graded import check_q2
from .groupoid import (
    ChartMap,
    bch_product,
    edge_vector,
    element_from_vector,
    gauge_flow_retract,
    multiply,
    pushforward_ks,
)
from .mc import kuranishi, kuranishi_inverse
from .polyform import frame
from .sampling import random_closed_form, random_polynomial_form
from .simplicial import FORM_OPS, HornData, gauge, horn_fill_big
from .symplectic import d_partial_identity, grassmann_pairings, kernel_matches_partial_closed, nondegeneracy_check


def _gauge_ok(n: int, rng) -> bool:
    fr = frame(n, 4)
    g = gauge(fr)
    S, P, Dm = g.s.exact, g.p.exact, fr.d_op.exact
    X = random_polynomial_form(fr, 2, rng, max_degree=1)
    sx = S.apply(X)
    ok = np.all(Dm.apply(sx) + S.apply(Dm.apply(X)) == X - P.apply(X))
    ok &= np.all(S.apply(sx) == 0) and np.all(P.apply(sx) == 0) and np.all(S.apply(P.apply(X)) == 0)
    for perm in itertools.permutations(range(n + 1)):
        op = fr.permutation_op(perm).exact
        ok &= np.all(op.apply(sx) == S.apply(op.apply(X)))
    return bool(ok)


def run_selftest(seed: int, rep) -> bool:
    rng = np.random.default_rng(seed)
    results: list[bool] = []

    def record(name: str, ok: bool, **values):
        for key, v in values.items():
            rep.kv(f"{name}.{key}", v)
        rep.kv(name, "PASS" if ok else "FAIL")
        results.append(ok)

    rep.kv("seed", seed)
    for name in charts.VALID:
        dg = charts.load(name)
        record(f"q2.{name}", all(r.is_zero() for r in check_q2(dg)))
    broken = charts.load("broken_jacobi", allow_unchecked=True)
    record("q2.broken_jacobi_detected", any(not r.is_zero() for r in check_q2(broken)))

    record("gauge_identities", all(_gauge_ok(n, rng) for n in (1, 2)))

    worst_rt, worst_mc = 0.0, 0.0
    for name in ("heisenberg", "so3", "courant_std"):
        dg = charts.load(name)
        for _ in range(2):
            B = random_closed_form(dg, 2, 8, rng)
            sol = kuranishi_inverse(dg, B)
            worst_rt = max(worst_rt, (kuranishi(dg, sol.form) - B).max_coef())
            worst_mc = max(worst_mc, sol.residual_norm)
    record("kuranishi_roundtrip", worst_rt <= 1e-10 and worst_mc <= 1e-10, roundtrip=worst_rt, mc_residual=worst_mc)

    dg = charts.load("so3")
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    worst_r, worst_m = 0.0, 0.0
    for k in range(3):
        faces = [None if j == k else FORM_OPS.face(A, j) for j in range(3)]
        fill = horn_fill_big(dg, HornData(2, k, faces))
        worst_r = max(worst_r, fill.restriction_error)
        worst_m = max(worst_m, fill.solution.residual_norm)
    record("kan_filling", worst_r <= 1e-10 and worst_m <= 1e-10, restriction=worst_r, mc_residual=worst_m)

    h = charts.load("heisenberg")
    p = multiply(h, element_from_vector(h, [0.1, 0, 0]), element_from_vector(h, [0, 0.1, 0]))
    dev_h = float(np.max(np.abs(edge_vector(p) - np.array([0.1, 0.1, 0.005]))))
    a, b = rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.2, 0.2, 3)
    q = multiply(dg, element_from_vector(dg, a), element_from_vector(dg, b))
    dev_s = float(np.max(np.abs(edge_vector(q) - bch_product(dg.bracket_constants(), a, b))))
    record("bch", dev_h <= 1e-6 and dev_s <= 1e-3, heisenberg=dev_h, so3=dev_s)

    B = random_closed_form(h, 2, 8, rng)
    r = gauge_flow_retract(h, kuranishi_inverse(h, B).form)
    mono = bool(np.all(np.diff(r.defects) <= 0))
    record("retraction", mono and r.defects[-1] <= 1e-8, final_defect=r.defects[-1])

    g = element_from_vector(h, [0.05, -0.02, 0.01])
    same = pushforward_ks(ChartMap.identity(h), g)
    record("functoriality_identity", bool(np.array_equal(same.form.coef, g.form.coef)))

    agree = all(grassmann_pairings(n).max_disagreement() == 0 for n in (1, 2, 3))
    kern = all(kernel_matches_partial_closed(n) and d_partial_identity(n) for n in (1, 2, 3))
    record("grassmann", agree and kern)
    for name in ("poisson_const", "courant_std"):
        nd = nondegeneracy_check(charts.load(name))
        record(f"nondegenerate.{name}", nd.nondegenerate, rank=nd.rank)

    ok = all(results)
    rep.kv("selftest", "PASS" if ok else "FAIL")
    return ok
