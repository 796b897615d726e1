from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from dgint.mc import (
    ConvergenceError,
    ExitError,
    RangeError,
    evaluate_fq,
    kuranishi,
    kuranishi_inverse,
    linearization_matrix,
    linearized_fq,
    mc_residual,
    propagate_homotopy,
)
from dgint.polyform import PolyForm, d, frame
from dgint.sampling import random_closed_form, random_potential

from helpers import eval_poly


def heisenberg_linear_B(h, a, b, exact=True):
    fr = frame(2, 8)
    return PolyForm.from_terms(fr, h.coords, [(0, (1,), (0, 0), a), (1, (2,), (0, 0), b)], exact=exact)


def test_heisenberg_closed_form_correction(chart):
    h = chart("heisenberg")
    a, b = Fraction(1, 10), Fraction(1, 5)
    B = heisenberg_linear_B(h, a, b)
    sol = kuranishi_inverse(h, B)
    # e3 picks up -(ab/2)(x dy - y dx)
    corr = PolyForm.from_terms(B.frame, h.coords, [(2, (2,), (1, 0), -a * b / 2), (2, (1,), (0, 1), a * b / 2)],
                               exact=True)
    assert sol.form.equals(B + corr)
    r, _ = mc_residual(h, sol.form)
    assert r.is_zero()
    assert kuranishi(h, sol.form).equals(B)


def test_heisenberg_exact_picard_terminates(chart, rng):
    h = chart("heisenberg")
    B = random_closed_form(h, 3, 6, rng).to_exact()
    sol = kuranishi_inverse(h, B)
    assert mc_residual(h, sol.form)[0].is_zero()
    assert kuranishi(h, sol.form).equals(B)


@pytest.mark.parametrize("name", ["so3", "poisson_quadratic", "courant_hflux", "string_su2"])
def test_round_trip(chart, rng, name):
    dg = chart(name)
    for n in (2, 3):
        B = random_closed_form(dg, n, 8, rng)
        sol = kuranishi_inverse(dg, B)
        assert sol.converged
        assert (kuranishi(dg, sol.form) - B).max_coef() < 1e-10
        assert sol.residual_norm < 1e-10


def test_kuranishi_of_mc_is_closed(chart, rng):
    dg = chart("so3")
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    assert d(kuranishi(dg, A)).max_coef() < 1e-12


@given(x0=st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
       p=st.tuples(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2)))
def test_edge_solution_matches_ode(chart, x0, p):
    # on an edge the MC equation for poisson_quadratic is x1' = x1 x2 p2, x2' = -x1 x2 p1
    dg = chart("poisson_quadratic")
    fr = frame(1, 8)
    B = PolyForm.from_terms(fr, dg.coords, [(0, (), (0,), x0[0]), (1, (), (0,), x0[1]),
                                           (2, (1,), (0,), p[0]), (3, (1,), (0,), p[1])])
    A = kuranishi_inverse(dg, B).form
    ode = solve_ivp(lambda t, x: [x[0] * x[1] * p[1], -x[0] * x[1] * p[0]], (0, 1), list(x0),
                    dense_output=True, rtol=1e-12, atol=1e-14)
    for t in (0.0, 0.3, 0.7, 1.0):
        ref = ode.sol(t)
        assert abs(eval_poly(fr, A.coef[0], (), [t]) - ref[0]) < 1e-10
        assert abs(eval_poly(fr, A.coef[1], (), [t]) - ref[1]) < 1e-10


def test_not_closed_rejected(chart):
    dg = chart("so3")
    fr = frame(2, 4)
    B = PolyForm.from_terms(fr, dg.coords, [(0, (1,), (0, 1), 0.1)])
    with pytest.raises(ValueError, match="not closed"):
        kuranishi_inverse(dg, B)


def test_large_data_diverges(chart, rng):
    dg = chart("so3")
    B = d(random_potential(dg, 2, 8, rng, scale=20.0))
    with pytest.raises(ConvergenceError) as exc:
        kuranishi_inverse(dg, B, max_iter=60)
    assert exc.value.history


def test_range_error(chart):
    dg = chart("poisson_const")
    fr = frame(1, 2)
    A = PolyForm.from_terms(fr, dg.coords, [(0, (), (0,), 3.0)])
    with pytest.raises(RangeError):
        evaluate_fq(dg, A)


def test_linearization_matches_finite_difference(chart, rng):
    dg = chart("so3")
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    u = random_closed_form(dg, 2, 8, rng)
    eps = 1e-6
    fd = (evaluate_fq(dg, A + u * eps) - evaluate_fq(dg, A - u * eps)) * (0.5 / eps)
    lin = linearized_fq(dg, A, u)
    assert (fd - lin).max_coef() < 1e-8
    M = linearization_matrix(dg, A)
    assert np.allclose(M @ u.coef.reshape(-1), lin.coef.reshape(-1), atol=1e-14)


def test_propagation_preserves_mc(chart, rng):
    dg = chart("so3")
    A0 = kuranishi_inverse(dg, d(random_potential(dg, 2, 8, rng, 0.01, max_degree=1))).form
    H = random_potential(dg, 2, 8, rng, 3.0, max_degree=0)
    cyl = propagate_homotopy(dg, A0, H, steps=64)
    assert len(cyl.slices) == 65
    assert cyl.residual_norms(dg).max() < 1e-10
    assert (cyl.final - A0).max_coef() > 1e-3


def test_propagation_rejects_wrong_degree(chart, rng):
    dg = chart("so3")
    A0 = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    with pytest.raises(ValueError):
        propagate_homotopy(dg, A0, A0, steps=4)


def test_propagation_exit(chart):
    dg = chart("poisson_const")
    fr = frame(1, 8)
    A0 = PolyForm.zero(fr, dg.coords)
    H = PolyForm.from_terms(fr, dg.coords, [(3, (), (0,), 5.0)])
    with pytest.raises(ExitError) as exc:
        propagate_homotopy(dg, A0, H, steps=40)
    assert 0.0 < exc.value.time < 1.0
