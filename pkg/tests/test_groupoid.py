from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgint.graded import ChartError, GradedPolynomial
from dgint.groupoid import (
    ChartMap,
    RetractionError,
    SingularJacobianError,
    bch_product,
    constant_element,
    curvature,
    curvature_jacobian,
    divide_left,
    divide_right,
    edge_vector,
    element_from_vector,
    gauge_flow_retract,
    horn_fill_ks,
    associativity_defect,
    multiply,
    pushforward_ks,
    reconstruct,
    solve_element,
    tangent,
    vertex_values,
)
from dgint.mc import kuranishi_inverse
from dgint.polyform import frame
from dgint.sampling import random_closed_form, random_point
from dgint.simplicial import COCHAIN_OPS, WhitneyCochain, cochain_slots, dupont_gauge, whitney_project

from helpers import bch_matrix_product, heis_hat, heis_vee, so3_hat, so3_vee

small = st.floats(-0.1, 0.1)
vec3 = st.tuples(small, small, small)


def test_reconstruct_exact_heisenberg(chart):
    h = chart("heisenberg")
    c = WhitneyCochain.from_dict(2, h.coords, {((0, 1), 0): Fraction(1, 3), ((1, 2), 1): Fraction(1, 5),
                                               ((0, 2), 2): Fraction(-1, 7)}, exact=True)
    g = reconstruct(h, c, D=4)
    assert g.form.exact
    assert np.array_equal(whitney_project(g.form, 0).values, c.values)
    assert dupont_gauge(g.form).is_zero()


def test_reconstruct_projects_back(chart, rng):
    dg = chart("so3")
    c = WhitneyCochain(2, dg.coords, rng.uniform(-0.1, 0.1, len(cochain_slots(2, dg.coords))))
    g = reconstruct(dg, c)
    assert np.abs(whitney_project(g.form, 0).values - c.values).max() < 1e-12
    assert g.gauge_defect_norm < 1e-13


def test_accepted_elements_have_zero_curvature(chart, rng):
    dg = chart("so3")
    c = WhitneyCochain(2, dg.coords, rng.uniform(-0.1, 0.1, len(cochain_slots(2, dg.coords))))
    g = solve_element(dg, c)
    assert g.accepted(1e-10)
    assert curvature(dg, g.cochain).max_abs() < 1e-12


def test_tangent_matches_finite_difference(chart, rng):
    dg = chart("poisson_quadratic")
    size = len(cochain_slots(2, dg.coords))
    c = constant_element(dg, 2, random_point(dg, rng)).cochain
    c = c + WhitneyCochain(2, dg.coords, rng.uniform(-0.05, 0.05, size))
    dc = WhitneyCochain(2, dg.coords, rng.uniform(-1, 1, size))
    g = reconstruct(dg, c)
    u = tangent(dg, g.form, dc.to_form(g.form.frame))
    eps = 1e-6
    fd = (reconstruct(dg, c + dc * eps).form - reconstruct(dg, c - dc * eps).form) * (0.5 / eps)
    assert (fd - u).max_coef() < 1e-7


def test_curvature_jacobian_matches_finite_difference(chart, rng):
    dg = chart("so3")
    size = len(cochain_slots(2, dg.coords))
    c = WhitneyCochain(2, dg.coords, rng.uniform(-0.1, 0.1, size))
    g = reconstruct(dg, c)
    free = list(range(size))
    eqs = list(range(len(cochain_slots(2, dg.coords, 1))))
    J = curvature_jacobian(dg, g.form, free, eqs)
    eps = 1e-6
    for q in (0, 4, size - 1):
        e = WhitneyCochain.zero(2, dg.coords)
        e.values[q] = eps
        fd = (curvature(dg, c + e).values - curvature(dg, c - e).values) / (2 * eps)
        assert np.abs(fd[eqs] - J[:, q]).max() < 1e-7


@given(a=vec3, b=vec3)
def test_heisenberg_product_is_truncated_bch(chart, a, b):
    h = chart("heisenberg")
    p = edge_vector(multiply(h, element_from_vector(h, a), element_from_vector(h, b)))
    assert np.abs(p - bch_matrix_product(heis_hat, heis_vee, a, b)).max() < 1e-12


@given(a=vec3, b=vec3)
def test_so3_product_matches_rotation_matrices(chart, a, b):
    dg = chart("so3")
    p = edge_vector(multiply(dg, element_from_vector(dg, a), element_from_vector(dg, b)))
    assert np.abs(p - bch_matrix_product(so3_hat, so3_vee, a, b)).max() < 1e-8


@given(a=vec3, b=vec3)
def test_bch_ode_matches_matrix_oracle(chart, a, b):
    f = chart("so3").bracket_constants()
    assert np.abs(bch_product(f, a, b) - bch_matrix_product(so3_hat, so3_vee, a, b)).max() < 1e-12


def test_unit_and_inverses(chart):
    dg = chart("so3")
    a = element_from_vector(dg, [0.05, -0.1, 0.02])
    one = element_from_vector(dg, [0.0, 0.0, 0.0])
    assert np.abs(edge_vector(multiply(dg, a, one)) - edge_vector(a)).max() < 1e-14
    assert np.abs(edge_vector(multiply(dg, one, a)) - edge_vector(a)).max() < 1e-14
    inv = divide_left(dg, a, one)
    assert np.abs(edge_vector(inv) + edge_vector(a)).max() < 1e-12
    b = element_from_vector(dg, [-0.03, 0.04, 0.08])
    ab = multiply(dg, a, b)
    assert np.abs(edge_vector(divide_left(dg, a, ab)) - edge_vector(b)).max() < 1e-12
    assert np.abs(edge_vector(divide_right(dg, ab, b)) - edge_vector(a)).max() < 1e-12


@pytest.mark.parametrize("name,tol", [("heisenberg", 1e-14), ("so3", 1e-10)])
def test_associativity(chart, name, tol):
    dg = chart(name)
    a, b, c = (element_from_vector(dg, v) for v in ([0.1, -0.05, 0.02], [0.03, 0.08, -0.1], [-0.07, 0.02, 0.05]))
    res = associativity_defect(dg, a, b, c)
    assert res["free_unknowns"] == 0
    assert res["product_difference"] < tol
    assert res["horn_curvature"] < tol


def test_groupoid_products_with_base(chart, rng):
    # on a Lie algebroid with a base the source of b must be the target of a
    dg = chart("poisson_quadratic")
    x = random_point(dg, rng)
    a = element_from_vector(dg, [0.05, -0.02], x)
    b = element_from_vector(dg, [0.01, 0.03], vertex_values(a, 1))
    p = multiply(dg, a, b)
    assert np.abs(vertex_values(p, 0) - x).max() < 1e-14
    assert np.abs(vertex_values(p, 1) - vertex_values(b, 1)).max() < 1e-12
    assert p.mc_residual_norm < 1e-10


@pytest.mark.parametrize("name,n,horns", [("so3", 2, (0, 1, 2)), ("string_su2", 3, (1,))])
def test_unique_fill_from_different_starts(chart, rng, name, n, horns):
    dg = chart(name)
    c = WhitneyCochain(n, dg.coords, rng.uniform(-0.05, 0.05, len(cochain_slots(n, dg.coords))))
    g = solve_element(dg, c)
    for k in horns:
        faces = [None if j == k else g.cochain.face(j) for j in range(n + 1)]
        first = horn_fill_ks(dg, faces, k)
        assert first.unknowns > 0
        assert np.abs(first.element.cochain.values - g.cochain.values).max() < 1e-11
        start = rng.uniform(-0.05, 0.05, first.unknowns)
        other = horn_fill_ks(dg, faces, k, start=start).element.cochain.values
        assert np.abs(other - g.cochain.values).max() < 1e-11


def test_singular_jacobian_reported(chart):
    dg = chart("so3")
    a = element_from_vector(dg, [0.1, 0.0, 0.0])
    b = element_from_vector(dg, [0.0, 0.1, 0.0])
    with pytest.raises(SingularJacobianError):
        horn_fill_ks(dg, [b, None, a], 1, cond_max=0.5)


def test_non_unique_fill_for_low_dimension(chart, rng):
    # ell = 2: the 2-horn Jacobian is rank deficient and fillers form a family
    dg = chart("courant_hflux")
    x = random_point(dg, rng)
    a = element_from_vector(dg, [0.02, 0.0, -0.01, 0.0, 0.01, 0.0], x)
    b = element_from_vector(dg, [0.0, 0.01, 0.0, 0.02, 0.0, 0.0], vertex_values(a, 1))
    fill = horn_fill_ks(dg, [b, None, a], 1)
    g = fill.element
    assert g.mc_residual_norm < 1e-10
    free = [q for q, (I, _) in enumerate(g.cochain.slots()) if I in ((0, 2), (0, 1, 2))]
    eqs = [q for q, (I, _) in enumerate(cochain_slots(2, dg.coords, 1)) if I in ((0, 2), (0, 1, 2))]
    J = curvature_jacobian(dg, g.form, free, eqs)
    assert np.linalg.matrix_rank(J, tol=1e-10) < len(free)
    other = horn_fill_ks(dg, [b, None, a], 1, start=g.cochain.values[free] + rng.uniform(-0.01, 0.01, len(free)))
    assert other.element.mc_residual_norm < 1e-10
    assert np.abs(other.element.cochain.values - g.cochain.values).max() > 1e-6


@pytest.mark.parametrize("name", ["heisenberg", "so3", "poisson_quadratic", "courant_std"])
def test_retraction(chart, rng, name):
    dg = chart(name)
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    r = gauge_flow_retract(dg, A)
    assert np.all(np.diff(r.defects) <= 0)
    assert r.defects[-1] < 1e-8
    assert r.element.mc_residual_norm < 1e-9
    again = gauge_flow_retract(dg, r.element.form)
    assert (again.element.form - r.element.form).max_coef() < 1e-8


def test_retraction_fixes_gauge_fixed_elements(chart, rng):
    dg = chart("so3")
    c = WhitneyCochain(2, dg.coords, rng.uniform(-0.1, 0.1, len(cochain_slots(2, dg.coords))))
    g = solve_element(dg, c)
    r = gauge_flow_retract(dg, g.form)
    assert (r.element.form - g.form).max_coef() <= 1e-12


def test_retraction_failure_reported(chart, rng):
    dg = chart("so3")
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, rng)).form
    with pytest.raises(RetractionError):
        gauge_flow_retract(dg, A, tau_max=1.0)


def test_pushforward_identity_is_exact(chart):
    h = chart("heisenberg")
    a = element_from_vector(h, [0.05, -0.03, 0.02])
    same = pushforward_ks(ChartMap.identity(h), a)
    assert np.array_equal(same.form.coef, a.form.coef)
    assert np.array_equal(same.cochain.values, a.cochain.values)


def test_pushforward_rescaling_intertwines(chart):
    h = chart("heisenberg")
    phi = ChartMap.linear(h, h, [[2, 0, 0], [0, 3, 0], [0, 0, 6]])
    a = element_from_vector(h, [0.05, -0.03, 0.02])
    b = element_from_vector(h, [0.01, 0.04, -0.03])
    lhs = pushforward_ks(phi, multiply(h, a, b))
    rhs = multiply(h, pushforward_ks(phi, a), pushforward_ks(phi, b))
    assert np.abs(edge_vector(lhs) - edge_vector(rhs)).max() < 1e-12
    assert np.abs(edge_vector(pushforward_ks(phi, a)) - [0.1, -0.09, 0.12]).max() < 1e-14


def test_quotient_to_abelian(chart):
    h, ab = chart("heisenberg"), chart("abelian2")
    q = ChartMap.linear(h, ab, [[1, 0, 0], [0, 1, 0]])
    a = element_from_vector(h, [0.05, -0.03, 0.02])
    b = element_from_vector(h, [0.01, 0.04, -0.03])
    p = edge_vector(pushforward_ks(q, multiply(h, a, b)))
    assert np.abs(p - [0.06, 0.01]).max() < 1e-14


def test_chart_map_validation(chart):
    h = chart("heisenberg")
    with pytest.raises(ChartError, match="intertwine"):
        ChartMap.linear(h, h, [[2, 0, 0], [0, 3, 0], [0, 0, 1]])
    with pytest.raises(ChartError):
        ChartMap.build(h, h, [GradedPolynomial.var(h.coords, 0)])
    sq = GradedPolynomial.var(h.coords, 0) * GradedPolynomial.var(h.coords, 1)
    with pytest.raises(ChartError, match="degree"):
        ChartMap.build(h, h, [sq, sq, sq])
    with pytest.raises(ChartError):
        pushforward_ks(ChartMap(h, h, ChartMap.identity(h).images), element_from_vector(h, [0, 0, 0]))


def test_face_of_element(chart, rng):
    dg = chart("so3")
    c = WhitneyCochain(2, dg.coords, rng.uniform(-0.1, 0.1, len(cochain_slots(2, dg.coords))))
    g = solve_element(dg, c)
    for i in range(3):
        f = g.face(dg, i)
        assert np.array_equal(f.cochain.values, COCHAIN_OPS.face(g.cochain, i).values)
        assert f.mc_residual_norm < 1e-10
