import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgint import charts
from dgint.graded import (
    ChartError,
    ChartParseError,
    GradedCoordSystem,
    GradedPolynomial,
    Q2Violation,
    apply_vector_field,
    check_q2,
    format_dg_spec,
    grade_partial,
    koszul_normalize,
    lie_algebra_fq,
    linearize_fq,
    parse_dg_spec,
    parse_expression,
    substitute,
)

MIXED = GradedCoordSystem(("x", "a", "b", "c", "u"), (0, 1, 1, 2, 3))


def brute_koszul(mono, degrees):
    # sign of the permutation restricted to odd letters, computed from all pairs
    odd = [i for i in mono if degrees[i] % 2]
    if len(set(odd)) != len(odd):
        return 0, ()
    inversions = sum(1 for p, q in itertools.combinations(range(len(mono)), 2)
                     if mono[p] > mono[q] and degrees[mono[p]] % 2 and degrees[mono[q]] % 2)
    return (-1) ** inversions, tuple(sorted(mono))


@given(st.lists(st.integers(1, 4), max_size=6))
def test_koszul_sign_matches_pair_count(mono):
    assert koszul_normalize(mono, MIXED.degrees) == brute_koszul(mono, MIXED.degrees)


def test_koszul_examples():
    degs = (1, 1, 2)
    assert koszul_normalize((1, 0), degs) == (-1, (0, 1))
    assert koszul_normalize((2, 0), degs) == (1, (0, 2))
    assert koszul_normalize((0, 0), degs) == (0, ())
    assert koszul_normalize((2, 2), degs) == (1, (2, 2))


def var(i):
    return GradedPolynomial.var(MIXED, i)


polys = st.lists(
    st.tuples(st.integers(-3, 3), st.lists(st.integers(0, 4), max_size=3)), max_size=4
).map(lambda terms: sum((c * _mono(m) for c, m in terms), GradedPolynomial.zero(MIXED)))


def _mono(m):
    out = GradedPolynomial.const(MIXED, 1)
    for i in m:
        out = out * var(i)
    return out


def homogeneous_parts(p):
    parts = {}
    for (xexp, mono), c in p.terms.items():
        deg = sum(MIXED.degrees[i] for i in mono)
        parts.setdefault(deg, []).append(((xexp, mono), c))
    return {deg: GradedPolynomial(MIXED, t) for deg, t in parts.items()}


@given(polys, polys, st.integers(0, 4))
def test_graded_leibniz(p, q, i):
    lhs = grade_partial(p * q, i)
    rhs = GradedPolynomial.zero(MIXED)
    for deg, pp in homogeneous_parts(p).items():
        sign = -1 if (deg * MIXED.degrees[i]) % 2 else 1
        rhs = rhs + grade_partial(pp, i) * q + sign * (pp * grade_partial(q, i))
    assert lhs == rhs


@given(polys, polys, polys)
def test_algebra_axioms(p, q, r):
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    for dp, pp in homogeneous_parts(p).items():
        for dq, qq in homogeneous_parts(q).items():
            assert pp * qq == (-1) ** (dp * dq) * (qq * pp)


def test_odd_square_vanishes():
    assert (var(1) * var(1)).is_zero()
    assert not (var(3) * var(3)).is_zero()


def test_partial_examples():
    p = var(1) * var(2) * var(0) ** 2
    assert grade_partial(p, 1) == var(2) * var(0) ** 2
    assert grade_partial(p, 2) == -1 * (var(1) * var(0) ** 2)
    assert grade_partial(p, 0) == 2 * (var(0) * var(1) * var(2))
    assert grade_partial(var(3) ** 3, 3) == 3 * var(3) ** 2


@pytest.mark.parametrize("name", charts.VALID)
def test_bundled_charts_square_to_zero(name):
    dg = charts.load(name)
    assert all(r.is_zero() for r in check_q2(dg))


def test_broken_chart_reports_residual():
    with pytest.raises(Q2Violation) as exc:
        charts.load("broken_jacobi")
    assert exc.value.coords
    dg = charts.load("broken_jacobi", allow_unchecked=True)
    res = check_q2(dg)
    assert any(not r.is_zero() for r in res)
    e1, e2, e3 = (GradedPolynomial.var(dg.coords, i) for i in range(3))
    assert res[1] == -1 * (e1 * e2 * e3)


def test_q_squared_via_composition_of_derivations():
    # Q(Q(p)) for a generic p vanishes iff the chart is valid; test on all cubic monomials
    dg = charts.load("string_su2")
    gens = [GradedPolynomial.var(dg.coords, i) for i in range(dg.dim)]
    for i, j in itertools.combinations(range(dg.dim), 2):
        p = gens[i] * gens[j]
        assert apply_vector_field(dg.fq, apply_vector_field(dg.fq, p)).is_zero()


def test_lie_algebra_round_trip():
    so3 = charts.load("so3")
    f = so3.bracket_constants()
    assert lie_algebra_fq(so3.coords, f) == so3.fq
    # [e2, e3] = e1 in the bundled convention
    assert f[0][1][2] == 1 and f[0][2][1] == -1
    with pytest.raises(ChartError):
        charts.load("poisson_const").bracket_constants()


def test_lie_fq_from_structure_constants_squares_to_zero():
    coords = GradedCoordSystem(("a", "b", "c"), (1, 1, 1))
    # sl(2): [h,e] = 2e, [h,f] = -2f, [e,f] = h with (h, e, f) = (a, b, c)
    f = [[[0] * 3 for _ in range(3)] for _ in range(3)]
    f[1][0][1], f[1][1][0] = 2, -2
    f[2][0][2], f[2][2][0] = -2, 2
    f[0][1][2], f[0][2][1] = 1, -1
    fq = lie_algebra_fq(coords, f)
    assert all(apply_vector_field(fq, p).is_zero() for p in fq)


def test_linearization_is_a_differential(chart):
    import numpy as np

    for name in ("poisson_quadratic", "courant_hflux", "affine2"):
        dg = chart(name)
        M = linearize_fq(dg, dg.box.center())
        assert np.abs(M @ M).max() < 1e-13
    with pytest.raises(ChartError):
        linearize_fq(chart("poisson_const"), [5.0, 0.0])


def test_substitute_is_algebra_map():
    images = [var(0) + 1, var(2), var(1), var(3), var(4)]
    p = var(1) * var(2) + var(0) ** 2 * var(3)
    q = var(0) * var(4)
    assert substitute(p * q, images) == substitute(p, images) * substitute(q, images)


def test_parse_expression_rationals():
    p = parse_expression("1/2*x*a - 3*a*b + 0.25*c", MIXED)
    assert p.terms[((1,), (1,))] == Fraction(1, 2)
    assert p.terms[((0,), (1, 2))] == -3
    assert p.terms[((0,), (3,))] == Fraction(1, 4)


@pytest.mark.parametrize(
    "text,line,col",
    [
        ("[coords]\na 1\n[Q]\na = b*\n", 4, 5),
        ("[coords]\na 1\n[Q]\na = a*\n", 4, 7),
        ("[coords]\na 1\n[Q]\na = (a*a\n", 4, 5),
        ("[coords]\nx 0\na 1\n[box]\nx 1 0\n[Q]\nx = a\n", 5, 1),
        ("[coords]\na one\n[Q]\na = 0\n", 2, 3),
        ("[coords]\na 1\n[bogus]\n", 3, 1),
        ("[coords]\na 1\n[Q]\nz = 0\n", 4, 1),
        ("[coords]\na 1\nb 1\n[Q]\na = b\n", 5, 5),
    ],
)
def test_parse_errors_have_positions(text, line, col):
    with pytest.raises(ChartParseError) as exc:
        parse_dg_spec(text)
    assert exc.value.line == line
    assert exc.value.col == col


@pytest.mark.parametrize("name", charts.VALID)
def test_format_round_trip(name):
    dg = charts.load(name)
    again = parse_dg_spec(format_dg_spec(dg))
    assert again.coords == dg.coords
    assert again.fq == dg.fq
    assert again.box == dg.box
    if dg.omega is not None:
        assert again.omega.components == dg.omega.components


def test_coordinate_validation():
    with pytest.raises(ChartError):
        GradedCoordSystem(("a", "a"), (1, 1))
    with pytest.raises(ChartError):
        GradedCoordSystem(("x",), (0,))
    with pytest.raises(ChartError):
        GradedCoordSystem(("a",), (-1,))
