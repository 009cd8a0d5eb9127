import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmanforge.chart import Chart
from fmanforge.expr import (BinOp, Call, ConjInRealFlavor, Const, Coord, EvalDomainError, ExprSyntaxError, Pow,
                            UnknownIdentifier, parse, to_text)
from oracles import jet_fd_errors

COORDS = ("u1", "u2")
REAL = Chart(COORDS, [(0.5, 1.5)] * 2)
CPLX = Chart(COORDS, [(-0.5, 0.5)] * 2, "complex")


def jet_at(chart, text, point, order=2):
    e = chart.parse(text)
    return e.jet(chart.coordinate_jet(np.atleast_2d(np.asarray(point, dtype=chart.dtype)), order), order)


def test_parse_sum_of_product_and_constant():
    root = parse("u1*u2 + 1", COORDS).root
    assert root == BinOp("+", BinOp("*", Coord(0, "u1"), Coord(1, "u2")), Const(1.0))


def test_parse_power_of_call():
    root = parse("sin(u1)^2", COORDS).root
    assert root == Pow(Call("sin", Coord(0, "u1")), 2.0)


def test_syntax_error_reports_offset_and_expected_tokens():
    with pytest.raises(ExprSyntaxError) as info:
        parse("u1 + * 2", COORDS)
    assert info.value.offset == 5
    assert "identifier" in info.value.expected


def test_offsets_are_bytes():
    with pytest.raises(ExprSyntaxError) as info:
        parse("u1 + é", COORDS)
    assert info.value.offset == 5


@pytest.mark.parametrize("text, exc", [
    ("u3 + 1", UnknownIdentifier),
    ("tan(u1)", UnknownIdentifier),
    ("conj(u1)", ConjInRealFlavor),
    ("u1^u2", ExprSyntaxError),
    ("(u1", ExprSyntaxError),
    ("", ExprSyntaxError),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse(text, COORDS)


def test_conj_allowed_in_complex_flavor():
    assert parse("conj(u1)", COORDS, "complex").has_conj


def test_rational_and_negative_exponents():
    j = jet_at(REAL, "u1^(1/2) + u2^-1", [4.0, 2.0], 0)
    assert j.val[0] == pytest.approx(2.5)


def test_negation_binds_to_base():
    # base := '-' base, so the power applies to the negated base
    assert jet_at(REAL, "-u1^2", [3.0, 1.0], 0).val[0] == pytest.approx(9.0)


def test_bilinear_jet():
    j = jet_at(REAL, "u1*u2", [2.0, 3.0])
    assert j.val[0] == 6.0
    np.testing.assert_array_equal(j.grad[0], [3.0, 2.0])
    np.testing.assert_array_equal(j.hess[0], [[0.0, 1.0], [1.0, 0.0]])


def test_exp_jet():
    c = Chart(("u1",), [(-1, 1)])
    j = jet_at(c, "exp(u1)", [0.0])
    assert (j.val[0], j.grad[0, 0], j.hess[0, 0, 0]) == (1.0, 1.0, 1.0)


def test_sqrt_jet():
    c = Chart(("u1",), [(1, 5)])
    j = jet_at(c, "sqrt(u1)", [4.0])
    assert j.val[0] == pytest.approx(2.0)
    assert j.grad[0, 0] == pytest.approx(0.25)
    assert j.hess[0, 0, 0] == pytest.approx(-0.03125)


def test_wirtinger_modulus_squared():
    c = Chart(("u1",), [(-2, 2)], "complex")
    j = jet_at(c, "u1*conj(u1)", [1 + 1j])
    assert j.val[0] == pytest.approx(2.0)
    assert j.grad[0, 0] == pytest.approx(1 - 1j)
    assert j.grad[0, 1] == pytest.approx(1 + 1j)
    assert j.hess[0, 0, 1] == pytest.approx(1.0)


def test_holomorphic_square_has_no_antiholomorphic_part():
    c = Chart(("u1",), [(-2, 2)], "complex")
    j = jet_at(c, "u1^2", [1j])
    assert j.grad[0, 0] == pytest.approx(2j)
    assert j.grad[0, 1] == 0 and np.all(j.hess[0, 1, :] == 0) and np.all(j.hess[0, :, 1] == 0)


def test_log_modulus_matches_finite_differences():
    c = Chart(("u1",), [(-3, 3)], "complex")
    e = c.parse("log(u1*conj(u1))")
    fn = lambda p, order=2: e.jet(c.coordinate_jet(p, order), order)
    g_err, h_err = jet_fd_errors(fn, np.array([[2.0 + 0j]]))
    assert g_err < 1e-6 and h_err < 1e-6
    # d dbar log|u|^2 vanishes away from the origin
    assert abs(fn(np.array([[2.0 + 0j]])).hess[0, 0, 1]) < 1e-14


@pytest.mark.parametrize("text, point", [
    ("log(u1 - 1)", [0.5, 1.0]),
    ("sqrt(u2 - 2)", [1.0, 1.0]),
    ("1/(u1 - u2)", [1.0, 1.0]),
])
def test_domain_errors(text, point):
    with pytest.raises(EvalDomainError):
        jet_at(REAL, text, point)


def test_hessian_is_exactly_symmetric():
    j = jet_at(REAL, "sin(u1*u2)*exp(u1)/u2^3", [[0.7, 1.1], [1.3, 0.6]])
    np.testing.assert_array_equal(j.hess, np.swapaxes(j.hess, -1, -2))


def test_symbolic_derivative_matches_jet():
    e = REAL.parse("sin(u1*u2)*u1^3 + exp(u2)/u1")
    pts = np.array([[0.8, 1.2], [1.4, 0.6]])
    X = REAL.coordinate_jet(pts, 1)
    for k in range(2):
        np.testing.assert_allclose(e.diff(k).jet(X, 0).val, e.jet(X, 1).grad[:, k], rtol=1e-13)


# --------------------------------------------------------------------------
# properties

_leaf = st.one_of(st.sampled_from(["u1", "u2"]), st.sampled_from(["0.5", "2", "1.25", "3"]))


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.sampled_from(["2", "3", "-1", "(1/2)"])).map(lambda t: f"({t[0]})^{t[1]}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        children.map(lambda c: f"-{c}"),
    )


expressions = st.recursive(_leaf, _combine, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_printer_round_trip(text):
    e = parse(text, COORDS)
    again = parse(to_text(e.root), COORDS)
    assert again.root == e.root


@settings(max_examples=60, deadline=None)
@given(expressions)
def test_jets_agree_with_finite_differences(text):
    e = parse(text, COORDS)
    pts = np.array([[1.1, 0.7], [0.6, 1.3]])
    fn = lambda p, order=2: e.jet(REAL.coordinate_jet(p, order), order)
    try:
        fn(pts)
    except EvalDomainError:
        return
    g_err, h_err = jet_fd_errors(fn, pts)
    assert g_err < 1e-6 and h_err < 1e-6


@settings(max_examples=60, deadline=None)
@given(expressions, st.integers(0, 2**31 - 1))
def test_conj_free_expressions_are_holomorphic(text, seed):
    e = parse(text, COORDS, "complex")
    pts = CPLX.draw(100, np.random.default_rng(seed))
    try:
        j = e.jet(CPLX.coordinate_jet(pts, 2), 2)
    except EvalDomainError:
        return
    assert np.all(j.grad[:, 2:] == 0)
    assert np.all(j.hess[:, 2:, :] == 0) and np.all(j.hess[:, :, 2:] == 0)
