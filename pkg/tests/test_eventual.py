import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmanforge.builtins import builtin
from fmanforge.chart import DomainMostlySingular
from fmanforge.eventual import (DecompositionDefect, char_residual, commutator_with_unity, decompose_on_product,
                                dual_unity_residual, dualize, ev_bracket, ev_product, invert_field,
                                invertibility_guard, involution_residual, power, power_bracket_residual,
                                weak_vector, weak_vector_residual)
from fmanforge.fmanifold import FPatch, algebra_residual, hm_residual, mult_at, product_patch
from fmanforge.jet import SingularSystem

SEPARATED = ["1+u1^2", "exp(u2)", "2+u3"]


@pytest.fixture(scope="module")
def ss3():
    return FPatch.semisimple_patch(3)


@pytest.fixture(scope="module")
def hert():
    return builtin("hertling2d")


def sample(F, E, count=64):
    return F.sample(count, guards=[invertibility_guard(F, E)])


def test_constant_inverse_on_semisimple():
    F = FPatch.semisimple_patch(2)
    inv = invert_field(F, F.vector(["2", "4"]))
    np.testing.assert_allclose(inv(F.sample(4), 2).val, [[0.5, 0.25]] * 4)


def test_inverse_of_unity_is_unity(hert):
    F = hert.patch
    np.testing.assert_allclose(invert_field(F, F.e)(F.sample(), 0).val, F.e(F.sample(), 0).val, atol=1e-15)


def test_inverse_on_nilpotent_patch_matches_closed_form(hert):
    F, E = hert.patch, hert.fields["E1"]
    pts = sample(F, E)
    got = invert_field(F, E)(pts, 2)
    x1, x2 = pts.T
    f1, f2 = 1 + x1 ** 2, x1 * x2
    np.testing.assert_allclose(got.val, np.c_[1 / f1, -f2 / f1 ** 2], rtol=1e-13)
    prod = mult_at(F, E, invert_field(F, E))(pts, 2)
    np.testing.assert_allclose(prod.val, F.e(pts, 0).val, atol=1e-12)
    assert np.abs(prod.grad).max() < 1e-12 and np.abs(prod.hess).max() < 1e-11


def test_singular_candidate_rejects_points():
    F = FPatch.semisimple_patch(2)
    E = F.vector(["u1", "1"])
    with pytest.raises(SingularSystem):
        invert_field(F, E)(np.array([[0.0, 0.3]]), 0)
    pts = sample(F, E)
    assert np.all(np.abs(pts[:, 0]) > 0)


def test_mostly_singular_candidate():
    F = FPatch.semisimple_patch(1)
    with pytest.raises(DomainMostlySingular):
        F.sample(64, guards=[invertibility_guard(F, F.vector(["0*u1"]))])


def test_separated_field_is_eventual(ss3):
    assert char_residual(ss3, ss3.vector(SEPARATED), ss3.sample()).max_residual < 1e-9


def test_cross_dependent_field_is_not_eventual():
    F = FPatch.semisimple_patch(2)
    rep = char_residual(F, F.vector(["1+u2^2", "1"]), F.sample())
    # frozen from direct evaluation on the unit box
    assert rep.max_residual == pytest.approx(1.97, abs=0.01)
    assert rep.max_residual > 0.1


@pytest.mark.parametrize("d", [1.0, 2.0, 0.5])
def test_invertible_euler_fields_are_eventual(d):
    F = FPatch.semisimple_patch(3, box=[(0.5, 1.5)] * 3)
    E = F.vector([f"{d!r}*u{i + 1}" for i in range(3)])
    assert char_residual(F, E, sample(F, E)).max_residual < 1e-9


def test_weak_vector(ss3):
    pts = ss3.sample()
    E = ss3.vector(["u1", "u2", "u3"])
    np.testing.assert_allclose(weak_vector(ss3, E)(pts, 0).val, np.ones((64, 3)), atol=1e-14)
    assert not weak_vector(ss3, ss3.e)(pts, 0).val.any()


def test_weak_vector_on_nilpotent_patch():
    F = builtin("hertling2d").patch
    E = F.vector(["1", "x1^2*x2+sin(x1)"])
    rep = weak_vector_residual(F, E, F.sample())
    assert rep.max_residual < 1e-9
    v = commutator_with_unity(F, E)(F.sample(), 0).val
    assert not v[:, 0].any() and np.abs(v[:, 1]).max() > 0.1


def test_dual_multiplication_is_reciprocal_diagonal(ss3):
    E = ss3.vector(SEPARATED)
    D = dualize(ss3, E)
    pts = sample(ss3, E)
    f = E(pts, 0).val
    expected = np.zeros((64, 3, 3, 3))
    for i in range(3):
        expected[:, i, i, i] = 1 / f[:, i]
    np.testing.assert_allclose(D.c(pts, 0).val, expected, atol=1e-15)


@pytest.mark.parametrize("name", ["semisimple3", "hertling2d", "egorov3"])
def test_dual_is_f_manifold_with_unity_E(name):
    m = builtin(name)
    F, E = m.patch, m.fields[m.defaults["eventual"]]
    D = dualize(F, E)
    pts = sample(F, E)
    assert hm_residual(D, pts).passed
    assert algebra_residual(D, pts).passed
    assert dual_unity_residual(D, pts).max_residual < 1e-10
    assert involution_residual(F, E, pts).max_residual < 1e-9
    assert char_residual(D, F.e, pts).passed


@pytest.mark.parametrize("name", ["semisimple2", "semisimple3", "semisimple4", "hertling2d", "egorov3"])
def test_inverse_of_eventual_identity_is_eventual(name):
    m = builtin(name)
    F, E = m.patch, m.fields[m.defaults["eventual"]]
    pts = sample(F, E)
    assert char_residual(F, E, pts).passed
    assert char_residual(F, invert_field(F, E), pts).passed


def test_products_of_eventual_identities(ss3):
    E1, E2 = ss3.vector(SEPARATED), ss3.vector(["exp(u1)", "2+u2^2", "1/(2+u3)"])
    P = ev_product(ss3, E1, E2)
    pts = ss3.sample()
    np.testing.assert_allclose(P(pts, 0).val, E1(pts, 0).val * E2(pts, 0).val)
    assert char_residual(ss3, P, pts).passed
    Id = ev_product(ss3, E1, invert_field(ss3, E1))
    assert char_residual(ss3, Id, pts).passed
    assert np.abs(commutator_with_unity(ss3, Id)(pts, 0).val).max() < 1e-12


def test_bracket_of_eventual_identities_in_one_dimension():
    F = FPatch.semisimple_patch(1, box=[(-1.0, 0.5)])
    f, g = F.vector(["1+u1^2"]), F.vector(["exp(u1)"])
    B = ev_bracket(f, g)
    pts = F.sample()
    u = pts[:, 0]
    np.testing.assert_allclose(B(pts, 0).val[:, 0], np.exp(u) * (1 - u) ** 2, rtol=1e-13)
    assert char_residual(F, B, sample(F, B)).passed


@pytest.mark.parametrize("n, m", [(0, 1), (-1, 0), (1, 2), (2, -1), (-2, 3)])
def test_power_bracket_identity(n, m):
    F = FPatch.semisimple_patch(3, box=[(0.5, 1.5)] * 3)
    E = F.vector(["u1", "u2", "u3"])
    rep = power_bracket_residual(F, E, n, m, sample(F, E), tol=1e-8)
    assert rep.passed


def test_power_zero_is_unity_and_negative_powers_invert(ss3):
    E = ss3.vector(SEPARATED)
    pts = ss3.sample()
    np.testing.assert_array_equal(power(ss3, E, 0)(pts, 0).val, ss3.e(pts, 0).val)
    np.testing.assert_allclose(power(ss3, E, -2)(pts, 0).val, E(pts, 0).val ** -2.0, rtol=1e-13)


def _two_factor():
    F1 = FPatch.semisimple_patch(2, box=[(0.5, 1.5)] * 2)
    F2 = builtin("hertling2d").patch
    return F1, F2, product_patch(F1, F2)


def test_decomposition_recovers_factor_identities():
    F1, F2, P = _two_factor()
    E = P.vector(["1+u1^2", "exp(u2)", "1+x1^2", "x1*x2"])
    pts = sample(P, E)
    dec = decompose_on_product(P, E, pts)
    assert dec.cross.max_residual < 1e-9
    assert all(r.passed for r in dec.certified)
    np.testing.assert_allclose(dec.parts[0](pts[:, :2], 0).val, E(pts, 0).val[:, :2], rtol=1e-14)
    np.testing.assert_allclose(dec.parts[1](pts[:, 2:], 0).val, E(pts, 0).val[:, 2:], rtol=1e-14)


def test_decomposition_of_unity():
    F1, F2, P = _two_factor()
    pts = P.sample()
    dec = decompose_on_product(P, P.e, pts)
    np.testing.assert_allclose(dec.parts[0](pts[:, :2], 0).val, F1.e(pts[:, :2], 0).val)
    np.testing.assert_allclose(dec.parts[1](pts[:, 2:], 0).val, F2.e(pts[:, 2:], 0).val)


@pytest.mark.parametrize("eps", [1e-3, 1e-2, 1e-1])
def test_cross_term_raises_defect_proportional_to_size(eps):
    F1, F2, P = _two_factor()
    E = P.vector([f"1+u1^2+{eps!r}*x1", "exp(u2)", "1+x1^2", "x1*x2"])
    with pytest.raises(DecompositionDefect) as info:
        decompose_on_product(P, E, sample(P, E))
    assert info.value.residual == pytest.approx(eps, rel=1e-12)


def test_duality_commutes_with_products():
    F1, F2, P = _two_factor()
    E1, E2 = F1.vector(["1+u1^2", "exp(u2)"]), F2.vector(["1+x1^2", "x1*x2"])
    E = P.vector(["1+u1^2", "exp(u2)", "1+x1^2", "x1*x2"])
    pts = sample(P, E, 32)
    lhs = dualize(P, E).c(pts, 0).val
    rhs = product_patch(dualize(F1, E1), dualize(F2, E2)).c(pts, 0).val
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_separated_families_certify_and_close_under_products(scales, shifts):
    F = FPatch.semisimple_patch(3)
    E = F.vector([f"{a!r}*exp({b!r}*u{i + 1})" for i, (a, b) in enumerate(zip(scales, shifts))])
    E2 = F.vector([f"2+sin(u{i + 1})" for i in range(3)])
    pts = F.sample(16)
    assert char_residual(F, E, pts, tol=1e-8).passed
    assert char_residual(F, ev_product(F, E, E2), pts, tol=1e-8).passed
    assert involution_residual(F, E, pts).max_residual < 1e-9
