import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmanforge.builtins import builtin
from fmanforge.chart import Chart, DomainMostlySingular
from fmanforge.eventual import dualize, invertibility_guard
from fmanforge.fmanifold import FPatch
from fmanforge.metric import (MetricField, PencilDegenerate, almost_compat_residual, bianchi_residual, christoffel,
                              closedness_report, coidentity_of, compat_g1_residual, compat_g2_residual, curvature,
                              curvature_pencil_residual, intersection_metric, invariance_residual, koszul_residual,
                              lie_metric_fd_residual, metric_from_coidentity, nabla_g_residual, nijenhuis_residual,
                              nondegeneracy_guard, pair_nijenhuis_residual, pencil_metric, q_curvature_crosscheck,
                              riemannian_residual, s_operator_residual, semi_hamiltonian_residual,
                              symmetry_defect_residual, symmetry_residual, total_symmetry_residual,
                              weak_symmetry_residual)

BOX = [(0.5, 1.5)] * 3


def ss(n, box=None):
    return FPatch.semisimple_patch(n, box=box or [(0.5, 1.5)] * n)


def points(F, *fields, count=64):
    return F.sample(count, guards=[invertibility_guard(F, E) for E in fields])


def hertling_with(eps_texts):
    m = builtin("hertling2d")
    F = m.patch
    return F, metric_from_coidentity(F, F.vector(eps_texts))


# fixtures as (patch, g~, eventual identity) triples
def fixture(name):
    m = builtin(name)
    return m.patch, m.metrics["gt"], m.fields[m.defaults["eventual"]]


CLOSED_FIXTURES = ["egorov3", "semiham3", "hertling2d"]


def test_coidentity_metrics_on_semisimple():
    F = ss(3)
    pts = F.sample()
    ident = metric_from_coidentity(F, F.vector(["1", "1", "1"]))
    np.testing.assert_array_equal(ident(pts, 0).val, np.broadcast_to(np.eye(3), (64, 3, 3)))
    egorov = metric_from_coidentity(F, F.vector(["u1", "u2", "u3"]))
    np.testing.assert_array_equal(egorov(pts, 0).val, np.einsum("pi,ij->pij", pts, np.eye(3)))
    assert egorov.invariant


def test_degenerate_coidentity_is_rejected():
    F = ss(2)
    g = metric_from_coidentity(F, F.vector(["1", "0"]))
    with pytest.raises(DomainMostlySingular):
        F.sample(guards=[nondegeneracy_guard(g)])


def test_closedness():
    F = ss(3)
    pts = F.sample()
    assert closedness_report(F.vector(["u1", "u2", "u3"]), pts).max_residual == 0.0
    assert closedness_report(F.vector(["1", "1", "1"]), pts).max_residual == 0.0
    F2 = ss(2)
    g = MetricField.diagonal(F2.chart, ["1", "u1"])
    eps = coidentity_of(g, F2.e)
    np.testing.assert_allclose(eps(F2.sample(), 0).val[:, 1], F2.sample()[:, 0])
    assert closedness_report(eps, F2.sample()).max_residual == pytest.approx(1.0)


def test_invariance():
    F = ss(2, [(-1.0, 1.0)] * 2)
    pts = F.sample()
    assert invariance_residual(MetricField.diagonal(F.chart, ["exp(u2)", "1+u1^2"]), F, pts).max_residual == 0.0
    off = MetricField.from_exprs(F.chart, [["1", "0.3"], ["0.3", "2"]])
    assert invariance_residual(off, F, pts).max_residual == pytest.approx(0.3)
    hF, hg = hertling_with(["x1", "1"])
    assert invariance_residual(hg, hF, hF.sample()).max_residual < 1e-12


def test_total_symmetry_examples():
    F = ss(3)
    pts = F.sample()
    assert total_symmetry_residual(F, metric_from_coidentity(F, F.vector(["u1", "u2", "u3"])), pts).passed
    assert total_symmetry_residual(F, MetricField.diagonal(F.chart, ["1"] * 3), pts).max_residual == 0.0
    F2 = ss(2)
    rep = total_symmetry_residual(F2, MetricField.diagonal(F2.chart, ["1", "u1"]), F2.sample())
    assert rep.max_residual == pytest.approx(0.5)


NONCLOSED = [
    ("diag(1,u1)", lambda: (ss(2), MetricField.diagonal(ss(2).chart, ["1", "u1"]))),
    ("hertling-nonclosed", lambda: hertling_with(["x2", "x1*x2+3"])),
    ("semisimple3-rotated", lambda: (ss(3), MetricField.diagonal(ss(3).chart, ["u2", "u3", "u1"]))),
]
CLOSED = [
    ("egorov3", lambda: fixture("egorov3")[:2]),
    ("semiham3", lambda: fixture("semiham3")[:2]),
    ("hertling2d", lambda: fixture("hertling2d")[:2]),
    ("identity", lambda: (ss(2), MetricField.diagonal(ss(2).chart, ["1", "1"]))),
]


@pytest.mark.parametrize("make", [m for _, m in NONCLOSED + CLOSED], ids=[n for n, _ in NONCLOSED + CLOSED])
def test_closedness_agrees_with_total_symmetry(make):
    F, g = make()
    pts = F.sample(guards=[nondegeneracy_guard(g)])
    closed = closedness_report(coidentity_of(g, F.e), pts, tol=1e-8).passed
    assert closed == total_symmetry_residual(F, g, pts).passed
    assert symmetry_defect_residual(F, g, pts).max_residual < 1e-8


@pytest.mark.parametrize("make", [m for _, m in NONCLOSED + CLOSED], ids=[n for n, _ in NONCLOSED + CLOSED])
def test_engine_self_checks(make):
    F, g = make()
    pts = F.sample(guards=[nondegeneracy_guard(g)])
    assert symmetry_residual(g, pts).passed
    assert nabla_g_residual(g, pts).passed
    assert bianchi_residual(g, pts).passed
    assert koszul_residual(g, pts).passed


def test_weak_symmetry():
    F, g, E = fixture("egorov3")
    pts = points(F, E)
    assert weak_symmetry_residual(F, g, E, pts).passed
    F2 = ss(2)
    g2 = MetricField.diagonal(F2.chart, ["1", "u1"])
    rep = weak_symmetry_residual(F2, g2, F2.e, F2.sample())
    assert rep.max_residual == pytest.approx(0.5)
    const = MetricField.diagonal(F2.chart, ["2", "3"])
    assert weak_symmetry_residual(F2, const, F2.vector(["1", "2"]), F2.sample()).max_residual == 0.0


def test_intersection_metric_diagonal():
    F = ss(3)
    eta = ["u1", "2+u2", "exp(u3)"]
    g_t = MetricField.diagonal(F.chart, eta)
    E = F.vector(["1+u1^2", "exp(u2)", "2+u3"])
    pts = points(F, E)
    g = intersection_metric(F, g_t, E)
    expected = np.einsum("pi,ij->pij", g_t(pts, 0).val.diagonal(axis1=1, axis2=2) / E(pts, 0).val, np.eye(3))
    np.testing.assert_allclose(g(pts, 0).val, expected, rtol=1e-14)
    np.testing.assert_allclose(intersection_metric(F, g_t, F.e)(pts, 2).val, g_t(pts, 0).val)


@pytest.mark.parametrize("name", CLOSED_FIXTURES)
def test_intersection_metric_is_symmetric_and_invariant(name):
    F, g_t, E = fixture(name)
    pts = points(F, E)
    g = intersection_metric(F, g_t, E)
    assert symmetry_residual(g, pts).max_residual < 1e-10
    assert invariance_residual(g, F, pts).passed


def test_flat_metrics():
    F = ss(3)
    pts = F.sample()
    ident = MetricField.diagonal(F.chart, ["1"] * 3)
    assert not christoffel(ident, pts).any() and not curvature(ident, pts).any()
    sep = MetricField.diagonal(F.chart, ["exp(u1)", "1+u2^2", "u3^4"])
    assert np.abs(curvature(sep, pts)).max() < 1e-12


def test_sphere_curvature():
    chart = Chart(("u1", "u2"), [(0.5, 2.5), (-1.0, 1.0)])
    g = MetricField.diagonal(chart, ["1", "sin(u1)^2"])
    from fmanforge.chart import sample_points
    pts = sample_points(chart)
    R = curvature(g, pts)
    gv = g(pts, 0).val
    # K = g(R(d1, d2) d2, d1) / det g, with R(d_i, d_j) d_k = R^l_kij d_l
    K = np.einsum("pl,pl->p", gv[:, 0, :], R[:, :, 1, 0, 1]) / np.linalg.det(gv)
    np.testing.assert_allclose(K, 1.0, atol=1e-6)


def test_nijenhuis():
    F, _, E = fixture("egorov3")
    assert nijenhuis_residual(F, E, F.sample()).max_residual < 1e-9
    F2 = ss(2)
    swapped = F2.vector(["u2", "u1"])
    assert nijenhuis_residual(F2, swapped, F2.sample()).max_residual > 0.1
    assert nijenhuis_residual(F2, F2.vector(["2", "3"]), F2.sample()).max_residual == 0.0


@pytest.mark.parametrize("name", CLOSED_FIXTURES)
def test_constructed_pairs_are_compatible(name):
    F, g_t, E = fixture(name)
    pts = points(F, E)
    g = intersection_metric(F, g_t, E)
    assert almost_compat_residual(g, g_t, pts).passed
    assert compat_g2_residual(g, g_t, pts).passed
    assert compat_g1_residual(g, g_t, pts).passed
    assert curvature_pencil_residual(g, g_t, pts).passed


def test_equal_metrics_form_a_trivial_pencil():
    F, g_t, _ = fixture("semiham3")
    pts = F.sample()
    assert almost_compat_residual(g_t, g_t, pts).max_residual < 1e-12
    assert compat_g2_residual(g_t, g_t, pts).max_residual == 0.0
    assert curvature_pencil_residual(g_t, g_t, pts).max_residual < 1e-12


def test_degenerate_pencil_is_refused():
    F = ss(2)
    g = MetricField.diagonal(F.chart, ["1", "1"])
    with pytest.raises(PencilDegenerate):
        pencil_metric(g, g, -1.0)(F.sample(), 0)


UNRELATED = [
    ("diag(1,1)|diag(1,u1+2)", ["1", "1"], ["1", "u1+2"]),
    ("diag(u1,u2)|diag(1,1)", ["u1", "u2"], ["1", "1"]),
    ("diag(1,u2)|diag(u1,1)", ["1", "u2"], ["u1", "1"]),
]


@pytest.mark.parametrize("g_diag, gt_diag", [(a, b) for _, a, b in UNRELATED], ids=[n for n, _, _ in UNRELATED])
def test_nijenhuis_and_almost_compatibility_agree(g_diag, gt_diag):
    F = ss(2)
    g = MetricField.diagonal(F.chart, g_diag)
    g_t = MetricField.diagonal(F.chart, gt_diag)
    pts = F.sample()
    assert (pair_nijenhuis_residual(g, g_t, pts, tol=1e-8).passed
            == almost_compat_residual(g, g_t, pts).passed)


def _pairs():
    out = []
    for name in CLOSED_FIXTURES:
        F, g_t, E = fixture(name)
        out.append((name, F, intersection_metric(F, g_t, E), g_t, E))
    F = ss(2)
    out.append(("unrelated", F, MetricField.diagonal(F.chart, ["1", "1"]),
                MetricField.diagonal(F.chart, ["1", "u1+2"]), F.e))
    F, g_t, E = fixture("egorov3-curved")
    out.append(("egorov3-curved", F, intersection_metric(F, g_t, E), g_t, E))
    return out


@pytest.mark.parametrize("case", _pairs(), ids=lambda c: c[0])
def test_g1_and_g2_agree(case):
    _, F, g, g_t, E = case
    pts = points(F, E)
    assert compat_g1_residual(g, g_t, pts).passed == compat_g2_residual(g, g_t, pts).passed


def test_riemannian_condition_against_semi_hamiltonian_oracle():
    for name, expected in [("egorov3", True), ("semiham3", True), ("egorov3-curved", False)]:
        F, g_t, _ = fixture(name)
        pts = F.sample()
        r = riemannian_residual(F, g_t, pts)
        s = semi_hamiltonian_residual(g_t, pts)
        assert r.passed == s.passed == expected, name


def test_curved_fixture_residuals_are_frozen():
    F, g_t, _ = fixture("egorov3-curved")
    pts = F.sample()
    assert riemannian_residual(F, g_t, pts).max_residual == pytest.approx(0.18, abs=0.01)
    assert semi_hamiltonian_residual(g_t, pts).max_residual == pytest.approx(0.18, abs=0.01)


def test_riemannian_in_two_dimensions_is_computed():
    F = ss(2)
    rep = riemannian_residual(F, MetricField.diagonal(F.chart, ["1", "u1"]), F.sample())
    assert np.isfinite(rep.max_residual)


@pytest.mark.parametrize("name", ["egorov3", "semiham3", "egorov3-curved", "hertling2d"])
def test_riemannian_condition_transfers_to_dual(name):
    F, g_t, E = fixture(name)
    pts = points(F, E)
    D = dualize(F, E)
    g = intersection_metric(F, g_t, E)
    assert riemannian_residual(F, g_t, pts).passed == riemannian_residual(D, g, pts).passed


@pytest.mark.parametrize("name", CLOSED_FIXTURES + ["egorov3-curved"])
def test_coidentity_is_preserved_by_duality(name):
    F, g_t, E = fixture(name)
    pts = points(F, E)
    D = dualize(F, E)
    g = intersection_metric(F, g_t, E)
    np.testing.assert_allclose(coidentity_of(g, D.e)(pts, 0).val, coidentity_of(g_t, F.e)(pts, 0).val,
                               atol=1e-10)


@pytest.mark.parametrize("name", CLOSED_FIXTURES)
def test_s_operator(name):
    F, g_t, E = fixture(name)
    pts = points(F, E)
    assert s_operator_residual(F, g_t, E, pts).passed
    assert s_operator_residual(F, g_t, F.e, pts).max_residual < 1e-12
    assert lie_metric_fd_residual(g_t, E, pts).passed


@pytest.mark.parametrize("name", CLOSED_FIXTURES)
def test_q_curvature(name):
    F, g_t, E = fixture(name)
    pts = points(F, E, count=16)
    assert q_curvature_crosscheck(F, g_t, E, pts).passed
    assert q_curvature_crosscheck(F, g_t, E, pts, method="jet").max_residual < 1e-9
    assert q_curvature_crosscheck(F, g_t, F.e, pts).max_residual < 1e-8


def test_q_curvature_step_refinement_is_quadratic():
    F, g_t, E = fixture("semiham3")
    pts = points(F, E, count=16)
    exact = q_curvature_crosscheck(F, g_t, E, pts, method="jet").max_residual
    errs = [q_curvature_crosscheck(F, g_t, E, pts, h=h).max_residual - exact for h in (1e-2, 5e-3, 2.5e-3)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.2, 2.0), min_size=3, max_size=3), st.lists(st.integers(1, 3), min_size=3, max_size=3))
def test_separated_coidentities_give_compatible_pairs(scales, powers):
    F = ss(3)
    eps = F.vector([f"{a!r}*u{i + 1}^{p}" for i, (a, p) in enumerate(zip(scales, powers))])
    g_t = metric_from_coidentity(F, eps)
    E = F.vector(["1+u1^2", "exp(u2)", "2+u3"])
    pts = points(F, E, count=16)
    assert closedness_report(coidentity_of(g_t, F.e), pts).passed
    assert total_symmetry_residual(F, g_t, pts).passed
    g = intersection_metric(F, g_t, E)
    assert almost_compat_residual(g, g_t, pts, tol=1e-7).passed
    assert compat_g2_residual(g, g_t, pts, tol=1e-7).passed


def test_semi_hamiltonian_condition_is_empty_in_two_dimensions():
    F = FPatch.semisimple_patch(2, box=[(0.5, 1.5)] * 2)
    rep = semi_hamiltonian_residual(MetricField.diagonal(F.chart, ["1", "u1"]), F.sample())
    assert rep.max_residual == 0.0
