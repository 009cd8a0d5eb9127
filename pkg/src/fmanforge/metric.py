"""Metrics on F-manifold patches: Levi-Civita connections and curvature,
invariant metrics built from coidentities, pencil compatibility and the
structural identities relating the multiplication to the connection.

Conventions:

* ``Gamma[k, i, j] = Gamma^k_ij`` and ``nabla_{d_i} d_j = Gamma^k_ij d_k``.
* ``R[l, k, i, j] = R^l_kij`` with ``R(d_i, d_j) d_k = R^l_kij d_l`` and
  ``R(X, Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y]``.
* On 1-forms, ``(nabla_i dx^c)_b = -Gamma^c_ib`` and
  ``(R(d_i, d_j) dx^c)_b = -R^c_bij``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .chart import Chart, TensorField, VectorField, tensor_from_exprs
from .eventual import commutator_with_unity, invert_field
from .expr import Expr
from .fmanifold import FPatch
from .jet import Jet, einsum, invert_matrix_jet, singular_points
from .report import DEFAULT_TOL, CheckReport, residual_report

DEFAULT_LAMBDAS = (-0.5, 0.3, 2.0)
FD_STEP = 1e-5
FD_TOL = 1e-4


class PencilDegenerate(ArithmeticError):
    def __init__(self, lam: float, points):
        self.lam = lam
        self.points = np.asarray(points)
        super().__init__(f"pencil g* + {lam} g~* is degenerate at {self.points.size} point(s)")


class MetricField(TensorField):
    """A symmetric (0,2)-tensor field ``g_ij`` supplying jets of shape ``(n, n)``."""

    def __init__(self, chart: Chart, fn, exprs=None, label: str = "g", invariant: bool = False):
        super().__init__(chart, fn, (chart.n, chart.n), exprs, label)
        self.invariant = invariant

    @classmethod
    def from_exprs(cls, chart: Chart, rows, label: str = "g") -> "MetricField":
        """``rows`` is a full ``n x n`` symmetric table of expressions or texts."""
        n = chart.n
        table = [[r if isinstance(r, Expr) else chart.parse(str(r)) for r in row] for row in rows]
        if len(table) != n or any(len(r) != n for r in table):
            raise ValueError(f"metric table must be {n}x{n}")
        t = tensor_from_exprs(chart, table, (n, n))
        return cls(chart, t.fn, t.exprs, label)

    @classmethod
    def diagonal(cls, chart: Chart, entries, label: str = "g") -> "MetricField":
        n = chart.n
        zero = Expr.const(0.0, chart.coords, chart.flavor)
        rows = [[zero] * n for _ in range(n)]
        for i, ex in enumerate(entries):
            rows[i][i] = ex if isinstance(ex, Expr) else chart.parse(str(ex))
        return cls.from_exprs(chart, rows, label)

    @classmethod
    def lower_triangle(cls, chart: Chart, entries: dict, label: str = "g") -> "MetricField":
        """``{(i, j): text}`` with ``i >= j``; missing entries are zero."""
        n = chart.n
        zero = Expr.const(0.0, chart.coords, chart.flavor)
        rows = [[zero] * n for _ in range(n)]
        for (i, j), text in entries.items():
            ex = text if isinstance(text, Expr) else chart.parse(str(text))
            rows[i][j] = rows[j][i] = ex
        return cls.from_exprs(chart, rows, label)

    def inverse(self, pts, order: int = 2) -> Jet:
        return invert_matrix_jet(self(pts, order))


def nondegeneracy_guard(g: MetricField):
    return lambda pts: ~singular_points(g(pts, 0).val)


# --------------------------------------------------------------------------
# Levi-Civita data as jets


def christoffel_jet(gj: Jet, ncoord: int) -> Jet:
    """``Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)``, one order below ``gj``."""
    o = gj.order - 1
    dg = gj.d(ncoord)  # dg[a, b, m] = d_m g_ab
    ginv = invert_matrix_jet(gj.truncate(o))
    low = (einsum("jli->lij", dg) + einsum("ilj->lij", dg) - einsum("ijl->lij", dg)) * 0.5
    return einsum("kl,lij->kij", ginv, low)


def riemann_jet(Gj: Jet, ncoord: int) -> Jet:
    """``R^l_kij = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik``."""
    o = Gj.order - 1
    dG = Gj.d(ncoord)  # dG[l, a, b, m] = d_m G^l_ab
    G = Gj.truncate(o)
    return (einsum("ljki->lkij", dG) - einsum("likj->lkij", dG)
            + einsum("lim,mjk->lkij", G, G) - einsum("ljm,mik->lkij", G, G))


class Geometry:
    """Levi-Civita data of one metric at a fixed batch of points."""

    def __init__(self, g: MetricField, pts, order: int = 2):
        self.g = g
        self.pts = np.asarray(pts)
        self.n = g.chart.n
        self.jet = g(self.pts, order)

    @cached_property
    def val(self) -> np.ndarray:
        return self.jet.val

    @cached_property
    def inv_jet(self) -> Jet:
        return invert_matrix_jet(self.jet.truncate(self.jet.order - 1))

    @cached_property
    def inv(self) -> np.ndarray:
        return self.inv_jet.val

    @cached_property
    def gamma_jet(self) -> Jet:
        return christoffel_jet(self.jet, self.n)

    @cached_property
    def gamma(self) -> np.ndarray:
        return self.gamma_jet.val

    @cached_property
    def riemann(self) -> np.ndarray:
        return riemann_jet(self.gamma_jet, self.n).val


def christoffel(g: MetricField, pts) -> np.ndarray:
    return Geometry(g, pts, 1).gamma


def curvature(g: MetricField, pts) -> np.ndarray:
    return Geometry(g, pts, 2).riemann


def nabla_g_residual(g: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    """``nabla_k g_ij = d_k g_ij - Gamma^m_ki g_mj - Gamma^m_kj g_im``."""
    G = Geometry(g, pts, 1)
    dg = G.jet.grad[..., :G.n]
    r = (np.einsum("pijk->pkij", dg) - np.einsum("pmki,pmj->pkij", G.gamma, G.val)
         - np.einsum("pmkj,pim->pkij", G.gamma, G.val))
    return residual_report("nabla-g", r, tol, metric=g.label)


def bianchi_residual(g: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    R = curvature(g, pts)
    cyc = R + np.einsum("plijk->plkij", R) + np.einsum("pljki->plkij", R)
    skew = R + np.swapaxes(R, -1, -2)
    return residual_report("bianchi", np.concatenate(
        [cyc.reshape(len(pts), -1), skew.reshape(len(pts), -1)], axis=1), tol, metric=g.label)


def koszul_residual(g: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    """Cross-check of the 1-form connection against the Koszul formula on coordinate forms.

    For ``alpha = dx^a``, ``beta = dx^b`` (closed) and ``Y = d_j``:
    ``2 g*(nabla_j dx^a, dx^b) = d_j g^ab - g_jm [g* dx^a, g* dx^b]^m``.
    """
    G = Geometry(g, pts, 2)
    n = G.n
    ginv = G.inv_jet
    dginv = ginv.grad[..., :n]  # [P, a, b, m]
    lhs = -2.0 * np.einsum("pcb,pajc->pjab", G.inv, G.gamma)
    # [U_a, U_b]^m with U_a^i = g^ia
    br = (np.einsum("pia,pmbi->pabm", G.inv, dginv) - np.einsum("pib,pmai->pabm", G.inv, dginv))
    rhs = np.einsum("pabj->pjab", dginv) - np.einsum("pjm,pabm->pjab", G.val, br)
    return residual_report("koszul", lhs - rhs, tol, metric=g.label)


# --------------------------------------------------------------------------
# invariant metrics and coidentities


def metric_from_coidentity(F: FPatch, eps: VectorField, label: str = "g~") -> MetricField:
    """``g~_ij = eps_k c^k_ij``."""
    n = F.n
    if F.c.exprs is not None and eps.exprs is not None:
        zero = Expr.const(0.0, F.chart.coords, F.chart.flavor)
        rows = [[zero] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = zero
                for k in range(n):
                    if not (F.c.exprs[k][i][j].is_zero() or eps.exprs[k].is_zero()):
                        acc = acc + eps.exprs[k] * F.c.exprs[k][i][j]
                rows[i][j] = acc
        g = MetricField.from_exprs(F.chart, rows, label)
    else:
        g = MetricField(F.chart, lambda pts, order=2: einsum("k,kij->ij", eps(pts, order), F.c(pts, order)),
                        None, label)
    g.invariant = True
    return g


def coidentity_of(g: MetricField, e: VectorField) -> VectorField:
    """``eps_i = g_ij e^j``."""
    return VectorField.computed(g.chart, lambda pts, order=2: einsum("ij,j->i", g(pts, order), e(pts, order)),
                                label=f"eps({g.label})")


def closedness_report(eps: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    n = eps.chart.n
    d = eps(pts, 1).grad[..., :n]  # d[i, j] = d_j eps_i
    return residual_report("coidentity-closed", d - np.swapaxes(d, -1, -2), tol, field=eps.label)


def invariance_residual(g: MetricField, F: FPatch, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    c = F.c(pts, 0).val
    gv = g(pts, 0).val
    r = np.einsum("pmij,pmk->pijk", c, gv) - np.einsum("pmjk,pim->pijk", c, gv)
    return residual_report("invariance", r, tol, metric=g.label, patch=F.name)


def symmetry_residual(g: MetricField, pts, tol: float = 1e-10) -> CheckReport:
    gv = g(pts, 0).val
    return residual_report("metric-symmetry", gv - np.swapaxes(gv, -1, -2), tol, metric=g.label)


def _d_eps(F: FPatch, g: MetricField, pts) -> np.ndarray:
    """``(d eps)_ab = d_a eps_b - d_b eps_a`` for the coidentity of ``g``."""
    d = coidentity_of(g, F.e)(pts, 1).grad[..., :F.n]  # [P, b, a] = d_a eps_b
    return np.swapaxes(d, -1, -2) - d


def nabla_mult(F: FPatch, G: Geometry) -> np.ndarray:
    """``(nabla_x c)^k_zy`` indexed ``[P, x, k, z, y]``."""
    cj = F.c(G.pts, 1)
    c, dc = cj.val, cj.grad[..., :F.n]
    Gm = G.gamma
    return (np.einsum("pkzyx->pxkzy", dc)
            + np.einsum("pkxm,pmzy->pxkzy", Gm, c)
            - np.einsum("pmxz,pkmy->pxkzy", Gm, c)
            - np.einsum("pmxy,pkzm->pxkzy", Gm, c))


def nabla_mult_form(F: FPatch, g: MetricField, pts) -> np.ndarray:
    """The (4,0)-tensor ``T[x, z, y, v] = g(nabla_x(o)(d_z, d_y), d_v)``."""
    G = Geometry(g, pts, 1)
    return np.einsum("pkv,pxkzy->pxzyv", G.val, nabla_mult(F, G))


def total_symmetry_residual(F: FPatch, g: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    T = nabla_mult_form(F, g, pts)
    return residual_report("total-symmetry", T - np.swapaxes(T, 1, 2), tol, metric=g.label)


def symmetry_defect_residual(F: FPatch, g: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    """``2T(X,Z,Y,V) - 2T(Z,X,Y,V) = d eps(Y o Z, X o V) - d eps(X o Y, Z o V)`` on basis fields."""
    T = nabla_mult_form(F, g, pts)
    de = _d_eps(F, g, pts)
    c = F.c(pts, 0).val
    # d eps(d_y o d_z, d_x o d_v) = c^a_yz c^b_xv de_ab
    t1 = np.einsum("payz,pbxv,pab->pxzyv", c, c, de)
    t2 = np.einsum("paxy,pbzv,pab->pxzyv", c, c, de)
    r = 2 * T - 2 * np.swapaxes(T, 1, 2) - t1 + t2
    return residual_report("symmetry-defect", r, tol, metric=g.label)


def weak_symmetry_residual(F: FPatch, g: MetricField, E: VectorField, pts,
                           tol: float = 1e-8) -> CheckReport:
    T = nabla_mult_form(F, g, pts)
    A = T - np.swapaxes(T, 1, 2)
    r = np.einsum("px,pxzyv->pzyv", E(pts, 0).val, A)
    return residual_report("weak-symmetry", r, tol, metric=g.label, field=E.label)


def intersection_metric(F: FPatch, g_t: MetricField, E: VectorField, label: str = "g") -> MetricField:
    """``g_ij = (E^-1)^m c^p_mi g~_pj``."""
    Einv = invert_field(F, E)

    def fn(pts, order=2):
        return einsum("m,pmi,pj->ij", Einv(pts, order), F.c(pts, order), g_t(pts, order))

    return MetricField(F.chart, fn, None, label, invariant=True)


# --------------------------------------------------------------------------
# Nijenhuis torsion and pencils


def nijenhuis_tensor(Aj: Jet, ncoord: int) -> np.ndarray:
    """``N_A(d_i, d_j)^k`` indexed ``[P, k, i, j]`` from a first-order jet of ``A^k_j``.

    ``N_A(X,Y) = -[AX,AY] + A([AX,Y] + [X,AY]) - A^2[X,Y]`` on coordinate fields.
    """
    A, dA = Aj.val, Aj.grad[..., :ncoord]  # dA[k, j, m] = d_m A^k_j
    br = np.einsum("pmi,pkjm->pkij", A, dA) - np.einsum("pmj,pkim->pkij", A, dA)
    inner = np.einsum("plji->plij", dA) - dA  # [A d_i, d_j] + [d_i, A d_j] = d_i A d_j - d_j A d_i
    return -br + np.einsum("pkl,plij->pkij", A, inner)


def nijenhuis_residual(F: FPatch, E: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    """Nijenhuis torsion of multiplication by ``E``."""
    Aj = einsum("kij,i->kj", F.c(pts, 1), E(pts, 1))
    return residual_report("nijenhuis", nijenhuis_tensor(Aj, F.n), tol, patch=F.name, field=E.label)


def pair_nijenhuis_residual(g: MetricField, g_t: MetricField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    """Nijenhuis torsion of ``A = g* g~``."""
    Aj = einsum("ik,kj->ij", g.inverse(pts, 1), g_t(pts, 1))
    return residual_report("nijenhuis-pair", nijenhuis_tensor(Aj, g.chart.n), tol,
                           metric=g.label, metric2=g_t.label)


def pencil_metric(g: MetricField, g_t: MetricField, lam: float) -> MetricField:
    """The metric whose inverse is ``g* + lam g~*``."""

    def fn(pts, order=2):
        co = g.inverse(pts, order) + g_t.inverse(pts, order) * lam
        bad = singular_points(co.val)
        if np.any(bad):
            raise PencilDegenerate(lam, np.flatnonzero(bad))
        return invert_matrix_jet(co)

    return MetricField(g.chart, fn, None, f"g_{lam}")


def almost_compat_residual(g: MetricField, g_t: MetricField, pts, lambdas=DEFAULT_LAMBDAS,
                           tol: float = 1e-8) -> CheckReport:
    """``g_l*(nabla^l_X a) - g*(nabla_X a) - l g~*(nabla~_X a)`` on coordinate fields and forms."""
    G, Gt = Geometry(g, pts, 1), Geometry(g_t, pts, 1)
    parts = []
    base = np.einsum("pab,pcib->paci", G.inv, G.gamma)
    base_t = np.einsum("pab,pcib->paci", Gt.inv, Gt.gamma)
    for lam in lambdas:
        Gl = Geometry(pencil_metric(g, g_t, lam), pts, 1)
        lhs = np.einsum("pab,pcib->paci", Gl.inv, Gl.gamma)
        parts.append((-lhs + base + lam * base_t).reshape(len(pts), -1))
    return residual_report("almost-compatible", np.concatenate(parts, axis=1), tol,
                           lambdas=list(lambdas))


def _delta(G: Geometry, Gt: Geometry) -> np.ndarray:
    """``(nabla~_j dx^c - nabla_j dx^c)_b = Gamma^c_jb - Gamma~^c_jb`` as ``[P, j, c, b]``."""
    return np.einsum("pcjb->pjcb", G.gamma - Gt.gamma)


def _g_form_residual(inv: np.ndarray, D: np.ndarray) -> np.ndarray:
    # h*(D_Y a, D_X b) - h*(D_X a, D_Y b) over basis (Y=j, X=i, a=c, b=d)
    t = np.einsum("pab,pjca,pidb->pjicd", inv, D, D)
    return t - np.swapaxes(t, 1, 2)


def compat_g2_residual(g: MetricField, g_t: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    G, Gt = Geometry(g, pts, 1), Geometry(g_t, pts, 1)
    return residual_report("compat-g2", _g_form_residual(Gt.inv, _delta(G, Gt)), tol)


def compat_g1_residual(g: MetricField, g_t: MetricField, pts, tol: float = 1e-8) -> CheckReport:
    G, Gt = Geometry(g, pts, 1), Geometry(g_t, pts, 1)
    return residual_report("compat-g1", _g_form_residual(G.inv, _delta(G, Gt)), tol)


def curvature_pencil_residual(g: MetricField, g_t: MetricField, pts, lambdas=DEFAULT_LAMBDAS,
                              tol: float = 1e-7) -> CheckReport:
    G, Gt = Geometry(g, pts, 2), Geometry(g_t, pts, 2)
    base = np.einsum("pab,pcbij->pacij", G.inv, G.riemann)
    base_t = np.einsum("pab,pcbij->pacij", Gt.inv, Gt.riemann)
    parts = []
    for lam in lambdas:
        Gl = Geometry(pencil_metric(g, g_t, lam), pts, 2)
        lhs = np.einsum("pab,pcbij->pacij", Gl.inv, Gl.riemann)
        parts.append((lhs - base - lam * base_t).reshape(len(pts), -1))
    return residual_report("curvature-pencil", np.concatenate(parts, axis=1), tol,
                           lambdas=list(lambdas))


def riemannian_residual(F: FPatch, g: MetricField, pts, tol: float = 1e-7) -> CheckReport:
    """``Z o R(V,Y)X + Y o R(Z,V)X + V o R(Y,Z)X`` over coordinate fields.

    ``R(d_v, d_y) d_x = R^l_xvy d_l``; the result is indexed ``[P, k, x, y, z, v]``.
    """
    R = curvature(g, pts)
    c = F.c(pts, 0).val
    t1 = np.einsum("pkzl,plxvy->pkxyzv", c, R)
    t2 = np.einsum("pkyl,plxzv->pkxyzv", c, R)
    t3 = np.einsum("pkvl,plxyz->pkxyzv", c, R)
    return residual_report("riemannian", t1 + t2 + t3, tol, metric=g.label, patch=F.name)


# --------------------------------------------------------------------------
# S and Q operators


def lie_metric_jet(gj: Jet, Ej: Jet, ncoord: int) -> Jet:
    """``(L_E g)_ij = E^m d_m g_ij + g_mj d_i E^m + g_im d_j E^m``."""
    o = min(gj.order, Ej.order) - 1
    g0, E0 = gj.truncate(o), Ej.truncate(o)
    dg, dE = gj.d(ncoord), Ej.d(ncoord)
    return (einsum("m,ijm->ij", E0, dg) + einsum("mj,mi->ij", g0, dE)
            + einsum("im,mj->ij", g0, dE))


def lie_metric(g: MetricField, E: VectorField, pts, order: int = 0) -> Jet:
    return lie_metric_jet(g(pts, order + 1), E(pts, order + 1), g.chart.n)


def s_operator_jet(F: FPatch, g_t: MetricField, E: VectorField, pts, order: int = 0) -> Jet:
    """The operator ``S`` transported to vectors by ``g~``, as ``Sv[l, i] = (S(d_i))^l``.

    ``Sv(X) = 1/2 E^-1 o (w o X - 2 nabla~_X E)`` with
    ``w = g~^-1 (L_E g~)(e) + [e, E]``. ``order`` is the jet order of the result.
    """
    n = F.n
    up = order + 1
    Gt = Geometry(g_t, pts, up)
    Gam = Gt.gamma_jet
    Ej = E(pts, up)
    e = F.e(pts, order)
    c = F.c(pts, order)
    Einv = invert_field(F, E)(pts, order)
    LEg = lie_metric_jet(Gt.jet, Ej, n)
    ginv = Gt.inv_jet.truncate(order)
    w = einsum("ab,bj,j->a", ginv, LEg, e) + commutator_with_unity(F, E)(pts, order)
    nablaE = Ej.d(n) + einsum("lim,m->li", Gam.truncate(order), Ej.truncate(order))  # [l, i]
    inner = einsum("kab,a->kb", c, w) - nablaE * 2.0  # columns: w o d_i - 2 nabla_i E
    return einsum("lmk,m,ki->li", c, Einv, inner) * 0.5


def s_operator_residual(F: FPatch, g_t: MetricField, E: VectorField, pts, tol: float = 1e-7) -> CheckReport:
    """``nabla_Y a - nabla~_Y a = S(a) o Y`` on coordinate fields and forms."""
    g = intersection_metric(F, g_t, E)
    G, Gt = Geometry(g, pts, 1), Geometry(g_t, pts, 1)
    lhs = np.einsum("pcjb->pjcb", Gt.gamma - G.gamma)
    Sv = s_operator_jet(F, g_t, E, pts, 0).val
    c = F.c(pts, 0).val
    rhs = np.einsum("pkb,pklj,pli,pic->pjcb", Gt.val, c, Sv, Gt.inv)
    return residual_report("s-operator", lhs - rhs, tol, field=E.label)


def lie_metric_fd_residual(g: MetricField, E: VectorField, pts, h: float = FD_STEP,
                           tol: float = 1e-6) -> CheckReport:
    """``L_E g`` from jets against the flow definition ``d/dt phi_t^* g`` by central differences.

    Uses ``(L_E g)(d_i, d_j) = E(g_ij) - g([E, d_i], d_j) - g(d_i, [E, d_j])`` with every
    derivative taken by central differences of point values.
    """
    n = g.chart.n
    pts = np.asarray(pts, dtype=float)
    gv = g(pts, 0).val
    Ev = E(pts, 0).val

    def dfd(f, k):
        step = np.zeros(n)
        step[k] = h
        return (f(pts + step) - f(pts - step)) / (2 * h)

    dg = np.stack([dfd(lambda q: g(q, 0).val, k) for k in range(n)], axis=-1)
    dE = np.stack([dfd(lambda q: E(q, 0).val, k) for k in range(n)], axis=-1)  # [m, i] = d_i E^m
    fd = (np.einsum("pm,pijm->pij", Ev, dg) + np.einsum("pmj,pmi->pij", gv, dE)
          + np.einsum("pim,pmj->pij", gv, dE))
    exact = lie_metric(g, E, pts, 0).val
    return residual_report("lie-metric-fd", exact - fd, tol, step=h)


def _covariant_derivative_fd(F, g_t, E, pts, h):
    """``d_x Sv`` by central differences, indexed ``[P, l, i, x]``."""
    n = F.n
    cols = []
    for x in range(n):
        step = np.zeros(n)
        step[x] = h
        plus = s_operator_jet(F, g_t, E, pts + step, 0).val
        minus = s_operator_jet(F, g_t, E, pts - step, 0).val
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=-1)


def q_curvature_crosscheck(F: FPatch, g_t: MetricField, E: VectorField, pts, h: float = FD_STEP,
                           tol: float = FD_TOL, method: str = "fd") -> CheckReport:
    """``R^g(X,Y)a - R~(X,Y)a - Q(a,Y) o X + Q(a,X) o Y`` on coordinate data, in vector form.

    ``Q(a, X) = S(S(a) o X) - (nabla~_X S)(a)``. The derivative of ``S`` is taken by
    central differences (``method="fd"``) or from exact jets (``method="jet"``).
    """
    pts = np.asarray(pts)
    n = F.n
    g = intersection_metric(F, g_t, E)
    G, Gt = Geometry(g, pts, 2), Geometry(g_t, pts, 2)
    if method == "jet":
        Sj = s_operator_jet(F, g_t, E, pts, 1)
        Sv, dS = Sj.val, Sj.grad[..., :n]
    elif method == "fd":
        Sv = s_operator_jet(F, g_t, E, pts, 0).val
        dS = _covariant_derivative_fd(F, g_t, E, pts, h)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    Gam = Gt.gamma
    # (nabla~_x Sv)^l_i = d_x Sv^l_i + Gam^l_xk Sv^k_i - Gam^k_xi Sv^l_k
    nS = dS + np.einsum("plxk,pki->plix", Gam, Sv) - np.einsum("pkxi,plk->plix", Gam, Sv)
    c = F.c(pts, 0).val
    # Qv(d_a, d_x)^l = Sv(Sv(d_a) o d_x) - (nabla~_x Sv)(d_a)
    SaX = np.einsum("pkmx,pma->pkax", c, Sv)
    Q = np.einsum("plk,pkax->plax", Sv, SaX) - nS  # [l, a, x]
    # translate forms to vectors via g~: alpha = dx^c  <->  a = g~^{ac} d_a
    Qc = np.einsum("plax,pac->plcx", Q, Gt.inv)
    QY_oX = np.einsum("pkil,plcj->pkcij", c, Qc)  # Q(a, d_j) o d_i
    QX_oY = np.einsum("pkjl,plci->pkcij", c, Qc)  # Q(a, d_i) o d_j
    Rg = -np.einsum("pkb,pcbij->pkcij", Gt.inv, G.riemann)
    Rt = -np.einsum("pkb,pcbij->pkcij", Gt.inv, Gt.riemann)
    r = Rg - Rt - QY_oX + QX_oY
    return residual_report("q-curvature", r, tol, method=method, step=h if method == "fd" else None)


# --------------------------------------------------------------------------
# semi-Hamiltonian oracle for diagonal metrics in canonical coordinates


def rotation_coefficients(g: MetricField, pts) -> Jet:
    """``beta_ij = d_i sqrt(g_jj) / sqrt(g_ii)`` as an order-1 jet indexed ``[i, j]``."""
    n = g.chart.n
    gj = g(pts, 2)
    diag = Jet(np.einsum("pii->pi", gj.val), np.einsum("piim->pim", gj.grad),
               np.einsum("piiml->piml", gj.hess))
    v = diag.val
    if np.any(v <= 0):
        raise ValueError("rotation coefficients need a positive diagonal metric")
    Hj = diag.apply(np.sqrt(v), 0.5 / np.sqrt(v), -0.25 / (v * np.sqrt(v)))
    dH = Hj.d(n)  # [j, i] = d_i H_j
    inv_H = Hj.truncate(1).reciprocal()
    return einsum("ji,i->ij", dH, inv_H)


def semi_hamiltonian_residual(g: MetricField, pts, tol: float = 1e-7) -> CheckReport:
    """``d_k beta_ij - beta_ik beta_kj`` for distinct ``i, j, k``."""
    n = g.chart.n
    b = rotation_coefficients(g, pts)
    db = b.grad[..., :n]  # [i, j, k] = d_k beta_ij
    bv = b.val
    r = db - np.einsum("pik,pkj->pijk", bv, bv)
    idx = [(i, j, k) for i in range(n) for j in range(n) for k in range(n)
           if len({i, j, k}) == 3]
    # with fewer than three coordinates the condition is empty
    sel = np.stack([r[:, i, j, k] for i, j, k in idx], axis=1) if idx else np.zeros((len(pts), 1))
    return residual_report("semi-hamiltonian", sel, tol, metric=g.label)
