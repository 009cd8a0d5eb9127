"""Eventual identities: inversion in the multiplication algebra, the
characterising Lie-derivative condition, dual multiplications, and the
group/product structure of eventual identities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import TensorField, VectorField
from .fmanifold import FPatch, bracket, factor_slots, lie_c_jet, mult_at
from .jet import Jet, einsum, singular_points, solve_linear_jet
from .report import DEFAULT_TOL, CheckReport, residual_report


class DecompositionDefect(ArithmeticError):
    """A field on a product patch does not split into factor-wise pieces."""

    def __init__(self, residual: float, report: CheckReport):
        self.residual = residual
        self.report = report
        super().__init__(f"cross-dependence residual {residual:.3e} exceeds {report.tolerance:.1e}")


def mult_matrix(F: FPatch, E: VectorField, pts, order: int = 2) -> Jet:
    """``(M_E)^k_j = c^k_ij E^i``, the matrix of multiplication by ``E``."""
    return einsum("kij,i->kj", F.c(pts, order), E(pts, order))


def invertibility_guard(F: FPatch, E: VectorField):
    """Sampling guard accepting only points where multiplication by ``E`` is invertible."""

    def guard(pts):
        return ~singular_points(mult_matrix(F, E, pts, 0).val)

    return guard


def invert_field(F: FPatch, E: VectorField) -> VectorField:
    """``E^{-1}``: the pointwise solution of ``M_E v = e`` with implicit-differentiation jets."""

    def fn(pts, order=2):
        return solve_linear_jet(mult_matrix(F, E, pts, order), F.e(pts, order))

    return VectorField.computed(F.chart, fn, label=f"{E.label}^-1")


def commutator_with_unity(F: FPatch, E: VectorField) -> VectorField:
    """``[e, E]``."""
    return bracket(F.e, E)


def char_tensor(F: FPatch, E: VectorField, pts) -> np.ndarray:
    """``(L_E c)^k_ij - ([e,E] o d_i o d_j)^k`` indexed ``[P, k, i, j]``."""
    n = F.n
    cj = F.c(pts, 1)
    L = lie_c_jet(cj, E(pts, 1), n).val
    v = commutator_with_unity(F, E)(pts, 0).val
    c = cj.val
    rhs = np.einsum("pkml,pm,plij->pkij", c, v, c)
    return L - rhs


def char_residual(F: FPatch, E: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    return residual_report("eventual-identity", char_tensor(F, E, pts), tol,
                           patch=F.name, field=E.label)


def weak_vector(F: FPatch, E: VectorField) -> VectorField:
    """``v = (L_E c)(e, e)``; supplies jets to order 1."""

    def fn(pts, order=1):
        cj = F.c(pts, order + 1)
        L = lie_c_jet(cj, E(pts, order + 1), F.n)
        ej = F.e(pts, order)
        return einsum("kij,i,j->k", L, ej, ej)

    return VectorField.computed(F.chart, fn, label=f"L_{E.label}(e,e)")


def weak_vector_residual(F: FPatch, E: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    """Agreement of ``(L_E c)(e, e)`` with ``[e, E]``."""
    v = weak_vector(F, E)(pts, 0).val
    w = commutator_with_unity(F, E)(pts, 0).val
    return residual_report("weak-vector", v - w, tol, patch=F.name, field=E.label)


@dataclass
class DualPatch(FPatch):
    base: FPatch | None = None
    eventual: VectorField | None = None
    inverse: VectorField | None = None


def dualize(F: FPatch, E: VectorField, name: str = "") -> DualPatch:
    """The dual multiplication ``X * Y = X o Y o E^{-1}``, whose unity is ``E``.

    ``c*^k_ij = c^p_ij c^k_pm (E^{-1})^m``.
    """
    Einv = invert_field(F, E)

    def fn(pts, order=2):
        cj = F.c(pts, order)
        return einsum("pij,kpm,m->kij", cj, cj, Einv(pts, order))

    n = F.n
    c = TensorField(F.chart, fn, (n, n, n), None, label="c*")
    return DualPatch(F.chart, c, E, name or f"{F.name}*", False, (), F, E, Einv)


def dual_unity_residual(D: DualPatch, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    c = D.c(pts, 0).val
    E = D.e(pts, 0).val
    return residual_report("dual-unity", np.einsum("pkij,pi->pkj", c, E) - np.eye(D.n), tol,
                           patch=D.name)


def involution_residual(F: FPatch, E: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    """Dualizing the dual with respect to the original unity reproduces ``c``."""
    D = dualize(F, E)
    DD = dualize(D, F.e)
    diff = DD.c(pts, 0).val - F.c(pts, 0).val
    return residual_report("dual-involution", diff, tol, patch=F.name, field=E.label)


# --------------------------------------------------------------------------
# group structure


def ev_product(F: FPatch, E1: VectorField, E2: VectorField) -> VectorField:
    return mult_at(F, E1, E2)


def ev_bracket(E1: VectorField, E2: VectorField) -> VectorField:
    return bracket(E1, E2)


def power(F: FPatch, E: VectorField, m: int) -> VectorField:
    """``E^m`` in the multiplication algebra; ``E^0 = e`` and negative powers use ``E^{-1}``."""
    if m == 0:
        return F.e
    base = E if m > 0 else invert_field(F, E)
    out = base
    for _ in range(abs(m) - 1):
        out = mult_at(F, out, base)
    return out


def power_bracket_residual(F: FPatch, E: VectorField, n: int, m: int, pts,
                           tol: float = DEFAULT_TOL) -> CheckReport:
    """``[E^n, E^m] - (m - n) E^{n+m-1} o [e, E]``."""
    lhs = bracket(power(F, E, n), power(F, E, m))(pts, 0).val
    rhs_field = mult_at(F, power(F, E, n + m - 1), commutator_with_unity(F, E))
    rhs = (m - n) * rhs_field(pts, 0).val
    return residual_report("power-bracket", lhs - rhs, tol, patch=F.name, n=n, m=m)


# --------------------------------------------------------------------------
# decomposition on products


def _unit_of_factor(Fprod: FPatch, which: int) -> VectorField:
    F1, F2 = Fprod.factors
    n1 = F1.n
    chart = Fprod.chart

    def fn(pts, order=2):
        full = Fprod.e(pts, order)
        mask = np.zeros(chart.n)
        if which == 0:
            mask[:n1] = 1
        else:
            mask[n1:] = 1
        return full * np.broadcast_to(mask, full.val.shape)

    return VectorField.computed(chart, fn, label=f"e{which + 1}")


def restrict_to_factor(Fprod: FPatch, X: VectorField, which: int, anchor) -> VectorField:
    """The factor-``which`` part of ``X``, read off with the other factor's
    coordinates frozen at ``anchor``."""
    F1, F2 = Fprod.factors
    F = Fprod.factors[which]
    off = 0 if which == 0 else F1.n
    n = Fprod.n
    slots = factor_slots(F.chart, n, off)
    anchor = np.asarray(anchor, dtype=Fprod.chart.dtype)

    def fn(pts, order=2):
        pts = np.asarray(pts)
        full = np.empty((len(pts), n), dtype=Fprod.chart.dtype)
        full[:] = anchor
        full[:, off:off + F.n] = pts
        j = X(full, order)[off:off + F.n]
        grad = j.grad[..., slots] if j.grad is not None else None
        hess = j.hess[..., slots[:, None], slots[None, :]] if j.hess is not None else None
        return Jet(j.val, grad, hess)

    return VectorField.computed(F.chart, fn, label=f"{X.label}|{which + 1}")


@dataclass
class Decomposition:
    parts: tuple[VectorField, VectorField]
    cross: CheckReport
    certified: tuple[CheckReport, CheckReport]


def decompose_on_product(Fprod: FPatch, E: VectorField, pts, tol: float = DEFAULT_TOL,
                         strict: bool = True) -> Decomposition:
    """Split ``E`` into ``e_k o E`` and check each piece depends only on its own factor."""
    if len(Fprod.factors) != 2:
        raise ValueError("decomposition needs a patch built by product_patch")
    F1, F2 = Fprod.factors
    n1, n = F1.n, Fprod.n
    pieces = [mult_at(Fprod, _unit_of_factor(Fprod, w), E) for w in (0, 1)]
    j1, j2 = pieces[0](pts, 1), pieces[1](pts, 1)
    # factor-1 piece: no factor-2 components, no dependence on factor-2 coordinates
    cross = np.concatenate([
        j1.val[:, n1:].reshape(len(pts), -1),
        j1.grad[:, :, n1:n].reshape(len(pts), -1),
        j2.val[:, :n1].reshape(len(pts), -1),
        j2.grad[:, :, :n1].reshape(len(pts), -1),
    ], axis=1)
    cross_report = residual_report("decomposition-cross", cross, tol, patch=Fprod.name)
    if strict and not cross_report.passed:
        raise DecompositionDefect(cross_report.max_residual, cross_report)
    anchor = np.array([0.5 * (lo + hi) for lo, hi in Fprod.chart.box])
    parts = (restrict_to_factor(Fprod, pieces[0], 0, anchor),
             restrict_to_factor(Fprod, pieces[1], 1, anchor))
    certs = (char_residual(F1, parts[0], pts[:, :n1], tol),
             char_residual(F2, parts[1], pts[:, n1:], tol))
    return Decomposition(parts, cross_report, certs)
