"""Coordinate patches carrying a commutative multiplication on tangent vectors.

The structure tensor is stored as ``c[k, i, j]`` so that
``(d_i o d_j) = c^k_ij d_k``. All residual checks evaluate on a batch of
sample points and return a :class:`~fmanforge.report.CheckReport`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chart import (DEFAULT_POINTS, DEFAULT_SEED, Chart, TensorField, VectorField,
                    sample_points, tensor_from_exprs)
from .expr import Expr
from .jet import Jet, OrderExhausted, einsum
from .report import DEFAULT_TOL, CheckReport, residual_report


@dataclass
class FPatch:
    chart: Chart
    c: TensorField
    e: VectorField
    name: str = ""
    semisimple: bool = False
    factors: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.chart.n

    def mult(self, pts: np.ndarray, order: int = 2) -> Jet:
        return self.c(pts, order)

    def sample(self, count: int = DEFAULT_POINTS, seed: int = DEFAULT_SEED, guards=()) -> np.ndarray:
        return sample_points(self.chart, count, seed, guards)

    def vector(self, texts, label: str = "") -> VectorField:
        return VectorField.from_exprs(self.chart, texts, label)

    def coordinate_field(self, i: int) -> VectorField:
        return VectorField.coordinate(self.chart, i)

    @classmethod
    def from_exprs(cls, chart: Chart, entries: dict, unity, name: str = "") -> "FPatch":
        """Build from ``{(i, j, k): text}`` with ``i <= j``; missing entries are zero."""
        n = chart.n
        zero = Expr.const(0.0, chart.coords, chart.flavor)
        table = [[[zero] * n for _ in range(n)] for _ in range(n)]
        for (i, j, k), text in entries.items():
            if not (0 <= i <= j < n and 0 <= k < n):
                raise ValueError(f"structure entry index ({i}, {j}, {k}) out of range or not i <= j")
            ex = text if isinstance(text, Expr) else chart.parse(str(text))
            table[k][i][j] = ex
            table[k][j][i] = ex
        c = tensor_from_exprs(chart, table, (n, n, n), label="c")
        e = VectorField.from_exprs(chart, unity, label="e")
        return cls(chart, c, e, name)

    @classmethod
    def semisimple_patch(cls, n: int, box=None, coords=None, flavor: str = "real",
                         name: str = "") -> "FPatch":
        coords = tuple(coords) if coords is not None else tuple(f"u{i + 1}" for i in range(n))
        box = box if box is not None else [(-1.0, 1.0)] * n
        chart = Chart(coords, box, flavor)
        entries = {(i, i, i): "1" for i in range(n)}
        patch = cls.from_exprs(chart, entries, ["1"] * n, name or f"semisimple{n}")
        patch.semisimple = True
        return patch


# --------------------------------------------------------------------------
# products and brackets of fields


def _d(jet: Jet, chart: Chart) -> Jet:
    return jet.d(chart.n)


def mult_at(F: FPatch, X: VectorField, Y: VectorField) -> VectorField:
    """``(X o Y)^k = c^k_ij X^i Y^j``; stays expression-backed when all inputs are."""
    if F.c.exprs is not None and X.exprs is not None and Y.exprs is not None:
        n = F.n
        comps = []
        for k in range(n):
            acc = Expr.const(0.0, F.chart.coords, F.chart.flavor)
            for i in range(n):
                for j in range(n):
                    ckij = F.c.exprs[k][i][j]
                    if ckij.is_zero() or X.exprs[i].is_zero() or Y.exprs[j].is_zero():
                        continue
                    acc = acc + ckij * X.exprs[i] * Y.exprs[j]
            comps.append(acc)
        return VectorField.from_exprs(F.chart, comps, label=f"({X.label} o {Y.label})")

    def fn(pts, order=2):
        return einsum("kij,i,j->k", F.c(pts, order), X(pts, order), Y(pts, order))

    return VectorField.computed(F.chart, fn, label=f"({X.label} o {Y.label})")


def bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket ``[X,Y]^k = X^m d_m Y^k - Y^m d_m X^k``.

    Expression-backed inputs give an expression-backed result (all orders);
    otherwise the result supplies one order less than its inputs.
    """
    chart = X.chart
    n = chart.n
    label = f"[{X.label},{Y.label}]"
    if X.exprs is not None and Y.exprs is not None:
        comps = []
        for k in range(n):
            acc = Expr.const(0.0, chart.coords, chart.flavor)
            for m in range(n):
                if not X.exprs[m].is_zero():
                    acc = acc + X.exprs[m] * Y.exprs[k].diff(m)
                if not Y.exprs[m].is_zero():
                    acc = acc - Y.exprs[m] * X.exprs[k].diff(m)
            comps.append(acc)
        return VectorField.from_exprs(chart, comps, label=label)

    def fn(pts, order=2):
        if order >= 2:
            raise OrderExhausted(f"bracket {label} of computed fields supplies jets only to order 1")
        xj, yj = X(pts, order + 1), Y(pts, order + 1)
        return (einsum("m,km->k", xj.truncate(order), _d(yj, chart))
                - einsum("m,km->k", yj.truncate(order), _d(xj, chart)))

    return VectorField.computed(chart, fn, label=label)


def lie_c_jet(cj: Jet, xj: Jet, ncoord: int) -> Jet:
    """``(L_X c)^k_ij`` from jets of ``c`` and ``X``; one order lower than the inputs."""
    o = min(cj.order, xj.order) - 1
    if o < 0:
        raise OrderExhausted("Lie derivative needs first derivatives")
    c0, x0 = cj.truncate(o), xj.truncate(o)
    dc, dx = cj.d(ncoord), xj.d(ncoord)
    return (einsum("m,kijm->kij", x0, dc)
            - einsum("km,mij->kij", dx, c0)
            + einsum("mi,kmj->kij", dx, c0)
            + einsum("mj,kim->kij", dx, c0))


def lie_derivative_mult(F: FPatch, X: VectorField) -> TensorField:
    """``L_X(o)`` as a computed (1,2)-tensor field supplying jets to order 1."""

    def fn(pts, order=1):
        if order >= 2:
            raise OrderExhausted("L_X(o) supplies jets only to order 1")
        return lie_c_jet(F.c(pts, order + 1), X(pts, order + 1), F.n)

    return TensorField(F.chart, fn, (F.n,) * 3, None, label=f"L_{X.label}(o)")


def apply_tensor(T: Jet, X: Jet, Y: Jet) -> Jet:
    return einsum("kij,i,j->k", T, X, Y)


# --------------------------------------------------------------------------
# residual checks


def hm_tensor(F: FPatch, pts: np.ndarray) -> np.ndarray:
    """The integrability defect on coordinate fields, indexed ``[P, a, b, k, i, j]``.

    ``H(d_a, d_b)(d_i, d_j) = L_{d_a o d_b}(o)(d_i, d_j) - d_a o L_{d_b}(o)(d_i, d_j)
    - d_b o L_{d_a}(o)(d_i, d_j)``.
    """
    n = F.n
    cj = F.c(pts, 1)
    c = cj.val
    dc = cj.grad[..., :n]  # [P, k, i, j, m]
    L = (np.einsum("pmab,pkijm->pabkij", c, dc)
         - np.einsum("pkabm,pmij->pabkij", dc, c)
         + np.einsum("pmabi,pkmj->pabkij", dc, c)
         + np.einsum("pmabj,pkim->pabkij", dc, c))
    # d_a o (d_b c)(i, j) = c^k_{a l} dc^l_{ij,b}
    t = np.einsum("pkal,plijb->pabkij", c, dc)
    return L - t - np.swapaxes(t, 1, 2)


def hm_residual(F: FPatch, pts: np.ndarray, tol: float = DEFAULT_TOL) -> CheckReport:
    return residual_report("hertling-manin", hm_tensor(F, pts), tol, patch=F.name)


def hm_defect_on_fields(F: FPatch, X: VectorField, Y: VectorField, Z: VectorField,
                        V: VectorField, pts: np.ndarray) -> np.ndarray:
    """The same defect evaluated directly on arbitrary fields (used to spot-check tensoriality)."""
    n = F.n
    cj = F.c(pts, 2)
    xj, yj = X(pts, 2), Y(pts, 2)
    zj, vj = Z(pts, 0), V(pts, 0)
    xy = einsum("kij,i,j->k", cj, xj, yj)
    Lxy = lie_c_jet(cj, xy, n).val
    Lx = lie_c_jet(cj, xj, n).val
    Ly = lie_c_jet(cj, yj, n).val
    c = cj.val
    A = np.einsum("pkij,pi,pj->pk", Lxy, zj.val, vj.val)
    B = np.einsum("pkal,pa,plij,pi,pj->pk", c, xj.val, Ly, zj.val, vj.val)
    C = np.einsum("pkal,pa,plij,pi,pj->pk", c, yj.val, Lx, zj.val, vj.val)
    return A - B - C


def algebra_residuals(F: FPatch, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = F.c(pts, 0).val
    e = F.e(pts, 0).val
    assoc = np.einsum("pmij,plmk->pijkl", c, c) - np.einsum("pmjk,plim->pijkl", c, c)
    unity = np.einsum("pkij,pi->pkj", c, e) - np.eye(F.n)
    return assoc, unity


def algebra_residual(F: FPatch, pts: np.ndarray, tol: float = DEFAULT_TOL) -> CheckReport:
    assoc, unity = algebra_residuals(F, pts)
    P = len(pts)
    a = np.abs(assoc).reshape(P, -1).max(axis=1)
    u = np.abs(unity).reshape(P, -1).max(axis=1)
    return CheckReport("algebra", tol, np.maximum(a, u),
                       {"patch": F.name, "assoc_max": float(a.max()), "unity_max": float(u.max())})


def euler_residual(F: FPatch, E: VectorField, d: float, pts: np.ndarray,
                   tol: float = DEFAULT_TOL) -> CheckReport:
    cj = F.c(pts, 1)
    L = lie_c_jet(cj, E(pts, 1), F.n).val
    return residual_report("euler", L - d * cj.val, tol, patch=F.name, weight=d)


# --------------------------------------------------------------------------
# products


def _product_chart(c1: Chart, c2: Chart) -> Chart:
    if c1.flavor != c2.flavor:
        raise ValueError(f"flavor mismatch: {c1.flavor} x {c2.flavor}")
    names = c1.coords + c2.coords
    if len(set(names)) != len(names):
        names = tuple(f"u{i + 1}" for i in range(len(names)))
    return Chart(names, c1.box + c2.box, c1.flavor)


def factor_slots(chart: Chart, n_total: int, offset: int) -> np.ndarray:
    """Derivative-slot indices of a factor chart inside the product's jet layout."""
    idx = np.arange(offset, offset + chart.n)
    if chart.flavor == "complex":
        idx = np.r_[idx, idx + n_total]
    return idx


def embed_jet(jet: Jet, slots: np.ndarray, nvar: int) -> Jet:
    """Re-express a factor jet over the product's derivative slots (zero elsewhere)."""
    grad = hess = None
    if jet.grad is not None:
        grad = np.zeros(jet.grad.shape[:-1] + (nvar,), dtype=jet.grad.dtype)
        grad[..., slots] = jet.grad
    if jet.hess is not None:
        hess = np.zeros(jet.hess.shape[:-2] + (nvar, nvar), dtype=jet.hess.dtype)
        hess[..., slots[:, None], slots[None, :]] = jet.hess
    return Jet(jet.val, grad, hess)


def _block_fn(chart: Chart, parts, rank: int):
    """Block-diagonal assembly of per-factor tensor fields of the given rank."""
    n = chart.n

    def fn(pts, order=2):
        pts = np.asarray(pts)
        P = len(pts)
        val = np.zeros((P,) + (n,) * rank, dtype=chart.dtype)
        blocks = []
        for T, off in parts:
            sub = T(pts[:, off:off + T.chart.n], order)
            if order:
                sub = embed_jet(sub, factor_slots(T.chart, n, off), chart.nvar)
            blocks.append((sub, off, T.chart.n))
        grad = np.zeros(val.shape + (chart.nvar,), dtype=chart.dtype) if order >= 1 else None
        hess = np.zeros(val.shape + (chart.nvar,) * 2, dtype=chart.dtype) if order >= 2 else None
        for sub, off, m in blocks:
            sl = (slice(None),) + (slice(off, off + m),) * rank
            val[sl] = sub.val
            if grad is not None:
                grad[sl] = sub.grad
            if hess is not None:
                hess[sl] = sub.hess
        return Jet(val, grad, hess)

    return fn


def product_patch(F1: FPatch, F2: FPatch, name: str = "") -> FPatch:
    """Block-diagonal multiplication on the product chart, unity ``e1 + e2``.

    Expression-backed factors give an expression-backed product; otherwise the
    product evaluates each factor on its own coordinates and embeds the jets.
    """
    chart = _product_chart(F1.chart, F2.chart)
    n1, n2 = F1.n, F2.n
    n = n1 + n2
    name = name or f"{F1.name}x{F2.name}"
    if all(F.c.exprs is not None and F.e.exprs is not None for F in (F1, F2)):
        zero = Expr.const(0.0, chart.coords, chart.flavor)
        table = [[[zero] * n for _ in range(n)] for _ in range(n)]
        unity = [zero] * n
        for F, off in ((F1, 0), (F2, n1)):
            for k in range(F.n):
                unity[k + off] = F.e.exprs[k].rebase(chart.coords, off)
                for i in range(F.n):
                    for j in range(F.n):
                        table[k + off][i + off][j + off] = F.c.exprs[k][i][j].rebase(chart.coords, off)
        c = tensor_from_exprs(chart, table, (n, n, n), label="c")
        e = VectorField.from_exprs(chart, unity, label="e")
    else:
        c = TensorField(chart, _block_fn(chart, [(F1.c, 0), (F2.c, n1)], 3), (n, n, n), label="c")
        e = VectorField.computed(chart, _block_fn(chart, [(F1.e, 0), (F2.e, n1)], 1), label="e")
    return FPatch(chart, c, e, name, semisimple=F1.semisimple and F2.semisimple, factors=(F1, F2))


def sum_on_product(chart: Chart, X1: VectorField, X2: VectorField) -> VectorField:
    """``X1 + X2`` for fields living on the two factors of a product chart."""
    if X1.exprs is not None and X2.exprs is not None:
        comps = ([x.rebase(chart.coords, 0) for x in X1.exprs]
                 + [x.rebase(chart.coords, X1.chart.n) for x in X2.exprs])
        return VectorField.from_exprs(chart, comps, label=f"{X1.label}+{X2.label}")
    fn = _block_fn(chart, [(X1, 0), (X2, X1.chart.n)], 1)
    return VectorField.computed(chart, fn, label=f"{X1.label}+{X2.label}")


def lift_field(X: VectorField, chart: Chart, offset: int) -> VectorField:
    """Push an expression-backed field on one factor into the product chart (zero elsewhere)."""
    zero = Expr.const(0.0, chart.coords, chart.flavor)
    comps = [zero] * chart.n
    for k, ex in enumerate(X.exprs):
        comps[k + offset] = ex.rebase(chart.coords, offset)
    return VectorField.from_exprs(chart, comps, label=X.label)
