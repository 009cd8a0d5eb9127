"""Diagonal tt*-geometry over complex canonical coordinates.

Data live on a complex chart. The multiplication is diagonal,
``d_i o d_i = m_i d_i``. The hermitian metric ``h(X, Y) = X^T H conj(Y)``
is linear in its first slot. The real structure acts by
``k(sum a^i d_i) = sum k_i conj(a^i) d_i``. Jets carry Wirtinger
derivatives: slots ``0..n-1`` are ``d/du^i`` and ``n..2n-1`` are ``d/dconj(u^i)``.

Matrix conventions: a connection is ``D_i v = d_i v + Gam_i v`` with
``Gam[i, r, a] = (Gam_i)^r_a``; Higgs fields are ``C[i, k, j] = c^k_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import DEFAULT_POINTS, DEFAULT_SEED, Chart, VectorField, sample_points, tensor_from_exprs
from .expr import Expr
from .jet import Jet, einsum, invert_matrix_jet
from .report import CheckReport, residual_report

TT_TOL = 1e-8
DEFAULT_Z = (1.0, 1j, 2.0)


class TTDataInvalid(ValueError):
    pass


class BranchCut(ArithmeticError):
    def __init__(self, points):
        self.points = np.asarray(points)
        super().__init__(f"principal square root undefined at {self.points.size} point(s): "
                         f"{self.points.tolist()[:8]}")


class PreconditionFailed(RuntimeError):
    pass


def _as_exprs(chart: Chart, items) -> list[Expr]:
    return [t if isinstance(t, Expr) else chart.parse(str(t)) for t in items]


@dataclass
class TTData:
    chart: Chart
    mult: list[Expr]
    H: list[list[Expr]]
    k: list[Expr]
    name: str = ""

    def __post_init__(self):
        if self.chart.flavor != "complex":
            raise TTDataInvalid("tt* data need a complex chart")
        n = self.chart.n
        self.mult = _as_exprs(self.chart, self.mult)
        self.k = _as_exprs(self.chart, self.k)
        self.H = [_as_exprs(self.chart, row) for row in self.H]
        if len(self.mult) != n or len(self.k) != n or len(self.H) != n:
            raise TTDataInvalid(f"tt* data need {n} entries per component")
        zero = Expr.const(0.0, self.chart.coords, "complex")
        table = [[zero] * n for _ in range(n)]
        for i in range(n):
            table[i][i] = self.mult[i]
        self._c = tensor_from_exprs(self.chart, [[[table[k][i] if i == j else zero for j in range(n)]
                                                  for i in range(n)] for k in range(n)], (n, n, n))
        self._H = tensor_from_exprs(self.chart, self.H, (n, n))
        self._k = VectorField.from_exprs(self.chart, self.k, "k")

    @classmethod
    def diagonal(cls, chart: Chart, H, k, mult=None, name: str = "") -> "TTData":
        n = chart.n
        zero = Expr.const(0.0, chart.coords, "complex")
        Hd = _as_exprs(chart, H)
        table = [[Hd[i] if i == j else zero for j in range(n)] for i in range(n)]
        return cls(chart, mult if mult is not None else ["1"] * n, table, k, name)

    @classmethod
    def on_box(cls, n: int, H, k, box=(-0.5, 0.5), mult=None, name: str = "") -> "TTData":
        chart = Chart(tuple(f"u{i + 1}" for i in range(n)), [box] * n, "complex")
        return cls.diagonal(chart, H, k, mult, name)

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def is_diagonal(self) -> bool:
        return all(self.H[i][j].is_zero() for i in range(self.n) for j in range(self.n) if i != j)

    def c(self, pts, order: int = 2) -> Jet:
        return self._c(pts, order)

    def hermitian(self, pts, order: int = 2) -> Jet:
        return self._H(pts, order)

    def kvals(self, pts) -> np.ndarray:
        return self._k(pts, 0).val

    def unity(self) -> list[Expr]:
        one = Expr.const(1.0, self.chart.coords, "complex")
        return [one / m for m in self.mult]

    def sample(self, count: int = DEFAULT_POINTS, seed: int = DEFAULT_SEED) -> np.ndarray:
        return sample_points(self.chart, count, seed)

    def validate(self, pts, real_tol: float = 1e-12, unit_tol: float = 1e-10) -> None:
        Hv = self.hermitian(pts, 0).val
        if np.max(np.abs(Hv - np.conj(np.swapaxes(Hv, -1, -2)))) > real_tol * max(1.0, np.abs(Hv).max()):
            raise TTDataInvalid("hermitian metric is not hermitian at the sample points")
        if np.any(np.linalg.eigvalsh(0.5 * (Hv + np.conj(np.swapaxes(Hv, -1, -2)))) <= 0):
            raise TTDataInvalid("hermitian metric is not positive definite at the sample points")
        kv = self.kvals(pts)
        if np.max(np.abs(np.abs(kv) - 1.0)) > unit_tol:
            raise TTDataInvalid("real-structure coefficients must have modulus 1")


def holomorphy_defect(chart: Chart, exprs, pts) -> float:
    """Largest antiholomorphic jet part of a list of expressions."""
    X = chart.coordinate_jet(pts, 1)
    n = chart.n
    return max(float(np.max(np.abs(e.jet(X, 1).grad[:, n:]))) for e in exprs)


# --------------------------------------------------------------------------
# connection, Higgs field, adjoints


def chern_connection(data: TTData, pts, order: int = 1) -> Jet:
    """``Gam_i = (d_i H H^-1)^T`` as a jet of order ``order``; diagonal ``H`` gives ``d_i log H_aa``."""
    n = data.n
    Hj = data.hermitian(pts, order + 1)
    dH = Hj.d(n)  # [a, m, i] = d_i H_am
    Hinv = invert_matrix_jet(Hj.truncate(order))
    return einsum("ami,mr->ira", dH, Hinv)


def higgs(data: TTData, pts, order: int = 1) -> Jet:
    """``C[i, k, j] = c^k_ij``: multiplication by ``d_i``."""
    return einsum("kij->ikj", data.c(pts, order))


def adjoint(M: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``h``-adjoint of a batch of endomorphisms: ``M^dag = conj(H)^-1 M^* conj(H)``."""
    Hc = np.conj(H)
    Ms = np.conj(np.swapaxes(M, -1, -2))
    return np.linalg.solve(Hc, Ms @ Hc)


def _comm(A, B):
    return A @ B - B @ A


def ttstar_residuals(data: TTData, pts, tol: float = TT_TOL) -> tuple[CheckReport, CheckReport]:
    """Residuals of ``d^D C = 0`` and ``R_{i jbar} + [C_i, C^dag_j] = 0`` on coordinate fields."""
    n = data.n
    Gj = chern_connection(data, pts, 1)
    G = Gj.val
    Cj = higgs(data, pts, 1)
    C, dC = Cj.val, Cj.grad[..., :n]  # dC[i, k, j, m] = d_m C_i
    DC = np.einsum("pjkli->pijkl", dC) + (G[:, :, None] @ C[:, None, :] - C[:, None, :] @ G[:, :, None])
    r1 = DC - np.swapaxes(DC, 1, 2)
    # R(d_i, dbar_j) = -dbar_j Gam_i since the (0,1) part of the connection vanishes
    dbarG = Gj.grad[..., n:2 * n]  # [i, r, a, j]
    R = -np.moveaxis(dbarG, -1, 2)  # [i, j, r, a]
    Hv = data.hermitian(pts, 0).val
    Cd = adjoint(C, Hv[:, None])  # [i] -> C_i^dag
    comm = C[:, :, None] @ Cd[:, None, :] - Cd[:, None, :] @ C[:, :, None]
    r2 = R + comm
    return (residual_report("ttstar-dC", r1, tol, data=data.name),
            residual_report("ttstar-curvature", r2, tol, data=data.name,
                            commutator_max=float(np.abs(comm).max())))


def ddbar_log_H(data: TTData, pts) -> np.ndarray:
    """``d_i dbar_j log H_aa`` indexed ``[P, a, i, j]`` (diagonal data)."""
    n = data.n
    Hj = data.hermitian(pts, 2)
    diag = Jet(np.einsum("paa->pa", Hj.val), np.einsum("paam->pam", Hj.grad),
               np.einsum("paaml->paml", Hj.hess))
    logH = diag.apply(np.log(diag.val), 1.0 / diag.val, -1.0 / diag.val ** 2)
    return logH.hess[..., :n, n:2 * n]


# --------------------------------------------------------------------------
# compatibility with the real structure


def bilinear_form(data: TTData, pts, order: int = 1) -> Jet:
    """``g(d_a, d_b) = h(d_a, k d_b) = H_ab conj(k_b)``."""
    n = data.n
    Hj = data.hermitian(pts, order)
    kj = data._k(pts, order).conj(n)
    return einsum("ab,b->ab", Hj, kj)


def dchk_residual(data: TTData, pts, tol: float = TT_TOL) -> CheckReport:
    """Symmetry, invariance and ``D``-parallelism (both types) of ``g = h(., k .)``."""
    n = data.n
    gj = bilinear_form(data, pts, 1)
    g, dg = gj.val, gj.grad
    c = data.c(pts, 0).val
    G = chern_connection(data, pts, 0).val
    sym = g - np.swapaxes(g, -1, -2)
    inv = np.einsum("pmij,pmk->pijk", c, g) - np.einsum("pmjk,pim->pijk", c, g)
    d10 = (np.einsum("pabi->piab", dg[..., :n]) - np.einsum("pima,pmb->piab", G, g)
           - np.einsum("pimb,pam->piab", G, g))
    d01 = np.einsum("pabj->pjab", dg[..., n:2 * n])
    P = len(pts)
    parts = {"symmetric": sym, "invariant": inv, "parallel10": d10, "parallel01": d01}
    per = np.concatenate([np.abs(v).reshape(P, -1) for v in parts.values()], axis=1)
    meta = {f"{k}_max": float(np.abs(v).max()) for k, v in parts.items()}
    return residual_report("dchk", per, tol, data=data.name, **meta)


# --------------------------------------------------------------------------
# duality conditions


def _field(data: TTData, f) -> VectorField:
    return VectorField.from_exprs(data.chart, _as_exprs(data.chart, f), "E")


def herm1_residual(data: TTData, f, pts, tol: float = TT_TOL) -> CheckReport:
    """``D_X(E o Y o Z) - D_Y(E o X o Z) - E o (D_X(Y o Z) - D_Y(X o Z))`` on coordinate fields."""
    n = data.n
    E = _field(data, f)
    cj = data.c(pts, 1)
    Ej = E(pts, 1)
    YZ = cj  # (d_j o d_l)^k = c^k_jl, indexed [k, j, l]
    EYZ = einsum("kam,a,mjl->kjl", cj, Ej, cj)
    G = chern_connection(data, pts, 0).val

    def D(V: Jet) -> np.ndarray:  # (D_i V[j, l])^r indexed [P, i, r, j, l]
        return (np.einsum("prjli->pirjl", V.grad[..., :n])
                + np.einsum("pira,pajl->pirjl", G, V.val))

    A = D(EYZ)
    B = D(YZ)
    lhs = A - np.einsum("pirjl->pjril", A)
    inner = B - np.einsum("pirjl->pjril", B)
    rhs = np.einsum("pkam,pa,pimjl->pikjl", cj.val, Ej.val, inner)
    return residual_report("herm1", lhs - rhs, tol, data=data.name)


def herm2_commutator(CX: np.ndarray, CY: np.ndarray, K: np.ndarray) -> np.ndarray:
    """``[C_X, k C_Y k]`` where ``k C_Y k = K conj(C_Y) conj(K)``; ``K`` is the diagonal matrix of ``k``."""
    return _comm(CX, K @ np.conj(CY) @ np.conj(K))


def herm2_residual(data: TTData, f, pts, tol: float = TT_TOL) -> CheckReport:
    n = data.n
    E = _field(data, f)(pts, 0).val
    c = data.c(pts, 0).val
    C = np.einsum("pkij->pikj", c)
    K = np.einsum("pi,ij->pij", data.kvals(pts), np.eye(n))
    ME = np.einsum("pkij,pi->pkj", c, E)
    unity = np.stack([u.jet(data.chart.coordinate_jet(pts, 0), 0).val for u in data.unity()], axis=1)
    Einv = np.linalg.solve(ME, unity[..., None])[..., 0]
    MEinv = np.einsum("pkij,pi->pkj", c, Einv)
    # C_{E^-1 o d_i} = sum_m (E^-1 o d_i)^m C_m
    Ct = np.einsum("pmi,pmab->piab", MEinv, C)
    res = []
    for i in range(n):
        for j in range(n):
            lhs = herm2_commutator(C[:, i], C[:, j], K)
            rhs = herm2_commutator(Ct[:, i], Ct[:, j], K)
            res.append(np.abs(lhs - rhs).reshape(len(pts), -1))
    return residual_report("herm2", np.concatenate(res, axis=1), tol, data=data.name)


def dual_structure(data: TTData, f, pts=None, name: str = "") -> TTData:
    """Twist by ``E^{-1/2}`` (principal branch).

    With ``s_i = m_i f_i``, multiplication by ``E^{-1/2}`` scales ``d_i`` by
    ``s_i^{-1/2}``, so ``h_ii = H_ii / |s_i|``, ``k'_i = k_i sqrt(s_i) / conj(sqrt(s_i))``
    and the dual multiplication has diagonal entries ``1 / f_i``.
    """
    if not data.is_diagonal:
        raise TTDataInvalid("dual_structure is implemented for diagonal hermitian data only")
    chart = data.chart
    fe = _as_exprs(chart, f)
    s = [m * fi for m, fi in zip(data.mult, fe)]
    if pts is None:
        pts = data.sample()
    X = chart.coordinate_jet(pts, 0)
    sv = np.stack([si.jet(X, 0).val for si in s], axis=1)
    on_cut = (np.abs(sv.imag) <= 1e-14 * np.maximum(1.0, np.abs(sv))) & (sv.real <= 0)
    bad = np.any(on_cut, axis=1)
    if np.any(bad):
        raise BranchCut(pts[bad])
    root = [chart.parse(f"sqrt({si})") for si in s]
    conj = [chart.parse(f"conj(sqrt({si}))") for si in s]
    absval = [chart.parse(f"sqrt(({si}) * conj({si}))") for si in s]
    one = Expr.const(1.0, chart.coords, "complex")
    H = [data.H[i][i] / absval[i] for i in range(data.n)]
    k = [data.k[i] * root[i] / conj[i] for i in range(data.n)]
    mult = [one / fi for fi in fe]
    return TTData.diagonal(chart, H, k, mult, name or f"{data.name}*")


def dual_dchk_suite(data: TTData, f, pts, tol: float = TT_TOL) -> list[CheckReport]:
    """tt* and DChk residuals of the dual structure, gated on the original passing."""
    gate = [*ttstar_residuals(data, pts, tol), dchk_residual(data, pts, tol),
            herm1_residual(data, f, pts, tol), herm2_residual(data, f, pts, tol)]
    failed = [r.name for r in gate if not r.passed]
    if failed:
        raise PreconditionFailed(f"original structure fails {', '.join(failed)}")
    dual = dual_structure(data, f, pts)
    reps = [*ttstar_residuals(dual, pts, tol), dchk_residual(dual, pts, tol)]
    for r in reps:
        r.name = "dual-" + r.name
    return reps


def flat_pencil_residual(data: TTData, pts, zs=DEFAULT_Z, tol: float = TT_TOL) -> CheckReport:
    """Curvature of ``D + C/z + z C^dag`` on ``(d_i, d_j)`` and ``(d_i, dbar_j)`` pairs."""
    n = data.n
    Gj = chern_connection(data, pts, 1)
    Cj = higgs(data, pts, 1)
    Hj = data.hermitian(pts, 1)
    G, C, Hv = Gj.val, Cj.val, Hj.val
    dG = np.moveaxis(Gj.grad, -1, 1)  # [P, m, i, r, a] = d^m Gam_i (m over all 2n slots)
    dC = np.moveaxis(Cj.grad, -1, 1)
    Cd = adjoint(C, Hv[:, None])
    # derivatives of C^dag by the product rule through H
    dH = np.moveaxis(Hj.grad, -1, 1)  # [P, m, a, b]
    Hc = np.conj(Hv)
    Hci = np.linalg.inv(Hc)
    dHc = np.conj(dH[:, np.r_[n:2 * n, 0:n]])  # d^m conj(H) = conj(dbar^m H)
    dCs = np.conj(np.swapaxes(dC[:, np.r_[n:2 * n, 0:n]], -1, -2))
    Cs = np.conj(np.swapaxes(C, -1, -2))
    # d(Hc^-1 Cs Hc) = -Hc^-1 dHc Hc^-1 Cs Hc + Hc^-1 dCs Hc + Hc^-1 Cs dHc
    A1 = -(Hci[:, None, None] @ dHc[:, :, None] @ Hci[:, None, None] @ Cs[:, None] @ Hc[:, None, None])
    A2 = Hci[:, None, None] @ dCs @ Hc[:, None, None]
    A3 = Hci[:, None, None] @ Cs[:, None] @ dHc[:, :, None]
    dCd = A1 + A2 + A3  # [P, m, i, r, a]
    parts = []
    for z in zs:
        Om = G + C / z  # holomorphic directions
        Omb = z * Cd  # antiholomorphic directions (Gam_jbar = 0)
        dOm = dG + dC / z
        dOmb = z * dCd
        # (1,0)-(1,0): d_i Om_j - d_j Om_i + [Om_i, Om_j]
        F1 = (np.einsum("pijra->pijra", dOm[:, :n]) - np.einsum("pjira->pijra", dOm[:, :n])
              + Om[:, :, None] @ Om[:, None, :] - Om[:, None, :] @ Om[:, :, None])
        # (1,0)-(0,1): d_i Omb_j - dbar_j Om_i + [Om_i, Omb_j]
        F2 = (np.einsum("pijra->pijra", dOmb[:, :n])
              - np.einsum("pjira->pijra", dOm[:, n:2 * n])
              + Om[:, :, None] @ Omb[:, None, :] - Omb[:, None, :] @ Om[:, :, None])
        parts += [np.abs(F1).reshape(len(pts), -1), np.abs(F2).reshape(len(pts), -1)]
    return residual_report("flat-pencil", np.concatenate(parts, axis=1), tol, data=data.name,
                           z=[str(z) for z in zs])


def herm1_duality_check(data: TTData, f, pts, tol: float = TT_TOL) -> CheckReport:
    """The dual form of the first duality condition: dual connection, dual product, unity ``e``."""
    dual = dual_structure(data, f, pts)
    rep = herm1_residual(dual, data.unity(), pts, tol)
    rep.name = "herm1-dual"
    return rep
