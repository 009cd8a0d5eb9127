"""Hydrodynamic-type flows ``U_t = X o U_x``: the flow condition, Tsarev's
equations, twisted flows, and a small periodic method-of-lines simulator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .chart import VectorField
from .eventual import dualize
from .expr import parse
from .fmanifold import FPatch, mult_at
from .metric import Geometry, MetricField, curvature, intersection_metric
from .report import DEFAULT_TOL, CheckReport, residual_report

DEFAULT_VISCOSITY = 0.5
CFL_LIMIT = 0.5
BLOWUP_LIMIT = 1e6


class CoincidentSpeeds(ArithmeticError):
    def __init__(self, points):
        self.points = np.asarray(points)
        super().__init__(f"characteristic speeds coincide at {self.points.size} point(s)")


class CFLViolation(RuntimeError):
    pass


class SimulationBlowup(RuntimeError):
    def __init__(self, message: str, last_state: "GridState"):
        self.last_state = last_state
        super().__init__(message)


@dataclass
class FlowSpec:
    patch: FPatch
    velocity: VectorField
    metric: MetricField | None = None
    name: str = ""


def _nabla_field(G: Geometry, X: VectorField) -> np.ndarray:
    """``(nabla_z X)^l`` indexed ``[P, l, z]``."""
    n = G.n
    xj = X(G.pts, 1)
    return xj.grad[..., :n] + np.einsum("plzm,pm->plz", G.gamma, xj.val)


def flow_condition_tensor(g: MetricField, F: FPatch, X: VectorField, pts) -> np.ndarray:
    """``(nabla_Z X) o V - (nabla_V X) o Z`` on coordinate fields, ``[P, k, z, v]``."""
    G = Geometry(g, pts, 1)
    nX = _nabla_field(G, X)
    c = F.c(pts, 0).val
    t = np.einsum("pklv,plz->pkzv", c, nX)
    return t - np.swapaxes(t, -1, -2)


def flow_condition_residual(g: MetricField, F: FPatch, X: VectorField, pts,
                            tol: float = DEFAULT_TOL) -> CheckReport:
    return residual_report("flow-condition", flow_condition_tensor(g, F, X, pts), tol,
                           metric=g.label, field=X.label)


def curvature_identity_for_solutions(g: MetricField, F: FPatch, X: VectorField, pts,
                                     tol: float = 1e-7) -> CheckReport:
    """``Z o R(V,Y)X + V o R(Y,Z)X + Y o R(Z,V)X`` for a fixed field ``X``, ``[P, k, y, z, v]``."""
    R = curvature(g, pts)
    RX = np.einsum("plmij,pm->plij", R, X(pts, 0).val)  # R(d_i, d_j) X
    c = F.c(pts, 0).val
    r = (np.einsum("pkzl,plvy->pkyzv", c, RX) + np.einsum("pkvl,plyz->pkyzv", c, RX)
         + np.einsum("pkyl,plzv->pkyzv", c, RX))
    return residual_report("flow-curvature", r, tol, metric=g.label, field=X.label)


def twist_flow(F: FPatch, X: VectorField, E: VectorField) -> VectorField:
    """The twisted velocity ``X o E``."""
    return mult_at(F, X, E)


def dual_flow_residual(F: FPatch, g_t: MetricField, X: VectorField, E: VectorField, pts,
                       tol: float = 1e-7) -> CheckReport:
    """Flow condition for ``X o E`` with the intersection metric and the dual product."""
    g = intersection_metric(F, g_t, E)
    D = dualize(F, E)
    r = flow_condition_tensor(g, D, twist_flow(F, X, E), pts)
    return residual_report("dual-flow-condition", r, tol, field=X.label, eventual=E.label)


def distinct_speeds_guard(speeds: VectorField, rtol: float = 1e-8):
    def guard(pts):
        lam = speeds(pts, 0).val
        gap = np.abs(lam[:, :, None] - lam[:, None, :])
        scale = 1.0 + np.abs(lam).max(axis=1)
        n = lam.shape[1]
        off = ~np.eye(n, dtype=bool)
        return np.all(gap[:, off] > rtol * scale[:, None], axis=1)

    return guard


def tsarev_residual(g: MetricField, speeds: VectorField, pts, tol: float = DEFAULT_TOL) -> CheckReport:
    """``d_i log sqrt(g_jj) - d_i lam^j / (lam^i - lam^j)`` for ``i != j`` (diagonal metric)."""
    n = g.chart.n
    ok = distinct_speeds_guard(speeds)(pts)
    if not np.all(ok):
        raise CoincidentSpeeds(np.flatnonzero(~ok))
    gj = g(pts, 1)
    gd = np.einsum("pjj->pj", gj.val)
    dgd = np.einsum("pjji->pji", gj.grad[..., :n])  # [j, i] = d_i g_jj
    lj = speeds(pts, 1)
    lam, dlam = lj.val, lj.grad[..., :n]  # dlam[j, i] = d_i lam^j
    lhs = 0.5 * dgd / gd[:, :, None]
    denom = lam[:, None, :] - lam[:, :, None]  # [j, i] = lam^i - lam^j
    off = ~np.eye(n, dtype=bool)
    safe = np.where(off, denom, 1.0)
    r = np.where(off, lhs - dlam / safe, 0.0)
    return residual_report("tsarev", r, tol, metric=g.label, speeds=speeds.label)


# --------------------------------------------------------------------------
# simulator


@dataclass
class GridState:
    t: float
    u: np.ndarray  # (m, n)
    dx: float
    dt: float
    nu: float


@dataclass
class Trajectory:
    x: np.ndarray
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def write_csv(self, path) -> None:
        n = self.states[0].shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x"] + [f"u{k + 1}" for k in range(n)])
            for t, u in zip(self.times, self.states):
                for xi, row in zip(self.x, u):
                    w.writerow([repr(float(t)), repr(float(xi))] + [repr(float(v)) for v in row])


def initial_profile(texts, x: np.ndarray) -> np.ndarray:
    """Evaluate initial data given as expressions in the single symbol ``x``."""
    from .chart import Chart

    chart = Chart(("x",), [(0.0, 1.0)])
    cols = []
    for t in texts:
        ex = parse(str(t), ("x",))
        cols.append(ex.jet(chart.coordinate_jet(x[:, None], 0), 0).val)
    return np.stack(cols, axis=1)


def _velocity_matrix(F: FPatch, X: VectorField, u: np.ndarray) -> np.ndarray:
    """``(X o)^k_j = c^k_ij X^i`` evaluated at the states ``u``."""
    return np.einsum("pkij,pi->pkj", F.c(u, 0).val, X(u, 0).val)


def _rhs(F, X, u, dx, nu):
    up, um = np.roll(u, -1, axis=0), np.roll(u, 1, axis=0)
    ux = (up - um) / (2 * dx)
    A = _velocity_matrix(F, X, u)
    return np.einsum("pkj,pj->pk", A, ux) + nu * (up - 2 * u + um)


def simulate(F: FPatch, X: VectorField, u0, m: int, dt: float, T: float,
             nu: float = DEFAULT_VISCOSITY, L: float = 2 * math.pi,
             keep: bool = True) -> Trajectory:
    """RK4 in time, central differences in space, viscosity ``nu dx^2 u_xx``, periodic on ``[0, L)``.

    ``u0`` is a list of expressions in ``x`` or an ``(m, n)`` array.
    """
    if m < 8:
        raise ValueError("grid needs at least 8 cells")
    dx = L / m
    x = np.arange(m) * dx
    u = initial_profile(u0, x) if not isinstance(u0, np.ndarray) else np.array(u0, dtype=float)
    steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / steps
    traj = Trajectory(x)
    traj.times.append(0.0)
    traj.states.append(u.copy())
    t = 0.0
    for _ in range(steps):
        speed = np.max(np.abs(np.linalg.eigvals(_velocity_matrix(F, X, u))))
        cfl = speed * dt / dx
        if cfl > CFL_LIMIT:
            raise CFLViolation(f"CFL number {cfl:.3f} exceeds {CFL_LIMIT} at t={t:.4g}")
        k1 = _rhs(F, X, u, dx, nu)
        k2 = _rhs(F, X, u + 0.5 * dt * k1, dx, nu)
        k3 = _rhs(F, X, u + 0.5 * dt * k2, dx, nu)
        k4 = _rhs(F, X, u + dt * k3, dx, nu)
        new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > BLOWUP_LIMIT:
            raise SimulationBlowup(f"solution blew up at t={t + dt:.4g}",
                                   GridState(t, u, dx, dt, nu))
        u = new
        t += dt
        if keep:
            traj.times.append(t)
            traj.states.append(u.copy())
    if not keep:
        traj.times.append(t)
        traj.states.append(u.copy())
    return traj


def commutation_defect(F: FPatch, A: VectorField, B: VectorField, u0, m: int, dt: float, T: float,
                       nu: float = DEFAULT_VISCOSITY) -> float:
    """``max |Phi_A(T) Phi_B(T) u0 - Phi_B(T) Phi_A(T) u0|`` over the grid."""
    ab = simulate(F, A, simulate(F, B, u0, m, dt, T, nu, keep=False).final, m, dt, T, nu, keep=False).final
    ba = simulate(F, B, simulate(F, A, u0, m, dt, T, nu, keep=False).final, m, dt, T, nu, keep=False).final
    return float(np.max(np.abs(ab - ba)))


def refinement_study(F: FPatch, A: VectorField, B: VectorField, u0, grids=(64, 128, 256),
                     cfl: float = 0.4, T: float = 0.5, nu: float = DEFAULT_VISCOSITY,
                     speed: float = 1.0, L: float = 2 * math.pi) -> list[float]:
    """Commutation defects on successively refined grids with ``dt`` tied to ``dx``."""
    out = []
    for m in grids:
        dt = cfl * (L / m) / speed
        out.append(commutation_defect(F, A, B, u0, m, dt, T, nu))
    return out
