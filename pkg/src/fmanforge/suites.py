"""Suite dispatch: turn a manifest plus a suite name into a ``RunReport``."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .chart import VectorField
from .eventual import (char_residual, dual_unity_residual, dualize, invert_field, invertibility_guard,
                       involution_residual, power_bracket_residual, weak_vector_residual)
from .expr import parse
from .fmanifold import algebra_residual, hm_residual
from .hydro import (curvature_identity_for_solutions, distinct_speeds_guard, dual_flow_residual,
                    flow_condition_residual, initial_profile, simulate, tsarev_residual)
from .manifest import Manifest
from .metric import (almost_compat_residual, bianchi_residual, closedness_report, coidentity_of, compat_g1_residual,
                     compat_g2_residual, curvature_pencil_residual, intersection_metric, invariance_residual,
                     koszul_residual, nabla_g_residual, nijenhuis_residual, nondegeneracy_guard,
                     pair_nijenhuis_residual, q_curvature_crosscheck, riemannian_residual, s_operator_residual,
                     semi_hamiltonian_residual, symmetry_defect_residual, symmetry_residual,
                     total_symmetry_residual, weak_symmetry_residual)
from .report import CheckReport, error_report
from .ttstar import (TTData, dchk_residual, dual_dchk_suite, flat_pencil_residual, herm1_duality_check,
                     PreconditionFailed, herm1_residual, herm2_residual, holomorphy_defect,
                     ttstar_residuals)

SUITES = ("f-manifold", "eventual", "dual", "compat", "riemannian", "hydro", "tsarev", "ttstar")
POWER_PAIRS = ((-1, 0), (0, 1), (1, 2), (-1, 2))


class MissingObject(LookupError):
    pass


@dataclass
class RunOptions:
    field: str | None = None
    metric: str | None = None
    eventual: str | None = None
    hermitian: str | None = None
    real_structure: str | None = None
    points: int | None = None
    seed: int | None = None
    tol: float | None = None


@dataclass
class RunReport:
    manifest: str
    suite: str
    checks: list[CheckReport]
    seed: int
    points: int
    wall_time: float = 0.0
    version: str = __version__
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def errored(self) -> bool:
        return any(c.error is not None for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.errored:
            return 2
        return 0 if self.passed else 1

    def to_dict(self, with_time: bool = True) -> dict:
        out = {"manifest": self.manifest, "suite": self.suite, "passed": self.passed,
               "engine_version": self.version, "seed": self.seed, "points": self.points,
               "checks": [c.to_dict() for c in self.checks]}
        if self.extra:
            out["extra"] = self.extra
        if with_time:
            out["wall_time_s"] = self.wall_time
        return out

    def to_json(self, with_time: bool = True) -> str:
        return json.dumps(self.to_dict(with_time), sort_keys=True, indent=2, allow_nan=False, default=str)

    def table(self) -> str:
        head = f"{self.manifest} :: {self.suite}"
        if self.points:
            head += f"  (seed={self.seed}, points={self.points})"
        lines = [head, "-" * len(head)]
        for c in self.checks:
            note = c.error or c.meta.get("refused")
            lines.append(c.line() + (f"  [{note}]" if note else ""))
        lines.append(f"OVERALL {'PASS' if self.passed else 'FAIL'}  ({self.wall_time:.2f}s)")
        return "\n".join(lines)


def _renamed(rep: CheckReport, name: str) -> CheckReport:
    rep.name = name
    return rep


class _Context:
    def __init__(self, m: Manifest, opts: RunOptions):
        self.m = m
        self.opts = opts
        self.F = m.patch
        self.seed = opts.seed if opts.seed is not None else m.seed
        self.points = opts.points if opts.points is not None else m.points

    def name(self, key: str) -> str | None:
        return getattr(self.opts, key) or self.m.defaults.get(key)

    def vector(self, key: str) -> VectorField:
        name = self.name(key)
        if name is None:
            raise MissingObject(f"no {key} selected (use --{key.replace('_', '-')} or manifest defaults)")
        if name not in self.m.fields:
            raise MissingObject(f"undefined vector field {name!r}")
        return self.m.fields[name]

    def metric(self):
        name = self.name("metric")
        if name is None:
            raise MissingObject("no metric selected (use --metric or manifest defaults)")
        if name not in self.m.metrics:
            raise MissingObject(f"undefined metric {name!r}")
        return self.m.metrics[name]

    def sample(self, guards=()):
        return self.F.sample(self.points, self.seed, guards)


def _run(checks, tol_for) -> list[CheckReport]:
    out = []
    for name, thunk in checks:
        try:
            res = thunk()
        except Exception as exc:  # engine errors are recorded per check
            out.append(error_report(name, tol_for(name, None), exc))
            continue
        for rep in (res if isinstance(res, (list, tuple)) else [res]):
            out.append(rep)
    return out


def _fmanifold_checks(cx: _Context):
    pts = cx.sample()
    return [("algebra", lambda: algebra_residual(cx.F, pts)),
            ("hertling-manin", lambda: hm_residual(cx.F, pts))]


def _eventual_checks(cx: _Context):
    F, E = cx.F, cx.vector("field")
    pts = cx.sample([invertibility_guard(F, E)])
    checks = [("eventual-identity", lambda: char_residual(F, E, pts)),
              ("weak-vector", lambda: weak_vector_residual(F, E, pts)),
              ("eventual-inverse", lambda: _renamed(char_residual(F, invert_field(F, E), pts), "eventual-inverse"))]
    for n, m in POWER_PAIRS:
        checks.append((f"power-bracket({n},{m})",
                       lambda n=n, m=m: _renamed(power_bracket_residual(F, E, n, m, pts, 1e-8),
                                                 f"power-bracket({n},{m})")))
    return checks


def _dual_checks(cx: _Context):
    F, E = cx.F, cx.vector("eventual")
    pts = cx.sample([invertibility_guard(F, E)])
    D = dualize(F, E)
    return [("dual-algebra", lambda: _renamed(algebra_residual(D, pts), "dual-algebra")),
            ("dual-hertling-manin", lambda: _renamed(hm_residual(D, pts), "dual-hertling-manin")),
            ("dual-unity", lambda: dual_unity_residual(D, pts)),
            ("dual-involution", lambda: involution_residual(F, E, pts)),
            ("unity-eventual-on-dual", lambda: _renamed(char_residual(D, F.e, pts), "unity-eventual-on-dual"))]


def _compat_checks(cx: _Context):
    F, E, gt = cx.F, cx.vector("eventual"), cx.metric()
    g = intersection_metric(F, gt, E)
    D = dualize(F, E)
    pts = cx.sample([invertibility_guard(F, E), nondegeneracy_guard(gt), nondegeneracy_guard(g)])
    eps = coidentity_of(gt, F.e)
    return [
        ("metric-symmetry[g~]", lambda: _renamed(symmetry_residual(gt, pts), "metric-symmetry[g~]")),
        ("invariance[g~]", lambda: _renamed(invariance_residual(gt, F, pts), "invariance[g~]")),
        ("invariance[g]", lambda: _renamed(invariance_residual(g, D, pts), "invariance[g]")),
        ("nabla-g[g~]", lambda: _renamed(nabla_g_residual(gt, pts), "nabla-g[g~]")),
        ("nabla-g[g]", lambda: _renamed(nabla_g_residual(g, pts), "nabla-g[g]")),
        ("bianchi[g~]", lambda: _renamed(bianchi_residual(gt, pts), "bianchi[g~]")),
        ("bianchi[g]", lambda: _renamed(bianchi_residual(g, pts), "bianchi[g]")),
        ("koszul[g~]", lambda: _renamed(koszul_residual(gt, pts), "koszul[g~]")),
        ("symmetry-defect[g~]", lambda: _renamed(symmetry_defect_residual(F, gt, pts), "symmetry-defect[g~]")),
        ("symmetry-defect[g]", lambda: _renamed(symmetry_defect_residual(D, g, pts), "symmetry-defect[g]")),
        ("coidentity-closed", lambda: closedness_report(eps, pts)),
        ("total-symmetry", lambda: total_symmetry_residual(F, gt, pts)),
        ("weak-symmetry", lambda: weak_symmetry_residual(F, gt, E, pts)),
        ("nijenhuis[E]", lambda: _renamed(nijenhuis_residual(F, E, pts), "nijenhuis[E]")),
        ("nijenhuis[pair]", lambda: _renamed(pair_nijenhuis_residual(g, gt, pts), "nijenhuis[pair]")),
        ("almost-compatible", lambda: almost_compat_residual(g, gt, pts)),
        ("compatible-g2", lambda: compat_g2_residual(g, gt, pts)),
        ("compatible-g1", lambda: compat_g1_residual(g, gt, pts)),
        ("curvature-pencil", lambda: curvature_pencil_residual(g, gt, pts)),
        ("s-operator", lambda: s_operator_residual(F, gt, E, pts)),
        ("q-curvature", lambda: q_curvature_crosscheck(F, gt, E, pts)),
    ]


def _is_diagonal(g) -> bool:
    if g.exprs is None:
        return False
    n = len(g.exprs)
    return all(g.exprs[i][j].is_zero() for i in range(n) for j in range(n) if i != j)


def _riemannian_checks(cx: _Context):
    F, gt = cx.F, cx.metric()
    guards = [nondegeneracy_guard(gt)]
    E_name = cx.name("eventual")
    checks = []
    if E_name is not None:
        E = cx.vector("eventual")
        g = intersection_metric(F, gt, E)
        guards += [invertibility_guard(F, E), nondegeneracy_guard(g)]
    pts = cx.sample(guards)
    checks.append(("riemannian[g~]", lambda: _renamed(riemannian_residual(F, gt, pts), "riemannian[g~]")))
    if E_name is not None:
        checks.append(("riemannian[g]", lambda: _renamed(riemannian_residual(dualize(F, E), g, pts),
                                                         "riemannian[g]")))
    if F.semisimple and _is_diagonal(gt):
        checks.append(("semi-hamiltonian", lambda: semi_hamiltonian_residual(gt, pts)))
    return checks


def _hydro_checks(cx: _Context):
    F = cx.F
    flows = [f for f in cx.m.flows if f.metric is not None]
    if not flows:
        raise MissingObject("manifest declares no flows with a metric")
    E_name = cx.name("eventual")
    checks = []
    for fl in flows:
        pts = cx.sample([nondegeneracy_guard(fl.metric)])
        checks.append((f"flow-condition[{fl.name}]",
                       lambda fl=fl, pts=pts: _renamed(flow_condition_residual(fl.metric, F, fl.velocity, pts),
                                                       f"flow-condition[{fl.name}]")))
        checks.append((f"flow-curvature[{fl.name}]",
                       lambda fl=fl, pts=pts: _renamed(
                           curvature_identity_for_solutions(fl.metric, F, fl.velocity, pts),
                           f"flow-curvature[{fl.name}]")))
        if E_name is not None:
            E = cx.vector("eventual")
            dpts = cx.sample([nondegeneracy_guard(fl.metric), invertibility_guard(F, E)])
            checks.append((f"dual-flow-condition[{fl.name}]",
                           lambda fl=fl, E=E, dpts=dpts: _renamed(
                               dual_flow_residual(F, fl.metric, fl.velocity, E, dpts),
                               f"dual-flow-condition[{fl.name}]")))
    return checks


def _tsarev_checks(cx: _Context):
    F = cx.F
    if not F.semisimple:
        raise MissingObject("Tsarev's equations need canonical coordinates (a semisimple patch)")
    flows = [f for f in cx.m.flows if f.metric is not None and _is_diagonal(f.metric)]
    if not flows:
        raise MissingObject("manifest declares no flows with a diagonal metric")
    checks = []
    for fl in flows:
        pts = cx.sample([distinct_speeds_guard(fl.velocity), nondegeneracy_guard(fl.metric)])
        checks.append((f"tsarev[{fl.name}]",
                       lambda fl=fl, pts=pts: _renamed(tsarev_residual(fl.metric, fl.velocity, pts),
                                                       f"tsarev[{fl.name}]")))
    return checks


def _ttstar_checks(cx: _Context):
    m, F = cx.m, cx.F
    if m.flavor != "complex" or not F.semisimple:
        raise MissingObject("tt* checks need a complex semisimple manifest")
    hname, kname = cx.name("hermitian"), cx.name("real_structure")
    if hname is None or hname not in m.hermitian:
        raise MissingObject("no hermitian metric selected")
    if kname is None or kname not in m.real_structures:
        raise MissingObject("no real structure selected")
    E = cx.vector("eventual")
    data = TTData.diagonal(m.chart, m.hermitian[hname], m.real_structures[kname], name=m.name)
    f = E.exprs
    pts = cx.sample()

    def valid():
        data.validate(pts)
        hol = holomorphy_defect(m.chart, f, pts)
        return CheckReport("tt-data-valid", 1e-12, np.array([hol]), {"holomorphy_defect": hol})

    return [("tt-data-valid", valid),
            ("ttstar", lambda: list(ttstar_residuals(data, pts))),
            ("dchk", lambda: dchk_residual(data, pts)),
            ("herm1", lambda: herm1_residual(data, f, pts)),
            ("herm2", lambda: herm2_residual(data, f, pts)),
            ("dual-dchk", lambda: _gated_dual(data, f, pts)),
            ("flat-pencil", lambda: flat_pencil_residual(data, pts)),
            ("herm1-dual", lambda: herm1_duality_check(data, f, pts))]


def _gated_dual(data, f, pts):
    try:
        return dual_dchk_suite(data, f, pts)
    except PreconditionFailed as exc:
        # a refused run is a failed check, not an engine error
        return CheckReport("dual-dchk", 1e-8, np.array([np.nan]), {"refused": str(exc)})


_BUILDERS = {"f-manifold": _fmanifold_checks, "eventual": _eventual_checks, "dual": _dual_checks,
             "compat": _compat_checks, "riemannian": _riemannian_checks, "hydro": _hydro_checks,
             "tsarev": _tsarev_checks, "ttstar": _ttstar_checks}


def run_suite(m: Manifest, suite: str, opts: RunOptions | None = None) -> RunReport:
    """Run one suite (or ``all`` applicable suites) and collect the reports.

    A missing object for an explicitly named suite raises ``MissingObject``;
    errors inside individual checks are recorded on those checks.
    """
    opts = opts or RunOptions()
    if suite != "all" and suite not in _BUILDERS:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join((*SUITES, 'all'))}")
    cx = _Context(m, opts)
    t0 = time.perf_counter()

    def tol_for(name, current):
        if opts.tol is not None:
            return opts.tol
        if name in m.tolerances:
            return m.tolerances[name]
        return current if current is not None else 1e-9

    suites, checks = [], []
    for s in (SUITES if suite == "all" else [suite]):
        try:
            built = _BUILDERS[s](cx)
        except MissingObject:
            if suite == "all":
                continue
            raise
        except Exception as exc:  # setup failures (e.g. sampling) count as engine errors
            built = [(f"{s}-setup", lambda exc=exc: (_ for _ in ()).throw(exc))]
        suites.append(s)
        checks += _run(built, tol_for)
    for c in checks:
        c.tolerance = tol_for(c.name, c.tolerance)
    return RunReport(m.name, suite, checks, cx.seed, cx.points, time.perf_counter() - t0,
                     extra={"suites": suites} if suite == "all" else {})


# --------------------------------------------------------------------------
# simulation


def _exact_profile(texts, x: np.ndarray, t: float) -> np.ndarray:
    from .chart import Chart

    chart = Chart(("x", "t"), [(0.0, 1.0), (0.0, 1.0)])
    X = chart.coordinate_jet(np.stack([x, np.full_like(x, t)], axis=1), 0)
    return np.stack([parse(s, ("x", "t")).jet(X, 0).val for s in texts], axis=1)


def simulate_manifest(m: Manifest, flows: list[str], grids: list[int], dt: float, t_end: float,
                      tol: float | None = None, dump=None) -> RunReport:
    """Simulate one flow (with an error study if an exact solution is declared)
    or measure the commutation defect of two flows over a list of grids.

    ``dt`` applies to the first grid and scales with the cell size on finer ones.
    CFL violations and blow-ups propagate to the caller.
    """
    if not 1 <= len(flows) <= 2:
        raise ValueError("simulate takes one or two --flow arguments")
    sim = m.simulation
    if "initial" not in sim:
        raise MissingObject("manifest has no simulation.initial profile")
    nu = sim.get("viscosity", 0.5)
    L = sim.get("length", 2 * math.pi)
    F = m.patch
    specs = [m.flow(f) for f in flows]
    t0 = time.perf_counter()
    checks, extra = [], {"grids": list(grids), "dt": dt, "t_end": t_end, "flows": list(flows)}
    dts = [dt * grids[0] / g for g in grids]
    if len(specs) == 1:
        exact = sim.get("exact", {}).get(flows[0])
        errs, traj = [], None
        for g, d in zip(grids, dts):
            traj = simulate(F, specs[0].velocity, sim["initial"], g, d, t_end, nu, L)
            if exact is not None:
                ref = _exact_profile(exact, traj.x, traj.times[-1])
                errs.append(float(np.max(np.abs(traj.final - ref))))
        if exact is not None:
            checks.append(CheckReport("simulate-error", tol if tol is not None else 1e-2, np.array(errs),
                                      {"errors": errs}))
            if len(errs) > 1:
                ratios = [a / b for a, b in zip(errs, errs[1:])]
                gap = [max(0.0, 3.5 - r, r - 4.5) for r in ratios]
                checks.append(CheckReport("second-order-convergence", 0.0, np.array(gap), {"ratios": ratios}))
        else:
            final = traj.final
            checks.append(CheckReport("simulate", math.inf, np.array([float(np.max(np.abs(final)))]),
                                      {"final_max": float(np.max(np.abs(final)))}))
        if dump is not None:
            traj.write_csv(dump)
    else:
        from .hydro import commutation_defect

        defects = [commutation_defect(F, specs[0].velocity, specs[1].velocity, sim["initial"], g, d, t_end, nu)
                   for g, d in zip(grids, dts)]
        checks.append(CheckReport("commutation-defect", tol if tol is not None else 1e-3, np.array(defects),
                                  {"defects": defects}))
        rise = [max(0.0, b - a) for a, b in zip(defects, defects[1:])] or [0.0]
        checks.append(CheckReport("commutation-refinement", 0.0, np.array(rise), {"defects": defects}))
        if dump is not None:
            x = np.arange(grids[-1]) * (L / grids[-1])
            u0 = initial_profile(sim["initial"], x)
            simulate(F, specs[0].velocity, u0, grids[-1], dts[-1], t_end, nu, L).write_csv(dump)
    return RunReport(m.name, "simulate:" + "+".join(flows), checks, 0, 0, time.perf_counter() - t0, extra=extra)
