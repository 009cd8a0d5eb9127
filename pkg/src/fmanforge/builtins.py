"""Built-in example manifests.

Each entry is a plain manifest dictionary; ``suites`` lists the suites the
fixture is designed to pass. Fixtures with an empty list exist to exercise
failure paths.
"""

from __future__ import annotations

import copy

from .manifest import Manifest, build_manifest


def _semisimple(name: str, n: int, fields: dict, box=(-1.0, 1.0), **extra) -> dict:
    data = {
        "name": name,
        "dimension": n,
        "coordinates": [f"u{i + 1}" for i in range(n)],
        "domain": [list(box)] * n,
        "multiplication": {"semisimple": True},
        "unity": ["1"] * n,
        "vector_fields": fields,
    }
    data.update(extra)
    return data


_SEPARATED = ["1+u1^2", "exp(u2)", "2+u3", "2+sin(u4)"]

_REGISTRY: dict[str, dict] = {}


def _register(data: dict) -> None:
    _REGISTRY[data["name"]] = data


for _n in (2, 3, 4):
    _register(_semisimple(f"semisimple{_n}", _n, {"E": _SEPARATED[:_n]},
                          defaults={"field": "E", "eventual": "E"},
                          suites=["f-manifold", "eventual", "dual"]))

_register({
    "name": "hertling2d",
    "description": "two-dimensional non-semisimple algebra with a nilpotent direction",
    "dimension": 2,
    "coordinates": ["x1", "x2"],
    "domain": [[0.5, 1.5], [-1.0, 1.0]],
    "multiplication": {"entries": [{"i": 1, "j": 1, "k": 1, "expr": "1"},
                                   {"i": 1, "j": 2, "k": 2, "expr": "1"}]},
    "unity": ["1", "0"],
    "vector_fields": {"E1": ["1+x1^2", "x1*x2"]},
    "coidentities": {"eps": ["x1", "1"]},
    "metrics": {"gt": {"coidentity": "eps"}},
    "defaults": {"field": "E1", "eventual": "E1", "metric": "gt"},
    "suites": ["f-manifold", "eventual", "dual", "compat", "riemannian"],
})

_register(_semisimple(
    "egorov3", 3, {"E": ["1+u1^2", "1+u2^2", "1+u3^2"]}, box=(0.5, 1.5),
    description="flat potential metric diag(u) with a separated eventual identity",
    coidentities={"eps": ["u1", "u2", "u3"]},
    metrics={"gt": {"coidentity": "eps"}},
    flows=[{"name": "E-flow", "velocity": "E", "metric": "gt"}],
    defaults={"field": "E", "eventual": "E", "metric": "gt"},
    suites=["f-manifold", "eventual", "dual", "compat", "riemannian", "hydro", "tsarev"]))

_register(_semisimple(
    "semiham3", 3, {"E": ["1+u1^2", "exp(u2)", "2+u3"]}, box=(0.5, 1.5),
    description="curved potential metric with symmetric, semi-Hamiltonian rotation coefficients",
    metrics={"gt": {"diag": ["u2+2*u1", "u1+2*u2", "3*u3^2"]}},
    defaults={"field": "E", "eventual": "E", "metric": "gt"},
    suites=["f-manifold", "eventual", "dual", "compat", "riemannian"]))

_register(_semisimple(
    "egorov3-curved", 3, {"E": ["1+u1^2", "exp(u2)", "2+u3"]}, box=(0.5, 1.5),
    description="curved potential metric failing the cyclic curvature condition",
    metrics={"gt": {"diag": ["u2*u3+2*u1", "u1*u3+2*u2", "u1*u2+2*u3"]}},
    defaults={"field": "E", "eventual": "E", "metric": "gt"},
    suites=["f-manifold", "eventual", "dual"]))

_register(_semisimple(
    "nonclosed2", 2, {}, box=(0.5, 1.5),
    description="invariant diagonal metric whose coidentity is not closed",
    metrics={"gt": {"diag": ["1", "u1"]}},
    defaults={"metric": "gt", "eventual": "e"},
    suites=["f-manifold"]))

_register({
    "name": "flows1d",
    "description": "scalar flows u_t = a(u) u_x: transport, Burgers and a quadratic speed",
    "dimension": 1,
    "coordinates": ["u1"],
    "domain": [[-2.0, 2.0]],
    "multiplication": {"semisimple": True},
    "unity": ["1"],
    "vector_fields": {"A": ["1"], "B": ["u1"], "C": ["u1^2"]},
    "metrics": {"g": {"diag": ["1"]}},
    "flows": [{"name": "transport", "velocity": "A", "metric": "g"},
              {"name": "burgers", "velocity": "B", "metric": "g"},
              {"name": "quadratic", "velocity": "C", "metric": "g"}],
    "simulation": {"initial": ["0.5+0.2*sin(x)"], "exact": {"transport": ["0.5+0.2*sin(x+t)"]},
                   "viscosity": 0.5},
    "suites": ["f-manifold", "hydro", "tsarev"],
})

_register(_semisimple(
    "tsarev2", 2, {"lam": ["u2", "u1"]}, box=(0.0, 1.0),
    description="speeds (u2, u1) with the diagonal metric 1/(u1-u2)^2",
    domain=[[2.0, 3.0], [0.0, 1.0]],
    metrics={"gt": {"diag": ["1/(u1-u2)^2", "1/(u1-u2)^2"]},
             "gt-free": {"diag": ["1/((u1-u2)^2*(1+u1^2))", "1/((u1-u2)^2*exp(u2))"]},
             "broken": {"diag": ["1", "exp(2*u1)"]}},
    flows=[{"name": "lam", "velocity": "lam", "metric": "gt"},
           {"name": "lam-free", "velocity": "lam", "metric": "gt-free"}],
    suites=["f-manifold", "tsarev"]))

_register({
    "name": "ttdiag2",
    "description": "diagonal tt* data with pluriharmonic exponents",
    "flavor": "complex",
    "dimension": 2,
    "coordinates": ["u1", "u2"],
    "domain": [[-0.5, 0.5], [-0.5, 0.5]],
    "multiplication": {"semisimple": True},
    "unity": ["1", "1"],
    "vector_fields": {"E": ["2+u1", "3+u2^2"]},
    "hermitian": {"H": ["exp(u1+conj(u1))", "exp(u2+conj(u2))"]},
    "real_structures": {"k": ["exp(conj(u1)-u1)", "exp(conj(u2)-u2)"]},
    "defaults": {"eventual": "E", "field": "E", "hermitian": "H", "real_structure": "k"},
    "suites": ["f-manifold", "eventual", "ttstar"],
})

_register({
    "name": "ttnonharm2",
    "description": "diagonal hermitian metric exp(|u1|^2) violating the tt* equations",
    "flavor": "complex",
    "dimension": 2,
    "coordinates": ["u1", "u2"],
    "domain": [[-0.5, 0.5], [-0.5, 0.5]],
    "multiplication": {"semisimple": True},
    "unity": ["1", "1"],
    "vector_fields": {"E": ["2+u1", "3+u2^2"]},
    "hermitian": {"H": ["exp(u1*conj(u1))", "1"]},
    "real_structures": {"k": ["1", "1"]},
    "defaults": {"eventual": "E", "field": "E", "hermitian": "H", "real_structure": "k"},
    "suites": ["f-manifold"],
})


def builtin_names() -> list[str]:
    return sorted(_REGISTRY)


def builtin_data(name: str) -> dict:
    if name not in _REGISTRY:
        raise KeyError(f"unknown builtin {name!r}; available: {', '.join(builtin_names())}")
    return copy.deepcopy(_REGISTRY[name])


def builtin(name: str) -> Manifest:
    return build_manifest(builtin_data(name))


def builtin_registry() -> list[Manifest]:
    return [builtin(n) for n in builtin_names()]
