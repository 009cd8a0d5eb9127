"""JSON manifests: schema validation, name resolution and construction of
the engine objects a manifest describes.

Structure-constant and metric indices in manifests are 1-based, matching
coordinate names like ``u1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .chart import DEFAULT_POINTS, DEFAULT_SEED, Chart, VectorField
from .expr import Expr, ExprError
from .fmanifold import FPatch
from .metric import MetricField, metric_from_coidentity


class ManifestError(ValueError):
    """A manifest problem located by a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


class ManifestSchemaError(ManifestError):
    pass


class ManifestExprError(ManifestError):
    def __init__(self, pointer: str, exc: ExprError):
        self.offset = exc.offset
        self.cause = exc
        super().__init__(pointer, str(exc))


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


@lru_cache(maxsize=1)
def manifest_schema() -> dict:
    text = resources.files("fmanforge").joinpath("schema/manifest.schema.json").read_text()
    return json.loads(text)


@dataclass
class Flow:
    name: str
    velocity: VectorField
    metric: MetricField | None


@dataclass
class Manifest:
    name: str
    chart: Chart
    patch: FPatch
    fields: dict[str, VectorField] = field(default_factory=dict)
    metrics: dict[str, MetricField] = field(default_factory=dict)
    coidentities: dict[str, VectorField] = field(default_factory=dict)
    hermitian: dict[str, list[Expr]] = field(default_factory=dict)
    real_structures: dict[str, list[Expr]] = field(default_factory=dict)
    flows: list[Flow] = field(default_factory=list)
    simulation: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)
    suites: list[str] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    points: int = DEFAULT_POINTS
    tolerances: dict[str, float] = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return self.chart.n

    @property
    def flavor(self) -> str:
        return self.chart.flavor

    def flow(self, name: str) -> Flow:
        for f in self.flows:
            if f.name == name:
                return f
        raise KeyError(f"manifest {self.name!r} has no flow {name!r}")


def _validate_schema(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(manifest_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ManifestSchemaError(_pointer(err.absolute_path), err.message)


def _parse(chart: Chart, text: str, ptr) -> Expr:
    try:
        return chart.parse(text)
    except ExprError as exc:
        raise ManifestExprError(_pointer(ptr), exc) from exc


def _exprs(chart: Chart, texts, ptr, n: int | None = None) -> list[Expr]:
    if n is not None and len(texts) != n:
        raise ManifestSchemaError(_pointer(ptr), f"expected {n} components, got {len(texts)}")
    return [_parse(chart, t, [*ptr, i]) for i, t in enumerate(texts)]


def build_manifest(data: dict) -> Manifest:
    """Validate ``data`` and construct the engine objects it describes."""
    _validate_schema(data)
    n = data["dimension"]
    coords = data["coordinates"]
    if len(coords) != n:
        raise ManifestSchemaError("/coordinates", f"expected {n} coordinate names, got {len(coords)}")
    if len(set(coords)) != n:
        raise ManifestSchemaError("/coordinates", "coordinate names must be distinct")
    if len(data["domain"]) != n:
        raise ManifestSchemaError("/domain", f"expected {n} intervals, got {len(data['domain'])}")
    for i, (lo, hi) in enumerate(data["domain"]):
        if not lo < hi:
            raise ManifestSchemaError(f"/domain/{i}", f"empty interval [{lo}, {hi}]")
    chart = Chart(tuple(coords), [tuple(b) for b in data["domain"]], data.get("flavor", "real"))

    mult = data["multiplication"]
    unity = _exprs(chart, data["unity"], ["unity"], n)
    if mult.get("semisimple"):
        entries = {(i, i, i): "1" for i in range(n)}
    else:
        entries = {}
        for idx, ent in enumerate(mult["entries"]):
            ptr = ["multiplication", "entries", idx]
            i, j, k = ent["i"] - 1, ent["j"] - 1, ent["k"] - 1
            if max(i, j, k) >= n:
                raise ManifestSchemaError(_pointer(ptr), f"index out of range for dimension {n}")
            if i > j:
                raise ManifestSchemaError(_pointer(ptr), "entries must satisfy i <= j")
            if (i, j, k) in entries:
                raise ManifestSchemaError(_pointer(ptr), "duplicate structure entry")
            entries[(i, j, k)] = _parse(chart, ent["expr"], [*ptr, "expr"])
    patch = FPatch.from_exprs(chart, entries, unity, data["name"])
    patch.semisimple = bool(mult.get("semisimple"))

    fields = {name: VectorField.from_exprs(chart, _exprs(chart, t, ["vector_fields", name], n), name)
              for name, t in data.get("vector_fields", {}).items()}
    fields.setdefault("e", patch.e)
    coids = {name: VectorField.from_exprs(chart, _exprs(chart, t, ["coidentities", name], n), name)
             for name, t in data.get("coidentities", {}).items()}

    metrics = {}
    for name, spec in data.get("metrics", {}).items():
        ptr = ["metrics", name]
        if "diag" in spec:
            metrics[name] = MetricField.diagonal(chart, _exprs(chart, spec["diag"], [*ptr, "diag"], n), name)
        elif "lower" in spec:
            table = {}
            for idx, ent in enumerate(spec["lower"]):
                eptr = [*ptr, "lower", idx]
                i, j = ent["i"] - 1, ent["j"] - 1
                if max(i, j) >= n or i < j:
                    raise ManifestSchemaError(_pointer(eptr), "lower-triangle entries need n >= i >= j")
                table[(i, j)] = _parse(chart, ent["expr"], [*eptr, "expr"])
            metrics[name] = MetricField.lower_triangle(chart, table, name)
        else:
            ref = spec["coidentity"]
            if ref not in coids:
                raise ManifestSchemaError(_pointer([*ptr, "coidentity"]), f"undefined coidentity {ref!r}")
            metrics[name] = metric_from_coidentity(patch, coids[ref], name)

    herm = {name: _exprs(chart, t, ["hermitian", name], n) for name, t in data.get("hermitian", {}).items()}
    reals = {name: _exprs(chart, t, ["real_structures", name], n)
             for name, t in data.get("real_structures", {}).items()}

    flows = []
    for idx, fl in enumerate(data.get("flows", [])):
        if fl["velocity"] not in fields:
            raise ManifestSchemaError(_pointer(["flows", idx, "velocity"]),
                                      f"undefined vector field {fl['velocity']!r}")
        metric = None
        if "metric" in fl:
            if fl["metric"] not in metrics:
                raise ManifestSchemaError(_pointer(["flows", idx, "metric"]), f"undefined metric {fl['metric']!r}")
            metric = metrics[fl["metric"]]
        flows.append(Flow(fl["name"], fields[fl["velocity"]], metric))

    sim = dict(data.get("simulation", {}))
    if "initial" in sim and len(sim["initial"]) != n:
        raise ManifestSchemaError("/simulation/initial", f"expected {n} components")
    for fname, texts in sim.get("exact", {}).items():
        if fname not in {f.name for f in flows}:
            raise ManifestSchemaError(_pointer(["simulation", "exact", fname]), f"undefined flow {fname!r}")
        if len(texts) != n:
            raise ManifestSchemaError(_pointer(["simulation", "exact", fname]), f"expected {n} components")

    defaults = dict(data.get("defaults", {}))
    pools = {"field": fields, "eventual": fields, "metric": metrics, "hermitian": herm,
             "real_structure": reals}
    for key, name in defaults.items():
        if name not in pools[key]:
            raise ManifestSchemaError(f"/defaults/{key}", f"undefined name {name!r}")

    return Manifest(data["name"], chart, patch, fields, metrics, coids, herm, reals, flows, sim, defaults,
                    list(data.get("suites", [])), data.get("seed", DEFAULT_SEED),
                    data.get("points", DEFAULT_POINTS), dict(data.get("tolerances", {})), data)


def load_manifest(path) -> Manifest:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError("/", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ManifestSchemaError("/", "manifest must be a JSON object")
    return build_manifest(data)
