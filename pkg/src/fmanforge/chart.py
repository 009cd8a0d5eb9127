"""Coordinate charts, seeded point sampling and jet-valued fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, parse
from .jet import Jet, stack

DEFAULT_POINTS = 64
DEFAULT_SEED = 42


class DomainMostlySingular(RuntimeError):
    """More than half of the sampled points were rejected by a guard."""


@dataclass(frozen=True)
class Chart:
    coords: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    flavor: str = "real"

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))
        if len(self.box) != len(self.coords):
            raise ValueError("one domain interval per coordinate is required")
        if self.flavor not in ("real", "complex"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError(f"empty domain interval [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def nvar(self) -> int:
        return 2 * self.n if self.flavor == "complex" else self.n

    @property
    def dtype(self):
        return complex if self.flavor == "complex" else float

    def parse(self, text: str) -> Expr:
        return parse(text, self.coords, self.flavor)

    def coordinate_jet(self, pts: np.ndarray, order: int = 2) -> Jet:
        pts = np.asarray(pts, dtype=self.dtype)
        P, n = pts.shape
        if n != self.n:
            raise ValueError(f"points have {n} coordinates, chart has {self.n}")
        if order == 0:
            return Jet(pts.copy())
        grad = np.zeros((P, n, self.nvar), dtype=self.dtype)
        grad[:, np.arange(n), np.arange(n)] = 1.0
        hess = np.zeros((P, n, self.nvar, self.nvar), dtype=self.dtype) if order >= 2 else None
        return Jet(pts.copy(), grad, hess)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        ok = np.all((pts.real >= lo) & (pts.real <= hi), axis=-1)
        if self.flavor == "complex":
            ok &= np.all((pts.imag >= lo) & (pts.imag <= hi), axis=-1)
        return ok

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        pts = rng.uniform(lo, hi, size=(count, self.n))
        if self.flavor == "complex":
            pts = pts + 1j * rng.uniform(lo, hi, size=(count, self.n))
        return pts


Guard = Callable[[np.ndarray], np.ndarray]


def sample_points(chart: Chart, count: int = DEFAULT_POINTS, seed: int = DEFAULT_SEED,
                  guards: Sequence[Guard] = ()) -> np.ndarray:
    """Seeded uniform draws from the chart box, rejecting points any guard refuses.

    Guards map a (P, n) batch to a boolean mask of acceptable points. If more
    than half of all draws are rejected the domain is declared mostly singular.
    """
    rng = np.random.default_rng(seed)
    kept = []
    drawn = rejected = 0
    while sum(len(k) for k in kept) < count:
        batch = chart.draw(count, rng)
        drawn += len(batch)
        ok = np.ones(len(batch), dtype=bool)
        for guard in guards:
            ok &= np.asarray(guard(batch), dtype=bool)
        rejected += int((~ok).sum())
        if rejected > 0.5 * drawn:
            raise DomainMostlySingular(
                f"{rejected} of {drawn} sampled points rejected on chart {chart.coords}")
        kept.append(batch[ok])
    return np.concatenate(kept)[:count]


class TensorField:
    """A jet-producing field on a chart.

    ``fn(pts, order)`` returns a :class:`Jet` of shape ``(P, *shape)``.
    Expression-backed fields keep their parsed expressions in ``exprs`` (a
    nested list matching ``shape``); computation-backed fields have
    ``exprs=None``.
    """

    def __init__(self, chart: Chart, fn, shape: tuple, exprs=None, label: str = ""):
        self.chart = chart
        self.fn = fn
        self.shape = tuple(shape)
        self.exprs = exprs
        self.label = label

    def __call__(self, pts: np.ndarray, order: int = 2) -> Jet:
        return self.fn(np.asarray(pts), order)

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self(pts, order=0).val

    def __repr__(self) -> str:
        kind = "expr" if self.exprs is not None else "computed"
        return f"{type(self).__name__}({self.label or '?'}, shape={self.shape}, {kind})"


def _expr_fn(chart: Chart, exprs, shape):
    flat = list(np.asarray(exprs, dtype=object).reshape(-1))

    def fn(pts, order=2):
        X = chart.coordinate_jet(pts, order)
        jets = [e.jet(X, order) for e in flat]
        out = stack(jets)
        if len(shape) != 1:
            out = Jet(out.val.reshape((-1,) + shape),
                      None if out.grad is None else out.grad.reshape((-1,) + shape + out.grad.shape[2:]),
                      None if out.hess is None else out.hess.reshape((-1,) + shape + out.hess.shape[2:]))
        return out

    return fn


class VectorField(TensorField):
    def __init__(self, chart: Chart, fn, exprs=None, label: str = ""):
        super().__init__(chart, fn, (chart.n,), exprs, label)

    @classmethod
    def from_exprs(cls, chart: Chart, texts, label: str = "") -> "VectorField":
        if len(texts) != chart.n:
            raise ValueError(f"vector field needs {chart.n} components, got {len(texts)}")
        exprs = [t if isinstance(t, Expr) else chart.parse(str(t)) for t in texts]
        return cls(chart, _expr_fn(chart, exprs, (chart.n,)), exprs, label)

    @classmethod
    def constant(cls, chart: Chart, values, label: str = "") -> "VectorField":
        return cls.from_exprs(chart, [Expr.const(float(v), chart.coords, chart.flavor)
                                      for v in np.real(values)], label)

    @classmethod
    def coordinate(cls, chart: Chart, i: int) -> "VectorField":
        return cls.constant(chart, np.eye(chart.n)[i], label=f"d/d{chart.coords[i]}")

    @classmethod
    def computed(cls, chart: Chart, fn, label: str = "") -> "VectorField":
        return cls(chart, fn, None, label)


def tensor_from_exprs(chart: Chart, exprs, shape, label: str = "") -> TensorField:
    exprs = np.asarray(exprs, dtype=object).reshape(shape)
    return TensorField(chart, _expr_fn(chart, exprs, tuple(shape)), tuple(shape),
                       exprs.tolist(), label)
