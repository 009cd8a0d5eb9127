"""The uniform result type returned by every verification routine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-9


@dataclass
class CheckReport:
    """Per-point residual maxima for one named identity.

    ``passed`` holds exactly when the global maximum does not exceed the
    tolerance and no engine error was recorded.
    """

    name: str
    tolerance: float
    per_point: np.ndarray
    meta: dict = field(default_factory=dict)
    error: str | None = None

    def __post_init__(self):
        self.per_point = np.asarray(self.per_point, dtype=float).reshape(-1)

    @property
    def samples(self) -> int:
        return int(self.per_point.size)

    @property
    def max_residual(self) -> float:
        if self.per_point.size == 0:
            return float("nan") if self.error else 0.0
        return float(np.max(self.per_point))

    @property
    def passed(self) -> bool:
        if self.error is not None:
            return False
        m = self.max_residual
        return bool(np.isfinite(m) and m <= self.tolerance)

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        m = self.max_residual
        return {
            "name": self.name,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "max_residual": None if not np.isfinite(m) else m,
            "passed": self.passed,
            "error": self.error,
            "meta": {k: _plain(v) for k, v in self.meta.items()},
        }

    def line(self) -> str:
        status = "PASS" if self.passed else ("ERROR" if self.error else "FAIL")
        m = self.max_residual
        return f"{self.name:<34} {status:<5} max={m:.3e} tol={self.tolerance:.1e} n={self.samples}"


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def residual_report(name: str, residual: np.ndarray, tol: float = DEFAULT_TOL, **meta) -> CheckReport:
    """Reduce a (P, ...) residual array to per-point maxima of its absolute value."""
    r = np.abs(np.asarray(residual))
    per_point = r.reshape(r.shape[0], -1).max(axis=1) if r.ndim > 1 else r
    return CheckReport(name, tol, per_point, meta)


def error_report(name: str, tol: float, exc: BaseException, **meta) -> CheckReport:
    return CheckReport(name, tol, np.zeros(0), meta, error=f"{type(exc).__name__}: {exc}")
