"""Second-order jets evaluated over a batch of points.

A :class:`Jet` stores the value, gradient and Hessian of a tensor-valued
function at ``P`` points at once::

    val  : (P, *shape)
    grad : (P, *shape, m)        or None   (order < 1)
    hess : (P, *shape, m, m)     or None   (order < 2)

``m`` is the number of independent variables: ``n`` for a real chart and
``2n`` for a complex chart, where slots ``0..n-1`` hold the holomorphic
Wirtinger derivatives and ``n..2n-1`` the antiholomorphic ones.

Every operation propagates derivatives exactly (forward mode). Asking for a
derivative that a jet no longer carries raises :class:`OrderExhausted`.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

SINGULAR_RTOL = 1e-12


class OrderExhausted(RuntimeError):
    """Raised when a jet is asked for derivatives beyond its order."""


class SingularSystem(ArithmeticError):
    """A linear system is singular (relative to the row-norm scale) at some points."""

    def __init__(self, det, points):
        self.det = np.asarray(det)
        self.points = np.asarray(points)
        super().__init__(
            f"singular system at {self.points.size} point(s); "
            f"min |det| = {float(np.min(np.abs(self.det))) if self.det.size else 0.0:.3e}"
        )


class Jet:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad=None, hess=None):
        self.val = val
        self.grad = grad if grad is not None else None
        self.hess = hess if grad is not None else None

    # -- bookkeeping -------------------------------------------------------
    @property
    def order(self) -> int:
        if self.grad is None:
            return 0
        return 1 if self.hess is None else 2

    @property
    def shape(self) -> tuple:
        return self.val.shape[1:]

    @property
    def npoints(self) -> int:
        return self.val.shape[0]

    @property
    def nvar(self) -> int:
        if self.grad is None:
            raise OrderExhausted("order-0 jet carries no derivative slots")
        return self.grad.shape[-1]

    @classmethod
    def constant(cls, val, nvar: int, order: int = 2) -> "Jet":
        val = np.asarray(val)
        if order == 0:
            return cls(val)
        grad = np.zeros(val.shape + (nvar,), dtype=val.dtype)
        hess = np.zeros(val.shape + (nvar, nvar), dtype=val.dtype) if order >= 2 else None
        return cls(val, grad, hess)

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        if order == 0:
            return Jet(self.val)
        return Jet(self.val, self.grad)

    def require(self, order: int) -> "Jet":
        if self.order < order:
            raise OrderExhausted(f"need an order-{order} jet, have order {self.order}")
        return self

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        sel = (slice(None),) + idx
        g = self.grad[sel] if self.grad is not None else None
        h = self.hess[sel] if self.hess is not None else None
        return Jet(self.val[sel], g, h)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, points={self.npoints}, shape={self.shape})"

    # -- arithmetic --------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(-self.val, None if self.grad is None else -self.grad,
                   None if self.hess is None else -self.hess)

    def __add__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        order = min(self.order, other.order)
        val = self.val + other.val
        grad = self.grad + other.grad if order >= 1 else None
        hess = self.hess + other.hess if order >= 2 else None
        return Jet(val, grad, hess)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other if isinstance(other, Jet) else -np.asarray(other))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = np.asarray(other)
            return Jet(self.val * c,
                       None if self.grad is None else self.grad * c[..., None],
                       None if self.hess is None else self.hess * c[..., None, None])
        a, b = self, other
        order = min(a.order, b.order)
        val = a.val * b.val
        grad = hess = None
        if order >= 1:
            grad = a.grad * b.val[..., None] + a.val[..., None] * b.grad
        if order >= 2:
            cross = a.grad[..., :, None] * b.grad[..., None, :]
            hess = (a.hess * b.val[..., None, None] + a.val[..., None, None] * b.hess
                    + (cross + np.swapaxes(cross, -1, -2)))
        return Jet(val, grad, hess)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def reciprocal(self) -> "Jet":
        if np.any(self.val == 0):
            raise ZeroDivisionError("jet division by zero")
        inv = 1.0 / self.val
        return self.apply(inv, -inv * inv, 2.0 * inv * inv * inv)

    def apply(self, f, df, d2f) -> "Jet":
        """Chain rule for an elementwise function given its value and derivatives at ``val``."""
        grad = hess = None
        if self.order >= 1:
            grad = df[..., None] * self.grad
        if self.order >= 2:
            outer = self.grad[..., :, None] * self.grad[..., None, :]
            hess = d2f[..., None, None] * outer + df[..., None, None] * self.hess
        return Jet(f, grad, hess)

    def conj(self, ncoord: int) -> "Jet":
        """Complex conjugate of a Wirtinger jet over ``2 * ncoord`` variables.

        ``d/dz_i conj(f) = conj(d/dzbar_i f)``, so the holomorphic and
        antiholomorphic halves swap.
        """
        perm = np.r_[np.arange(ncoord, 2 * ncoord), np.arange(ncoord)]
        grad = hess = None
        if self.grad is not None:
            grad = np.conj(self.grad[..., perm])
        if self.hess is not None:
            hess = np.conj(self.hess[..., perm, :][..., perm])
        return Jet(np.conj(self.val), grad, hess)

    # -- differentiation ---------------------------------------------------
    def d(self, ncoord: int | None = None) -> "Jet":
        """Coordinate derivative as a jet one order lower, with a new trailing axis.

        Only the first ``ncoord`` derivative slots are used (the holomorphic
        ones on a complex chart).
        """
        self.require(1)
        k = self.grad.shape[-1] if ncoord is None else ncoord
        val = self.grad[..., :k]
        grad = self.hess[..., :k, :] if self.hess is not None else None
        return Jet(val, grad)

    def dbar(self, ncoord: int) -> "Jet":
        """Antiholomorphic derivative along the conjugate coordinates."""
        self.require(1)
        val = self.grad[..., ncoord:2 * ncoord]
        grad = self.hess[..., ncoord:2 * ncoord, :] if self.hess is not None else None
        return Jet(val, grad)


def stack(jets, axis: int = 0) -> Jet:
    """Stack jets of equal shape along a new tensor axis (after the point axis)."""
    jets = list(jets)
    if axis < 0:
        raise ValueError("stack axis counts tensor axes and must be non-negative")
    order = min(j.order for j in jets)
    ax = axis + 1
    val = np.stack([j.val for j in jets], axis=ax)
    grad = np.stack([j.grad for j in jets], axis=ax) if order >= 1 else None
    hess = np.stack([j.hess for j in jets], axis=ax) if order >= 2 else None
    return Jet(val, grad, hess)


def einsum(spec: str, *ops: Jet) -> Jet:
    """Multilinear contraction of jets with exact product-rule propagation.

    ``spec`` uses lowercase letters for tensor indices only; the point axis and
    derivative axes are added internally.
    """
    ins, out = spec.replace(" ", "").split("->")
    subs = ins.split(",")
    if len(subs) != len(ops):
        raise ValueError("operand count does not match spec")
    order = min(op.order for op in ops)

    def es(terms, outsub, arrays):
        return np.einsum(",".join(terms) + "->" + outsub, *arrays)

    base = ["P" + s for s in subs]
    vals = [op.val for op in ops]
    val = es(base, "P" + out, vals)
    grad = hess = None
    if order >= 1:
        grad = 0
        for k, op in enumerate(ops):
            terms = list(base)
            terms[k] = base[k] + "Y"
            arrays = list(vals)
            arrays[k] = op.grad
            grad = grad + es(terms, "P" + out + "Y", arrays)
    if order >= 2:
        hess = 0
        for k, op in enumerate(ops):
            terms = list(base)
            terms[k] = base[k] + "YX"
            arrays = list(vals)
            arrays[k] = op.hess
            hess = hess + es(terms, "P" + out + "YX", arrays)
        for k, l in combinations(range(len(ops)), 2):
            terms = list(base)
            terms[k] = base[k] + "Y"
            terms[l] = base[l] + "X"
            arrays = list(vals)
            arrays[k] = ops[k].grad
            arrays[l] = ops[l].grad
            t = es(terms, "P" + out + "YX", arrays)
            hess = hess + (t + np.swapaxes(t, -1, -2))
    return Jet(val, grad, hess)


def _singular_mask(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    det = np.linalg.det(A)
    scale = np.prod(np.linalg.norm(A, axis=-1), axis=-1)
    bad = ~(np.abs(det) >= SINGULAR_RTOL * scale) | (scale == 0)
    return bad, det


def singular_points(A: np.ndarray) -> np.ndarray:
    """Boolean mask of points where the batch of matrices ``A`` counts as singular."""
    return _singular_mask(A)[0]


def _check_nonsingular(A: np.ndarray) -> None:
    bad, det = _singular_mask(A)
    if np.any(bad):
        raise SingularSystem(np.abs(det[bad]), np.flatnonzero(bad))


def _symmetrize(h):
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def solve_linear_jet(A: Jet, b: Jet) -> Jet:
    """Solve ``A x = b`` pointwise; derivatives follow by implicit differentiation.

    ``dx = A^{-1}(db - dA x)`` and
    ``d2x = A^{-1}(d2b - d2A x - dA dx - dA dx)`` (both orderings).
    """
    _check_nonsingular(A.val)
    order = min(A.order, b.order)
    x = np.linalg.solve(A.val, b.val[..., None])[..., 0]
    if order == 0:
        return Jet(x)
    rhs = b.grad - np.einsum("pijm,pj->pim", A.grad, x)
    dx = np.linalg.solve(A.val, rhs)
    if order == 1:
        return Jet(x, dx)
    m = dx.shape[-1]
    rhs2 = (b.hess
            - np.einsum("pijml,pj->piml", A.hess, x)
            - np.einsum("pijm,pjl->piml", A.grad, dx)
            - np.einsum("pijl,pjm->piml", A.grad, dx))
    n = x.shape[-1]
    d2x = np.linalg.solve(A.val, rhs2.reshape(-1, n, m * m)).reshape(-1, n, m, m)
    return Jet(x, dx, _symmetrize(d2x))


def invert_matrix_jet(A: Jet) -> Jet:
    """Pointwise matrix inverse with ``d(A^-1) = -A^-1 dA A^-1`` and its second-order rule."""
    _check_nonsingular(A.val)
    inv = np.linalg.inv(A.val)
    if A.order == 0:
        return Jet(inv)
    # dA laid out as (P, m, n, n)
    dA = np.moveaxis(A.grad, -1, 1)
    t = inv[:, None] @ dA  # A^-1 dA_m
    dinv = -(t @ inv[:, None])
    grad = np.moveaxis(dinv, 1, -1)
    if A.order == 1:
        return Jet(inv, grad)
    d2A = np.moveaxis(A.hess, (-2, -1), (1, 2))  # (P, m, l, n, n)
    tt = t[:, :, None] @ t[:, None, :]  # A^-1 dA_m A^-1 dA_l
    sym = tt + np.swapaxes(tt, 1, 2)
    d2inv = (sym - inv[:, None, None] @ d2A) @ inv[:, None, None]
    hess = np.moveaxis(d2inv, (1, 2), (-2, -1))
    return Jet(inv, grad, _symmetrize(hess))
