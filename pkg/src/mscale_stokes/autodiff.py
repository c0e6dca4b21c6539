"""Spatial jets (forward mode) and a parameter tape (reverse mode).

Spatial derivatives of network outputs are carried forward as :class:`Jet2`
values: a value plus the gradient and (optionally) the three distinct Hessian
entries with respect to the two input coordinates.  Each jet component is
either a plain ``numpy`` array or a :class:`Var`, a node on a :class:`Tape`.
Running the jet arithmetic on ``Var`` components records every primitive so
that :func:`backprop` can return the gradient of a scalar loss with respect to
all registered network parameters.

All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "Var",
    "Tape",
    "backprop",
    "Jet2",
    "jet_seed",
    "stack_jets",
    "sin",
    "cos",
    "sincos",
    "exp",
    "affine",
    "value_of",
    "record",
]


class Var:
    """Array-valued node recorded on a :class:`Tape`."""

    __array_ufunc__ = None  # make numpy defer to our reflected operators
    __slots__ = ("value", "tape", "parents", "index", "slot")

    def __init__(self, value, tape: "Tape", parents=(), slot: slice | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.parents = parents  # tuple of (Var, vjp) pairs
        self.slot = slot
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _record(-self.value, ((self, lambda g: -g),))

    def __getitem__(self, idx):
        shape = self.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[idx] = g
            return out

        return _record(self.value[idx], ((self, vjp),))

    def sum(self):
        shape = self.value.shape
        return _record(self.value.sum(), ((self, lambda g: np.broadcast_to(g, shape)),))

    def mean(self):
        shape = self.value.shape
        n = self.value.size
        return _record(self.value.mean(), ((self, lambda g: np.broadcast_to(g / n, shape)),))


class Tape:
    """Append-only record of primitive operations on parameter-dependent arrays.

    Parameters are registered as leaves; each leaf owns a contiguous range of
    slots in the flat gradient returned by :func:`backprop`.
    """

    def __init__(self):
        self.nodes: list[Var] = []
        self.num_params = 0
        self._bound: dict[int, tuple[Any, list[tuple[Var, Var]], slice]] = {}

    def param(self, array: np.ndarray) -> Var:
        size = np.size(array)
        slot = slice(self.num_params, self.num_params + size)
        self.num_params += size
        return Var(array, self, slot=slot)

    def watch(self, params) -> list[tuple[Var, Var]]:
        """Register the layers of a ``DenseParams`` once and return their leaves."""
        key = id(params)
        if key not in self._bound:
            start = self.num_params
            layers = [(self.param(W), self.param(b)) for W, b in params.layers]
            # keep a reference so id() stays unique while bound
            self._bound[key] = (params, layers, slice(start, self.num_params))
        return self._bound[key][1]

    def release(self):
        """Drop the recorded nodes so their arrays are freed without waiting for gc."""
        for node in self.nodes:
            node.parents = ()
        self.nodes.clear()

    def slots(self, params) -> slice | None:
        entry = self._bound.get(id(params))
        return None if entry is None else entry[2]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _record(value, parents) -> Var:
    live = tuple((p, f) for p, f in parents if isinstance(p, Var))
    return Var(value, live[0][0].tape, live)


def record(value, parents) -> Var:
    """Record a custom operation given ``(parent, vjp)`` pairs; returns its ``Var``."""
    return _record(value, parents)


def value_of(x):
    """Numeric value of a ``Var`` or array-like."""
    return x.value if isinstance(x, Var) else x


def _add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _record(out, ((a, lambda g: _unbroadcast(g, np.shape(av))),
                         (b, lambda g: _unbroadcast(g, np.shape(bv)))))


def _sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _record(out, ((a, lambda g: _unbroadcast(g, np.shape(av))),
                         (b, lambda g: _unbroadcast(-g, np.shape(bv)))))


def _mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _record(out, ((a, lambda g: _unbroadcast(g * bv, np.shape(av))),
                         (b, lambda g: _unbroadcast(g * av, np.shape(bv)))))


def _div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _record(out, ((a, lambda g: _unbroadcast(g / bv, np.shape(av))),
                         (b, lambda g: _unbroadcast(-g * out / bv, np.shape(bv)))))


def sin(x):
    if isinstance(x, Var):
        c = np.cos(x.value)
        return _record(np.sin(x.value), ((x, lambda g: g * c),))
    return np.sin(x)


def cos(x):
    if isinstance(x, Var):
        s = np.sin(x.value)
        return _record(np.cos(x.value), ((x, lambda g: -g * s),))
    return np.cos(x)


def sincos(x):
    """``(sin x, cos x)`` from a single evaluation of each transcendental."""
    if isinstance(x, Var):
        s, c = np.sin(x.value), np.cos(x.value)
        return (_record(s, ((x, lambda g: g * c),)),
                _record(c, ((x, lambda g: -g * s),)))
    return np.sin(x), np.cos(x)


def exp(x):
    if isinstance(x, Var):
        out = np.exp(x.value)
        return _record(out, ((x, lambda g: g * out),))
    return np.exp(x)


def affine(x, W, b=None):
    """``x @ W.T + b`` for a batch ``x`` of shape (N, k) and ``W`` of shape (m, k)."""
    xv, Wv = value_of(x), value_of(W)
    out = xv @ Wv.T
    if b is not None:
        out = out + value_of(b)
    if not isinstance(x, Var) and not isinstance(W, Var) and not isinstance(b, Var):
        return out
    rows = out.shape[0]

    def vjp_x(g):
        return _unbroadcast(g @ Wv, np.shape(xv))

    def vjp_W(g):
        return g.T @ np.broadcast_to(xv, (rows, xv.shape[-1]))

    parents = [(x, vjp_x), (W, vjp_W)]
    if b is not None:
        parents.append((b, lambda g: g.sum(axis=0)))
    return _record(out, parents)


def backprop(loss: Var) -> np.ndarray:
    """Gradient of a scalar tape node with respect to every parameter slot.

    Slots that do not influence ``loss`` receive exactly zero.
    """
    if not isinstance(loss, Var) or not loss.tape.nodes:
        raise UsageError("backprop needs a scalar recorded on a non-empty tape")
    if loss.value.size != 1:
        raise UsageError(f"backprop needs a scalar loss, got shape {loss.value.shape}")
    tape = loss.tape
    grad = np.zeros(tape.num_params)
    adj: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = adj.pop(node.index, None)
        if g is None:
            continue
        if node.slot is not None:
            grad[node.slot] += np.reshape(g, -1)
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            prev = adj.get(parent.index)
            adj[parent.index] = contrib if prev is None else prev + contrib
    return grad


# Hessian entries are stored as (d11, d12, d22).
_H = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}


@dataclass(frozen=True)
class Jet2:
    """Value with first (and optionally second) derivatives in (x1, x2)."""

    val: Any
    grad: tuple
    hess: tuple | None = None

    __array_ufunc__ = None

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def h(self, i: int, j: int):
        return self.hess[_H[i, j]]

    def truncate(self) -> "Jet2":
        return Jet2(self.val, self.grad) if self.hess is not None else self

    def d(self, i: int) -> "Jet2":
        """First-order jet of the partial derivative along coordinate ``i``."""
        if self.hess is None:
            raise ValueError("derivative jet needs a second-order jet")
        return Jet2(self.grad[i], (self.h(i, 0), self.h(i, 1)))

    def __getitem__(self, idx) -> "Jet2":
        hess = None if self.hess is None else tuple(h[idx] for h in self.hess)
        return Jet2(self.val[idx], tuple(g[idx] for g in self.grad), hess)

    def _pair_hess(self, other: "Jet2") -> bool:
        if (self.hess is None) != (other.hess is None):
            raise ValueError("cannot combine first- and second-order jets")
        return self.hess is not None

    def __add__(self, other):
        if isinstance(other, Jet2):
            hess = (tuple(a + b for a, b in zip(self.hess, other.hess))
                    if self._pair_hess(other) else None)
            return Jet2(self.val + other.val,
                        (self.grad[0] + other.grad[0], self.grad[1] + other.grad[1]), hess)
        return Jet2(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        hess = None if self.hess is None else tuple(-h for h in self.hess)
        return Jet2(-self.val, (-self.grad[0], -self.grad[1]), hess)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Jet2":
        hess = None if self.hess is None else tuple(c * h for h in self.hess)
        return Jet2(c * self.val, (c * self.grad[0], c * self.grad[1]), hess)

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            return self.scale(other)
        a, b = self, other
        grad = tuple(a.grad[i] * b.val + a.val * b.grad[i] for i in range(2))
        hess = None
        if a._pair_hess(b):
            hess = tuple(
                a.h(i, j) * b.val + a.grad[i] * b.grad[j] + a.grad[j] * b.grad[i] + a.val * b.h(i, j)
                for i, j in ((0, 0), (0, 1), (1, 1))
            )
        return Jet2(a.val * b.val, grad, hess)

    def __rmul__(self, other):
        return self.scale(other)

    def reciprocal(self) -> "Jet2":
        v = self.val
        if np.any(np.asarray(value_of(v)) == 0):
            raise DomainError("jet division by a zero value")
        r = 1.0 / v
        return self._chain(r, -(r * r), 2.0 * (r * r * r))

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        if np.any(np.asarray(value_of(other)) == 0):
            raise DomainError("jet division by zero")
        return self.scale(1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal().scale(other)

    def _chain(self, f0, f1, f2) -> "Jet2":
        g0, g1 = self.grad
        grad = (f1 * g0, f1 * g1)
        hess = None
        if self.hess is not None:
            h00, h01, h11 = self.hess
            hess = (f1 * h00 + f2 * (g0 * g0), f1 * h01 + f2 * (g0 * g1), f1 * h11 + f2 * (g1 * g1))
        return Jet2(f0, grad, hess)

    def sin(self) -> "Jet2":
        s, c = sincos(self.val)
        return self._chain(s, c, -s if self.hess is not None else None)

    def cos(self) -> "Jet2":
        s, c = sincos(self.val)
        return self._chain(c, -s, -c if self.hess is not None else None)

    def exp(self) -> "Jet2":
        e = exp(self.val)
        return self._chain(e, e, e)

    def affine(self, W, b=None) -> "Jet2":
        """Apply ``x -> x @ W.T + b`` along the last axis (linear in derivatives)."""
        hess = None if self.hess is None else tuple(affine(h, W) for h in self.hess)
        return Jet2(affine(self.val, W, b), (affine(self.grad[0], W), affine(self.grad[1], W)), hess)


def jet_seed(x, order: int = 1) -> list[Jet2]:
    """Coordinate jets for a point ``(2,)`` or a batch of points ``(N, 2)``."""
    if order not in (1, 2):
        raise ValueError(f"jet order must be 1 or 2, got {order}")
    x = np.asarray(x, dtype=np.float64)
    jets = []
    for i in range(2):
        val = x[..., i]
        ones, zeros = np.ones_like(val), np.zeros_like(val)
        grad = (ones, zeros) if i == 0 else (zeros, ones)
        hess = (zeros, zeros, zeros) if order == 2 else None
        jets.append(Jet2(val, grad, hess))
    return jets


def stack_jets(jets: Sequence[Jet2]) -> Jet2:
    """Stack scalar-per-point jets into one jet with a trailing feature axis."""
    def st(parts):
        return np.stack(parts, axis=-1)

    hess = None
    if jets[0].hess is not None:
        hess = tuple(st([j.hess[k] for j in jets]) for k in range(3))
    return Jet2(st([j.val for j in jets]),
                (st([j.grad[0] for j in jets]), st([j.grad[1] for j in jets])), hess)


def square(x):
    return x * x


def mean(x):
    return x.mean() if isinstance(x, Var) else float(np.mean(x))

