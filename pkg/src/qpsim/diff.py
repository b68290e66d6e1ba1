"""Reverse-mode automatic differentiation over a per-call expression tape.

A :class:`Tape` records every arithmetic operation on :class:`TrackedScalar`
values as a node holding its parent indices and the local partial
derivatives.  Nodes are appended in evaluation order, so parents always
precede children and a single reverse sweep yields the gradient.

Tracked scalars drop into numpy object arrays: ``np.sqrt``, ``np.exp`` and
friends dispatch to the methods of the same name, which is how the physics
kernels become differentiable without a second implementation.

>>> grad(lambda x: x * x, 3.0)
6.0
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class NonDifferentiablePoint(ArithmeticError):
    """Raised in debug mode when min/max is evaluated at an exact tie."""


class Tape:
    """Topologically ordered list of nodes: ``(parent ids, local partials)``."""

    __slots__ = ("parents", "partials", "debug")

    def __init__(self, debug: bool = False):
        self.parents: list[tuple] = []
        self.partials: list[tuple] = []
        self.debug = debug

    def __len__(self):
        return len(self.parents)

    def variable(self, value: float) -> "TrackedScalar":
        return self.push(float(value), (), ())

    def push(self, value: float, parents: tuple, partials: tuple) -> "TrackedScalar":
        self.parents.append(parents)
        self.partials.append(partials)
        return TrackedScalar(value, self, len(self.parents) - 1)

    def backward(self, output: "TrackedScalar") -> list[float]:
        adj = [0.0] * len(self.parents)
        adj[output.index] = 1.0
        parents, partials = self.parents, self.partials
        for i in range(output.index, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            for p, d in zip(parents[i], partials[i]):
                adj[p] += a * d
        return adj

    def clear(self):
        self.parents.clear()
        self.partials.clear()


def _val(o):
    return o.value if isinstance(o, TrackedScalar) else float(o)


class TrackedScalar:
    """A float that records how it was computed on its owning tape."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: float, tape: Tape, index: int):
        self.value = value
        self.tape = tape
        self.index = index

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # route through numpy's object loop, which calls our operators and
        # the methods named after each ufunc; this also keeps numpy scalars
        # and float arrays from swallowing a tracked operand
        if method != "__call__" or kwargs:
            return NotImplemented
        boxed = []
        for x in inputs:
            if isinstance(x, TrackedScalar):
                b = np.empty((), dtype=object)
                b[()] = x
                x = b
            boxed.append(x)
        out = ufunc(*boxed)
        return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out

    def __repr__(self):
        return f"TrackedScalar({self.value!r}, node={self.index})"

    def __float__(self):
        return self.value

    # arithmetic

    def __add__(self, o):
        if isinstance(o, TrackedScalar):
            return self.tape.push(self.value + o.value, (self.index, o.index), (1.0, 1.0))
        return self.tape.push(self.value + float(o), (self.index,), (1.0,))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, TrackedScalar):
            return self.tape.push(self.value - o.value, (self.index, o.index), (1.0, -1.0))
        return self.tape.push(self.value - float(o), (self.index,), (1.0,))

    def __rsub__(self, o):
        return self.tape.push(float(o) - self.value, (self.index,), (-1.0,))

    def __mul__(self, o):
        if isinstance(o, TrackedScalar):
            return self.tape.push(self.value * o.value, (self.index, o.index), (o.value, self.value))
        o = float(o)
        return self.tape.push(self.value * o, (self.index,), (o,))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, TrackedScalar):
            inv = 1.0 / o.value
            v = self.value * inv
            return self.tape.push(v, (self.index, o.index), (inv, -v * inv))
        inv = 1.0 / float(o)
        return self.tape.push(self.value * inv, (self.index,), (inv,))

    def __rtruediv__(self, o):
        v = float(o) / self.value
        return self.tape.push(v, (self.index,), (-v / self.value,))

    def __neg__(self):
        return self.tape.push(-self.value, (self.index,), (-1.0,))

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, TrackedScalar):
            return (self.log() * p).exp()
        p = float(p)
        if p == 2.0:
            return self.tape.push(self.value * self.value, (self.index,), (2.0 * self.value,))
        v = self.value**p
        return self.tape.push(v, (self.index,), (p * self.value ** (p - 1.0),))

    def __abs__(self):
        s = 1.0 if self.value >= 0.0 else -1.0
        return self.tape.push(abs(self.value), (self.index,), (s,))

    # comparisons act on values; they steer branches, never gradients

    def __lt__(self, o):
        return self.value < _val(o)

    def __le__(self, o):
        return self.value <= _val(o)

    def __gt__(self, o):
        return self.value > _val(o)

    def __ge__(self, o):
        return self.value >= _val(o)

    # elementary functions, named so numpy object-array ufuncs find them

    def sqrt(self):
        v = math.sqrt(self.value)
        d = 0.5 / v if v > 0.0 else math.inf
        return self.tape.push(v, (self.index,), (d,))

    def exp(self):
        v = math.exp(self.value)
        return self.tape.push(v, (self.index,), (v,))

    def log(self):
        return self.tape.push(math.log(self.value), (self.index,), (1.0 / self.value,))

    def tanh(self):
        v = math.tanh(self.value)
        return self.tape.push(v, (self.index,), (1.0 - v * v,))

    def sin(self):
        return self.tape.push(math.sin(self.value), (self.index,), (math.cos(self.value),))

    def cos(self):
        return self.tape.push(math.cos(self.value), (self.index,), (-math.sin(self.value),))

    def arctan2(self, x):
        y = self.value
        xv = _val(x)
        r2 = y * y + xv * xv
        v = math.atan2(y, xv)
        if isinstance(x, TrackedScalar):
            return self.tape.push(v, (self.index, x.index), (xv / r2, -y / r2))
        return self.tape.push(v, (self.index,), (xv / r2,))


def _tie_check(a, b):
    for t in (a, b):
        if isinstance(t, TrackedScalar) and t.tape.debug and _val(a) == _val(b):
            raise NonDifferentiablePoint(f"min/max tie at {_val(a)!r}")


def tmax(a, b):
    """max(a, b); the subgradient at a tie goes to ``a``."""
    _tie_check(a, b)
    return a if _val(a) >= _val(b) else b


def tmin(a, b):
    """min(a, b); the subgradient at a tie goes to ``a``."""
    _tie_check(a, b)
    return a if _val(a) <= _val(b) else b


def tdot(a, b):
    """Inner product of two equal-length sequences as a single tape node."""
    tape = None
    value = 0.0
    parents = []
    partials = []
    for x, y in zip(a, b):
        xv, yv = _val(x), _val(y)
        value += xv * yv
        if isinstance(x, TrackedScalar):
            tape = x.tape
            parents.append(x.index)
            partials.append(yv)
        if isinstance(y, TrackedScalar):
            tape = y.tape
            parents.append(y.index)
            partials.append(xv)
    if tape is None:
        return value
    return tape.push(value, tuple(parents), tuple(partials))


def matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w`` for 2-D arrays where either side may hold tracked scalars.

    Each output entry is one fused tape node, which keeps the tape an order
    of magnitude shorter than elementwise multiply-then-sum.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    if x.dtype != object and w.dtype != object:
        return x @ w
    n, k = x.shape
    k2, m = w.shape
    if k != k2:
        raise ValueError(f"matmul shape mismatch {x.shape} @ {w.shape}")
    rows = [list(x[i]) for i in range(n)]
    cols = [list(w[:, j]) for j in range(m)]
    out = np.empty((n, m), dtype=object)
    for i in range(n):
        r = rows[i]
        for j in range(m):
            out[i, j] = tdot(r, cols[j])
    return out


def value_of(a):
    """Strips tracking: float for scalars, float64 array for object arrays."""
    if isinstance(a, TrackedScalar):
        return a.value
    if isinstance(a, np.ndarray) and a.dtype == object:
        return np.vectorize(_val, otypes=[np.float64])(a) if a.size else a.astype(np.float64)
    return a


def value_and_grad(f: Callable, x, debug: bool = False):
    """Evaluates ``f(x)`` and its gradient with respect to ``x``.

    ``x`` is a float or an array-like of floats; ``f`` receives a
    :class:`TrackedScalar` or an object array of them with the same shape,
    and must return a scalar.  The gradient has the shape of ``x``.
    """
    tape = Tape(debug=debug)
    scalar = np.ndim(x) == 0
    if scalar:
        inputs = tape.variable(float(x))
        ids = [inputs.index]
    else:
        xa = np.asarray(x, dtype=np.float64)
        flat = [tape.variable(v) for v in xa.ravel()]
        ids = [t.index for t in flat]
        inputs = np.empty(xa.shape, dtype=object)
        inputs.ravel()[:] = flat
    out = f(inputs)
    if isinstance(out, np.ndarray):
        out = out.item() if out.size == 1 else out
    if not isinstance(out, TrackedScalar):
        value = float(out)
        g = 0.0 if scalar else np.zeros(np.shape(x))
        tape.clear()
        return value, g
    adj = tape.backward(out)
    value = out.value
    tape.clear()
    if scalar:
        return value, adj[ids[0]]
    return value, np.array([adj[i] for i in ids]).reshape(np.shape(x))


def grad(f: Callable, x, debug: bool = False):
    """Gradient of scalar ``f`` at ``x`` by one reverse sweep."""
    return value_and_grad(f, x, debug=debug)[1]
