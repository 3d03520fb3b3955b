"""Minimal matrix-level reverse-mode differentiation.

Every operation appends a node to its :class:`Tape`; creation order is a
topological order, so :func:`backward` walks the node list in reverse and
visits each node once. Nodes hold numpy arrays; broadcasting is supported for
elementwise ops.
"""
from __future__ import annotations

import numpy as np


class Tape:
    def __init__(self):
        self.nodes = []

    def var(self, value, name=None):
        """A differentiable leaf."""
        return Var(self, np.asarray(value, float), (), None, name=name, leaf=True)

    def const(self, value):
        return Var(self, np.asarray(value, float), (), None, requires_grad=False)

    def custom(self, value, parents, vjp, name=None):
        """Register an op whose backward is ``vjp(upstream) -> grads per parent``."""
        return Var(self, np.asarray(value, float), tuple(parents), vjp, name=name)


class Var:
    __array_priority__ = 100.0

    def __init__(self, tape, value, parents, vjp, name=None, leaf=False, requires_grad=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.name = name
        self.leaf = leaf
        if requires_grad is None:
            requires_grad = leaf or any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = None
        tape.nodes.append(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(_lift(self.tape, o)))

    def __rsub__(self, o):
        return add(_lift(self.tape, o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(_lift(self.tape, o), self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _lift(tape, x):
    return x if isinstance(x, Var) else tape.const(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("no Var among operands")


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    return Var(t, a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return Var(a.tape, -a.value, (a,), lambda g: (-g,))


def mul(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    return Var(t, a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)

    def vjp(g):
        av, bv = a.value, b.value
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        return g @ bv.T, av.T @ g

    return Var(t, a.value @ b.value, (a, b), vjp)


def relu(a):
    """ReLU; the subgradient at 0 is 0. Plain arrays pass through numpy."""
    if not isinstance(a, Var):
        return np.maximum(a, 0.0)
    mask = a.value > 0
    return Var(a.tape, np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def square(a):
    return Var(a.tape, a.value * a.value, (a,), lambda g: (2.0 * a.value * g,))


def vsum(a, axis=None):
    shape = a.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Var(a.tape, np.sum(a.value, axis=axis), (a,), vjp)


def sqnorm(a):
    """Sum of squares of all entries."""
    return Var(a.tape, np.sum(a.value * a.value), (a,), lambda g: (2.0 * g * a.value,))


def transpose(a, axes=None):
    inv = None if axes is None else np.argsort(axes)
    return Var(a.tape, np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape):
    old = a.shape
    return Var(a.tape, a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a, idx):
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Var(a.tape, a.value[idx], (a,), vjp)


def cumsum(a, axis):
    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis), axis),)

    return Var(a.tape, np.cumsum(a.value, axis=axis), (a,), vjp)


def concat(xs, axis=0):
    t = _tape_of(*xs)
    xs = [_lift(t, x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return Var(t, np.concatenate([x.value for x in xs], axis=axis), tuple(xs),
               lambda g: tuple(np.split(g, sizes, axis=axis)))


def backward(out, seed=1.0):
    """Accumulate d(out)/d(node) into ``.grad`` of every node that needs it.

    ``out`` must be a scalar. Returns ``{leaf: grad}`` for the leaves on the tape.
    """
    if out.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {out.shape}")
    tape = out.tape
    for node in tape.nodes:
        node.grad = None
    out.grad = np.full(out.shape, float(seed))
    for node in reversed(tape.nodes):
        if node.grad is None or node.vjp is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            if not parent.requires_grad or g is None:
                continue
            g = np.asarray(g, float).reshape(parent.shape)
            parent.grad = g if parent.grad is None else parent.grad + g
    out_grads = {}
    for node in tape.nodes:
        if node.leaf:
            out_grads[node] = np.zeros(node.shape) if node.grad is None else node.grad
    return out_grads
