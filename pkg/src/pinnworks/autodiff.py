"""Minimal reverse-mode differentiation over numpy arrays.

Each `Var` records its parents together with a vector-Jacobian product per
parent.  Graphs are small here: the network contributes one fused node (see
`pinnworks.net`), right-hand sides one node each, and the rest is a handful
of elementwise ops and reductions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Var", "grad", "sin", "cos", "tanh", "exp", "FUNCS", "value_of"]


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Var:
    __slots__ = ("value", "parents")
    __array_priority__ = 100.0

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        # sequence of (parent Var, vjp callable)
        self.parents = tuple(parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.value!r})"

    # arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Var):
            return Var(self.value + other, [(self, lambda g: g)])
        a, b = self.value, other.value
        return Var(a + b, [(self, lambda g: _unbroadcast(g, a.shape)),
                           (other, lambda g: _unbroadcast(g, b.shape))])

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Var):
            return Var(self.value - other, [(self, lambda g: g)])
        a, b = self.value, other.value
        return Var(a - b, [(self, lambda g: _unbroadcast(g, a.shape)),
                           (other, lambda g: -_unbroadcast(g, b.shape))])

    def __rsub__(self, other):
        return Var(other - self.value, [(self, lambda g: -g)])

    def __neg__(self):
        return Var(-self.value, [(self, lambda g: -g)])

    def __mul__(self, other):
        a = self.value
        if not isinstance(other, Var):
            c = np.asarray(other, dtype=float)
            return Var(a * c, [(self, lambda g: _unbroadcast(g * c, a.shape))])
        b = other.value
        return Var(a * b, [(self, lambda g: _unbroadcast(g * b, a.shape)),
                           (other, lambda g: _unbroadcast(g * a, b.shape))])

    __rmul__ = __mul__

    def __truediv__(self, other):
        a = self.value
        if not isinstance(other, Var):
            c = np.asarray(other, dtype=float)
            return Var(a / c, [(self, lambda g: _unbroadcast(g / c, a.shape))])
        b = other.value
        out = a / b
        return Var(out, [(self, lambda g: _unbroadcast(g / b, a.shape)),
                         (other, lambda g: _unbroadcast(-g * out / b, b.shape))])

    def __rtruediv__(self, other):
        b = self.value
        out = other / b
        return Var(out, [(self, lambda g: _unbroadcast(-g * out / b, b.shape))])

    def __pow__(self, c):
        if isinstance(c, Var):
            raise TypeError("variable exponents are not supported")
        a = self.value
        c = float(c)
        return Var(a ** c, [(self, lambda g: g * c * a ** (c - 1.0))])

    def __getitem__(self, idx):
        a = self.value

        def vjp(g):
            out = np.zeros_like(a)
            out[idx] += g
            return out
        return Var(a[idx], [(self, vjp)])

    def sum(self):
        a = self.value
        return Var(a.sum(), [(self, lambda g: np.broadcast_to(g, a.shape))])

    def dot(self, c):
        """Inner product with a constant array of the same shape."""
        a = self.value
        c = np.asarray(c, dtype=float)
        return Var(np.dot(a, c), [(self, lambda g: g * c)])


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _unary(f, df):
    def op(x):
        if not isinstance(x, Var):
            return f(x)
        a = x.value
        return Var(f(a), [(x, lambda g: g * df(a))])
    return op


sin = _unary(np.sin, np.cos)
cos = _unary(np.cos, lambda a: -np.sin(a))
tanh = _unary(np.tanh, lambda a: 1.0 - np.tanh(a) ** 2)
exp = _unary(np.exp, np.exp)

FUNCS = {"sin": sin, "cos": cos, "tanh": tanh, "exp": exp}


def grad(root: Var, *leaves: Var):
    """Gradients of scalar ``root`` with respect to each of ``leaves``.

    Leaves unreachable from ``root`` get a zero gradient.
    """
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
        if g is None or not node.parents:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return tuple(np.asarray(grads.get(id(leaf), np.zeros_like(leaf.value)), dtype=float)
                 for leaf in leaves)
