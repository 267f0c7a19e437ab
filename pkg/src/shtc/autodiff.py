"""Minimal reverse-mode differentiation tape over numpy arrays.

Only the operations the training objective needs. Each ``Var`` records its
parents and a closure that scatters the output gradient back to them; calling
``backward()`` on a scalar walks the tape once in reverse topological order.
Subgradient conventions: 0 at the soft-threshold kink and at |x| = 0, and the
floor side of ``maximum_floor`` gets no gradient.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .quantizer import round_half_away

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_LN2 = float(np.log(2.0))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A tape node: value, accumulated gradient, and backward closure."""

    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")
    __array_ufunc__ = None  # keep numpy from hijacking mixed expressions

    def __init__(self, data, parents=(), bwd=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self) -> "Var":
        out = Var(self.data.T, (self,))
        out.bwd = lambda g, a=self: _acc(a, g.T)
        return out

    def sum(self) -> "Var":
        out = Var(self.data.sum(), (self,))
        out.bwd = lambda g, a=self: _acc(a, np.broadcast_to(g, a.data.shape))
        return out

    def mean(self) -> "Var":
        scale = 1.0 / self.data.size
        out = Var(self.data.mean(), (self,))
        out.bwd = lambda g, a=self, s=scale: _acc(a, np.broadcast_to(g * s, a.data.shape))
        return out

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_var(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, as_var(other))

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        topo: list[Var] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.bwd is not None and node.grad is not None:
                node.bwd(node.grad)


def _acc(node: Var, g: np.ndarray):
    if not node.requires_grad:
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), node.data.shape)
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.data + b.data, (a, b))
    out.bwd = lambda g: (_acc(a, g), _acc(b, g))
    return out


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.data - b.data, (a, b))
    out.bwd = lambda g: (_acc(a, g), _acc(b, -g))
    return out


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.data * b.data, (a, b))
    out.bwd = lambda g: (_acc(a, g * b.data), _acc(b, g * a.data))
    return out


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.data / b.data, (a, b))

    def bwd(g):
        _acc(a, g / b.data)
        _acc(b, -g * a.data / (b.data * b.data))

    out.bwd = bwd
    return out


def matmul(a: Var, b: Var) -> Var:
    out = Var(a.data @ b.data, (a, b))

    def bwd(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    out.bwd = bwd
    return out


def vexp(a) -> Var:
    a = as_var(a)
    out = Var(np.exp(a.data), (a,))
    out.bwd = lambda g: _acc(a, g * out.data)
    return out


def vlog(a) -> Var:
    a = as_var(a)
    out = Var(np.log(a.data), (a,))
    out.bwd = lambda g: _acc(a, g / a.data)
    return out


def vabs(a) -> Var:
    a = as_var(a)
    out = Var(np.abs(a.data), (a,))
    out.bwd = lambda g: _acc(a, g * np.sign(a.data))
    return out


def softplus(a) -> Var:
    a = as_var(a)
    val = np.log1p(np.exp(-np.abs(a.data))) + np.maximum(a.data, 0.0)
    out = Var(val, (a,))
    out.bwd = lambda g: _acc(a, g / (1.0 + np.exp(-a.data)))
    return out


def maximum_floor(a, floor: float) -> Var:
    """max(a, floor) against a constant; the clamped side gets zero gradient."""
    a = as_var(a)
    out = Var(np.maximum(a.data, floor), (a,))
    out.bwd = lambda g: _acc(a, g * (a.data > floor))
    return out


def soft_threshold(x, tau) -> Var:
    """sign(x) * max(|x| - tau, 0); zero subgradient inside the dead zone."""
    x, tau = as_var(x), as_var(tau)
    mag = np.abs(x.data) - tau.data
    active = mag > 0
    out = Var(np.sign(x.data) * np.maximum(mag, 0.0), (x, tau))

    def bwd(g):
        _acc(x, g * active)
        _acc(tau, -g * np.sign(x.data) * active)

    out.bwd = bwd
    return out


def normal_cdf(z) -> Var:
    z = as_var(z)
    out = Var(ndtr(z.data), (z,))
    out.bwd = lambda g: _acc(z, g * np.exp(-0.5 * z.data * z.data) * _INV_SQRT_2PI)
    return out


def log2(a) -> Var:
    a = as_var(a)
    out = Var(np.log2(a.data), (a,))
    out.bwd = lambda g: _acc(a, g / (a.data * _LN2))
    return out


def ste_quantize(x: Var, steps: Var) -> Var:
    """Quantize-dequantize with a straight-through gradient to ``x`` only."""
    q = round_half_away(x.data / steps.data) * steps.data
    out = Var(q, (x,))
    out.bwd = lambda g: _acc(x, g)
    return out


def take_rows(x: Var, idx: np.ndarray) -> Var:
    """Row gather with scatter-add backward (for learnable tables)."""
    out = Var(x.data[idx], (x,))

    def bwd(g):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _acc_raw(x, full)

    out.bwd = bwd
    return out


def slice_cols(x: Var, cs: int, ce: int) -> Var:
    """Column slice x[:, cs:ce] with zero-padded backward."""
    out = Var(x.data[:, cs:ce], (x,))

    def bwd(g):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.data)
        full[:, cs:ce] = g
        _acc_raw(x, full)

    out.bwd = bwd
    return out


def _acc_raw(node: Var, g: np.ndarray):
    if node.grad is None:
        node.grad = g
    else:
        node.grad += g
