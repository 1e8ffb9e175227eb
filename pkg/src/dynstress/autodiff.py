"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough ops for the sequence models: elementwise arithmetic, matmul,
activations, reductions, reshapes and slicing.  Gradients are exact; the
test suite checks them against central finite differences.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # Sum gradient over axes that were broadcast in the forward op.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph construction helpers --

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _make(data, parents, backward):
        req = any(p.requires_grad for p in parents)
        return Tensor(data, req, parents if req else (), backward if req else None)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic --

    def __add__(self, other):
        o = self._lift(other)
        out = self._make(self.data + o.data, (self, o), None)
        def back(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if o.requires_grad:
                o._accum(_unbroadcast(g, o.data.shape))
        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = self._make(-self.data, (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(-g)
        out._backward = back
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        o = self._lift(other)
        out = self._make(self.data * o.data, (self, o), None)
        def back(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * o.data, self.data.shape))
            if o.requires_grad:
                o._accum(_unbroadcast(g * self.data, o.data.shape))
        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        out = self._make(self.data / o.data, (self, o), None)
        def back(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g / o.data, self.data.shape))
            if o.requires_grad:
                o._accum(_unbroadcast(-g * self.data / (o.data * o.data), o.data.shape))
        out._backward = back
        return out

    def __pow__(self, p: float):
        out = self._make(self.data ** p, (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g * p * self.data ** (p - 1))
        out._backward = back
        return out

    def __matmul__(self, other):
        o = self._lift(other)
        out = self._make(np.matmul(self.data, o.data), (self, o), None)
        def back(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(o.data, -1, -2))
                self._accum(_unbroadcast(ga, self.data.shape))
            if o.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                o._accum(_unbroadcast(gb, o.data.shape))
        out._backward = back
        return out

    # -- activations and elementwise functions --

    def exp(self):
        val = np.exp(self.data)
        out = self._make(val, (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g * val)
        out._backward = back
        return out

    def log(self):
        out = self._make(np.log(self.data), (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g / self.data)
        out._backward = back
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = self._make(val, (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g * (1.0 - val * val))
        out._backward = back
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = self._make(val, (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g * val * (1.0 - val))
        out._backward = back
        return out

    def clip(self, lo: float, hi: float):
        # Pass-through gradient inside [lo, hi], zero outside.
        mask = (self.data >= lo) & (self.data <= hi)
        out = self._make(np.clip(self.data, lo, hi), (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g * mask)
        out._backward = back
        return out

    # -- reductions --

    def sum(self, axis=None, keepdims=False):
        out = self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)
        def back(g):
            if self.requires_grad:
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())
        out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape ops --

    def reshape(self, *shape):
        old = self.data.shape
        out = self._make(self.data.reshape(*shape), (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g.reshape(old))
        out._backward = back
        return out

    def transpose(self, *axes):
        inv = np.argsort(axes)
        out = self._make(self.data.transpose(*axes), (self,), None)
        def back(g):
            if self.requires_grad:
                self._accum(g.transpose(*inv))
        out._backward = back
        return out

    def __getitem__(self, key):
        out = self._make(self.data[key], (self,), None)
        def back(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, key, g)
                self._accum(full)
        out._backward = back
        return out

    # -- backprop driver --

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()
        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)
        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)


# -- functional helpers --

def concat(tensors, axis=0):
    datas = [t.data for t in tensors]
    out = Tensor._make(np.concatenate(datas, axis=axis), tuple(tensors), None)
    sizes = [d.shape[axis] for d in datas]
    def back(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            if t.requires_grad:
                t._accum(g[tuple(sl)])
            offset += size
    out._backward = back
    return out


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else len(shape) + axis + 1, 1)
        expanded.append(t.reshape(*shape))
    return concat(expanded, axis=axis)


def softmax(x: Tensor, axis=-1) -> Tensor:
    # Max-shift is a constant; its gradient contribution cancels.
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)
