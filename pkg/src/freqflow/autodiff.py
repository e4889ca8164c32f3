"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward() walks
the tape in reverse topological order. Only what the two-branch model needs
is implemented: broadcasting arithmetic, matmul, shape ops, layer norm, GELU,
sigmoid, softmax, 3x3 convolution, embedding lookup, and the two fused
dual-domain losses. Heavy inner loops delegate to the kernels module.

Constant subgraphs short-circuit: an op whose inputs all have
requires_grad=False returns a plain constant Tensor, so inference builds no
tape.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul_scalar(as_tensor(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _make(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), backward=backward)
    return Tensor(data)


# ---------------------------------------------------------------- basic math


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul_scalar(a, s: float):
    a = as_tensor(a)
    out_data = a.data * a.data.dtype.type(s)

    def backward(g):
        a._accumulate(g * a.data.dtype.type(s))

    return _make(out_data, (a,), backward)


def linear(a, w, b):
    """Fused a @ w + b (bias broadcast over leading axes); one tape node."""
    a, w, b = as_tensor(a), as_tensor(w), as_tensor(b)
    out_data = np.matmul(a.data, w.data)
    out_data += b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.matmul(g, w.data.T))
        k = a.data.shape[-1]
        n = g.shape[-1]
        g2 = g.reshape(-1, n)
        if w.requires_grad:
            w._accumulate(a.data.reshape(-1, k).T @ g2)
        if b.requires_grad:
            b._accumulate(g2.sum(axis=0))

    return _make(out_data, (a, w, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                k = a.data.shape[-1]
                n = g.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.matmul(a.data.swapaxes(-1, -2), g)
                gb = _unbroadcast(gb, b.data.shape)
            b._accumulate(gb)

    return _make(out_data, (a, b), backward)


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    out_data = np.ascontiguousarray(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(np.ascontiguousarray(g.transpose(inv)))

    return _make(out_data, (a,), backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        start = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, start + size)
                t._accumulate(np.ascontiguousarray(g[tuple(idx)]))
            start += size

    return _make(out_data, tuple(tensors), backward)


def sum_all(a):
    a = as_tensor(a)
    out_data = np.asarray(a.data.sum())

    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g), dtype=a.data.dtype))

    return _make(out_data, (a,), backward)


def mean_all(a):
    a = as_tensor(a)
    n = a.data.size
    out_data = np.asarray(a.data.mean())

    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g) / n, dtype=a.data.dtype))

    return _make(out_data, (a,), backward)


def square(a):
    a = as_tensor(a)
    out_data = a.data * a.data

    def backward(g):
        a._accumulate(g * (2.0 * a.data))

    return _make(out_data, (a,), backward)


# ------------------------------------------------------------- nonlinearities


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # overflow-safe without boolean gathers: exp argument is always <= 0
    z = np.exp(-np.abs(x))
    out_data = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def gelu(a):
    a = as_tensor(a)
    out_data, ctx = kernels.gelu_fwd(a.data)

    def backward(g):
        a._accumulate(kernels.gelu_bwd(a.data, ctx, g))

    return _make(out_data, (a,), backward)


def softmax_last(a):
    """Softmax over the last axis."""
    a = as_tensor(a)
    rows = a.data.reshape(-1, a.data.shape[-1])
    y = kernels.softmax_fwd(np.ascontiguousarray(rows))
    out_data = y.reshape(a.data.shape)

    def backward(g):
        grows = np.ascontiguousarray(g.reshape(-1, g.shape[-1]))
        gx = kernels.softmax_bwd(y, grows)
        a._accumulate(gx.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def layernorm(a, gamma, beta, eps=1e-5):
    """Layer norm over the last axis; gamma/beta are 1D Tensors."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    c = a.data.shape[-1]
    rows = np.ascontiguousarray(a.data.reshape(-1, c))
    y, mean, rstd = kernels.layernorm_fwd(rows, gamma.data, beta.data, eps)
    out_data = y.reshape(a.data.shape)

    def backward(g):
        grows = np.ascontiguousarray(g.reshape(-1, c))
        gx, ggamma, gbeta = kernels.layernorm_bwd(rows, gamma.data, mean, rstd, grows)
        if a.requires_grad:
            a._accumulate(gx.reshape(a.data.shape))
        if gamma.requires_grad:
            gamma._accumulate(ggamma)
        if beta.requires_grad:
            beta._accumulate(gbeta)

    return _make(out_data, (a, gamma, beta), backward)


def conv3x3(x, w, b):
    """Same-padding 3x3 convolution; x is (B, H, W, Cin) channels-last."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    xc = np.ascontiguousarray(x.data)
    out_data, ctx = kernels.conv3x3_fwd(xc, w.data, b.data)

    def backward(g):
        gx, gw, gb = kernels.conv3x3_bwd(ctx, xc, w.data, np.ascontiguousarray(g))
        if x.requires_grad:
            x._accumulate(gx)
        if w.requires_grad:
            w._accumulate(gw)
        if b.requires_grad:
            b._accumulate(gb)

    return _make(out_data, (x, w, b), backward)


def embedding(table, idx):
    """Row gather: table (R, E) Tensor, idx integer array (B,)."""
    table = as_tensor(table)
    idx = np.asarray(idx)
    out_data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        table._accumulate(gt)

    return _make(out_data, (table,), backward)


# ------------------------------------------------------------- fused losses


def mse(pred, target):
    """Mean over all elements of the squared difference; target is constant."""
    pred = as_tensor(pred)
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    diff = pred.data - tgt
    out_data = np.asarray((diff * diff).mean())

    def backward(g):
        pred._accumulate((float(g) * 2.0 / diff.size) * diff)

    return _make(out_data, (pred,), backward)


def freq_mse(pred, target):
    """Mean squared spectral magnitude of (pred - target).

    The transform is the unnormalized forward DFT over the last two axes,
    run in 64-bit regardless of the working precision. Equals H*W times the
    spatial mse mathematically (Parseval), but is computed through the
    transform so the two losses stay independent routes.
    """
    pred = as_tensor(pred)
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    diff = (pred.data - tgt).astype(np.float64, copy=False)
    f = np.fft.fft2(diff, axes=(-2, -1))
    out_data = np.asarray((f.real * f.real + f.imag * f.imag).mean())
    hw = diff.shape[-2] * diff.shape[-1]

    def backward(g):
        grad = (float(g) * 2.0 * hw / diff.size) * np.fft.ifft2(f, axes=(-2, -1)).real
        pred._accumulate(grad.astype(pred.data.dtype, copy=False))

    return _make(out_data, (pred,), backward)
