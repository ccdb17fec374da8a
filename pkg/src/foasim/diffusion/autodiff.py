"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operator set the denoiser needs: convolution, affine maps,
element-wise sigmoid/SiLU, reductions (normalization is composed from
these), pooling/upsampling, concatenation, padding.  Values are float64
throughout; gradients are validated against central finite differences in
the test suite.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation tape."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def add_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value)


def backward(loss: Tensor):
    """Accumulate gradients of ``loss`` into every reachable parameter."""
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.add_grad(np.ones_like(loss.value))
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.add_grad(_unbroadcast(g, b.shape))

    out.backward_fn = backward_fn
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value * b.value, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b.add_grad(_unbroadcast(g * a.value, b.shape))

    out.backward_fn = backward_fn
    return out


def scale(a: Tensor, k: float) -> Tensor:
    out = Tensor(a.value * k, parents=(a,))
    out.backward_fn = lambda g: a.add_grad(g * k) if a.requires_grad else None
    return out


def add_const(a: Tensor, k) -> Tensor:
    out = Tensor(a.value + k, parents=(a,))
    out.backward_fn = lambda g: a.add_grad(g) if a.requires_grad else None
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    out = Tensor(a.value**exponent, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(g * exponent * a.value ** (exponent - 1.0))

    out.backward_fn = backward_fn
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.value))
    out = Tensor(s, parents=(a,))
    out.backward_fn = lambda g: a.add_grad(g * s * (1.0 - s)) if a.requires_grad else None
    return out


def silu(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.value))
    out = Tensor(a.value * s, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(g * (s + a.value * s * (1.0 - s)))

    out.backward_fn = backward_fn
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(g @ b.value.T)
        if b.requires_grad:
            b.add_grad(a.value.T @ g)

    out.backward_fn = backward_fn
    return out


def mean_over(a: Tensor, axes, keepdims: bool = True) -> Tensor:
    axes = tuple(axes)
    out = Tensor(a.value.mean(axis=axes, keepdims=keepdims), parents=(a,))
    count = 1
    for ax in axes:
        count *= a.shape[ax]

    def backward_fn(g):
        if a.requires_grad:
            if not keepdims:
                g = np.expand_dims(g, axes)
            a.add_grad(np.broadcast_to(g, a.shape) / count)

    out.backward_fn = backward_fn
    return out


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(np.array(a.value.mean()), parents=(a,))
    n = a.value.size

    def backward_fn(g):
        if a.requires_grad:
            a.add_grad(np.full(a.shape, float(g) / n))

    out.backward_fn = backward_fn
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.value for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]

    def backward_fn(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                t.add_grad(g[tuple(index)])
            offset += size

    out.backward_fn = backward_fn
    return out


def pad_rows(a: Tensor, target: int, axis: int = 1) -> Tensor:
    """Zero-pad one axis up to ``target`` length."""
    extra = target - a.shape[axis]
    if extra == 0:
        return a
    width = [(0, 0)] * a.value.ndim
    width[axis] = (0, extra)
    out = Tensor(np.pad(a.value, width), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            index = [slice(None)] * g.ndim
            index[axis] = slice(0, a.shape[axis])
            a.add_grad(g[tuple(index)])

    out.backward_fn = backward_fn
    return out


def crop_rows(a: Tensor, length: int, axis: int = 1) -> Tensor:
    if a.shape[axis] == length:
        return a
    index = [slice(None)] * a.value.ndim
    index[axis] = slice(0, length)
    out = Tensor(a.value[tuple(index)], parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            width = [(0, 0)] * a.value.ndim
            width[axis] = (0, a.shape[axis] - length)
            a.add_grad(np.pad(g, width))

    out.backward_fn = backward_fn
    return out


def transpose2d(a: Tensor) -> Tensor:
    out = Tensor(a.value.T, parents=(a,))
    out.backward_fn = lambda g: a.add_grad(g.T) if a.requires_grad else None
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.value.reshape(shape), parents=(a,))
    out.backward_fn = lambda g: a.add_grad(g.reshape(a.shape)) if a.requires_grad else None
    return out


def avg_pool2(a: Tensor) -> Tensor:
    """2x2 average pooling over the last two axes of a (C, H, W) tensor."""
    c, h, w = a.shape
    v = a.value[:, : h - h % 2, : w - w % 2]
    pooled = 0.25 * (v[:, 0::2, 0::2] + v[:, 1::2, 0::2] + v[:, 0::2, 1::2] + v[:, 1::2, 1::2])
    out = Tensor(pooled, parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            ga = np.zeros(a.shape)
            spread = 0.25 * g
            ga[:, 0 : h - h % 2 : 2, 0 : w - w % 2 : 2] += spread
            ga[:, 1 : h - h % 2 : 2, 0 : w - w % 2 : 2] += spread
            ga[:, 0 : h - h % 2 : 2, 1 : w - w % 2 : 2] += spread
            ga[:, 1 : h - h % 2 : 2, 1 : w - w % 2 : 2] += spread
            a.add_grad(ga)

    out.backward_fn = backward_fn
    return out


def upsample_nearest2(a: Tensor) -> Tensor:
    out = Tensor(a.value.repeat(2, axis=1).repeat(2, axis=2), parents=(a,))

    def backward_fn(g):
        if a.requires_grad:
            c, h, w = a.shape
            g = g[:, : 2 * h, : 2 * w]
            a.add_grad(
                g.reshape(c, h, 2, w, 2).sum(axis=(2, 4))
            )

    out.backward_fn = backward_fn
    return out


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patch matrix for 3x3 same-padding convolution."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 9, h, w))
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, k] = xp[:, di : di + h, dj : dj + w]
            k += 1
    return cols.reshape(c * 9, h * w)


def _col2im3(cols: np.ndarray, shape) -> np.ndarray:
    c, h, w = shape
    cols = cols.reshape(c, 9, h, w)
    xp = np.zeros((c, h + 2, w + 2))
    k = 0
    for di in range(3):
        for dj in range(3):
            xp[:, di : di + h, dj : dj + w] += cols[:, k]
            k += 1
    return xp[:, 1 : 1 + h, 1 : 1 + w]


def conv2d3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 same convolution: x (C_in, H, W), weight (C_out, C_in*9), bias (C_out,)."""
    c_in, h, w = x.shape
    cols = _im2col3(x.value)
    y = (weight.value @ cols).reshape(-1, h, w) + bias.value[:, None, None]
    out = Tensor(y, parents=(x, weight, bias))

    def backward_fn(g):
        g2 = g.reshape(g.shape[0], -1)
        if bias.requires_grad:
            bias.add_grad(g2.sum(axis=1))
        if weight.requires_grad:
            weight.add_grad(g2 @ cols.T)
        if x.requires_grad:
            x.add_grad(_col2im3(weight.value.T @ g2, x.shape))

    out.backward_fn = backward_fn
    return out


def conv2d1(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """1x1 convolution: weight (C_out, C_in)."""
    c_in, h, w = x.shape
    y = (weight.value @ x.value.reshape(c_in, -1)).reshape(-1, h, w) + bias.value[:, None, None]
    out = Tensor(y, parents=(x, weight, bias))

    def backward_fn(g):
        g2 = g.reshape(g.shape[0], -1)
        if bias.requires_grad:
            bias.add_grad(g2.sum(axis=1))
        if weight.requires_grad:
            weight.add_grad(g2 @ x.value.reshape(c_in, -1).T)
        if x.requires_grad:
            x.add_grad((weight.value.T @ g2).reshape(x.shape))

    out.backward_fn = backward_fn
    return out


def rms_norm(x: Tensor, gamma: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel RMS normalization over the spatial axes, composed from
    primitive ops so the tape differentiates it exactly."""
    ms = mean_over(power(x, 2.0), axes=(1, 2), keepdims=True)
    inv = power(add_const(ms, eps), -0.5)
    return mul(mul(x, inv), gamma)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x (..., D_in) @ weight (D_in, D_out) + bias."""
    return add(matmul(x, weight), bias)


def mse(a: Tensor, b: Tensor) -> Tensor:
    return mean_all(power(sub(a, b), 2.0))
