"""Differentiable operators.

Every op takes Tensors (or array-likes for constant operands), computes the
forward value with numpy and registers a vector-Jacobian product on the
active tape. Image tensors are channel-first: ``[..., C, H, W]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record("mul", a.data * b.data, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def relu(x) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken to be 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# reductions and losses

def sum(x, axis=None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis), dtype=x.dtype)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return record("sum", out, (x,), vjp)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    return record("mean", np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                  lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error. Gradient is sign(pred - target) / N, with sign(0) = 0."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError("l1_loss", pred.shape, target.shape)
    diff = pred.data - target.data
    n = diff.size

    def vjp(g):
        s = np.sign(diff) * (g / n)
        return s.astype(pred.dtype), (-s).astype(target.dtype)

    return record("l1_loss", np.asarray(np.abs(diff).mean(), dtype=diff.dtype), (pred, target), vjp)


# --------------------------------------------------------------------------
# shape manipulation

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return record("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                  lambda g: (g.transpose(inv),))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    return record("broadcast_to", np.broadcast_to(x.data, shape), (x,),
                  lambda g: (_unbroadcast(g, x.shape),))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)

    basic = all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis
                for i in (index if isinstance(index, tuple) else (index,)))

    def vjp(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record("getitem", x.data[index], (x,), vjp)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return record("concat", np.concatenate([x.data for x in xs], axis=axis), xs,
                  lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    return record("stack", np.stack([x.data for x in xs], axis=axis), xs,
                  lambda g: tuple(np.moveaxis(g, axis, 0)))


def unbind(x, axis: int = 0) -> list[Tensor]:
    x = as_tensor(x)
    return [getitem(x, (slice(None),) * (axis % x.ndim) + (i,)) for i in range(x.shape[axis])]


def concat_channels(xs: Sequence) -> Tensor:
    """Concatenate ``[..., C_i, H, W]`` tensors along the channel axis, in order."""
    xs = [as_tensor(x) for x in xs]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.shape[-2:] != ref[-2:] or x.shape[:-3] != ref[:-3]:
            raise ShapeError("concat_channels spatial/batch dims", ref[:-3] + ("*",) + ref[-2:], x.shape)
    if len(xs) == 1:
        return xs[0]
    return concat(xs, axis=-3)


def pixel_shuffle(x, r: int) -> Tensor:
    """``[..., C*r*r, H, W] -> [..., C, r*H, r*W]``.

    out[c, r*y + dy, r*x + dx] = in[c*r*r + dy*r + dx, y, x]
    """
    x = as_tensor(x)
    *lead, crr, h, w = x.shape
    if crr % (r * r):
        raise ShapeError("pixel_shuffle channels", f"a multiple of {r * r}", crr)
    c = crr // (r * r)
    out = x.data.reshape(*lead, c, r, r, h, w)
    nl = len(lead)
    perm = list(range(nl)) + [nl, nl + 3, nl + 1, nl + 4, nl + 2]
    out = out.transpose(perm).reshape(*lead, c, h * r, w * r)
    return record("pixel_shuffle", np.ascontiguousarray(out), (x,),
                  lambda g: (pixel_unshuffle_array(g, r),))


def pixel_unshuffle_array(y: np.ndarray, r: int) -> np.ndarray:
    """Exact inverse of :func:`pixel_shuffle` on raw arrays."""
    *lead, c, hr, wr = y.shape
    if hr % r or wr % r:
        raise ShapeError("pixel_unshuffle spatial dims", f"multiples of {r}", (hr, wr))
    h, w = hr // r, wr // r
    nl = len(lead)
    t = y.reshape(*lead, c, h, r, w, r)
    perm = list(range(nl)) + [nl, nl + 2, nl + 4, nl + 1, nl + 3]
    return np.ascontiguousarray(t.transpose(perm).reshape(*lead, c * r * r, h, w))


# --------------------------------------------------------------------------
# convolution

@dataclass
class ConvParams:
    """Kernel ``[C_out, C_in, k, k]`` and bias ``[C_out]``; k must be odd.

    A leading group axis (``[G, C_out, C_in, k, k]`` / ``[G, C_out]``) stacks G
    independent convolutions, applied to inputs shaped ``[G, N, C_in, H, W]``.
    """

    kernel: Tensor
    bias: Tensor

    def __post_init__(self):
        k = self.kernel.shape[-1]
        if self.kernel.ndim not in (4, 5) or self.kernel.shape[-2] != k:
            raise ShapeError("conv kernel", "[..., C_out, C_in, k, k]", self.kernel.shape)
        if k % 2 == 0:
            raise ShapeError("conv kernel size", "odd k", k)
        if self.bias.shape != self.kernel.shape[:-3]:
            raise ShapeError("conv bias", self.kernel.shape[:-3], self.bias.shape)

    @property
    def k(self) -> int:
        return self.kernel.shape[-1]

    @property
    def c_in(self) -> int:
        return self.kernel.shape[-3]

    @property
    def c_out(self) -> int:
        return self.kernel.shape[-4]

    def tensors(self) -> list[Tensor]:
        return [self.kernel, self.bias]


def init_conv(c_in: int, c_out: int, k: int, rng: np.random.Generator, groups: int | None = None,
              zero: bool = False, dtype=np.float32) -> ConvParams:
    """Fan-in uniform init in +-sqrt(1 / (C_in * k * k)); ``zero`` gives all-zero weights."""
    lead = () if groups is None else (groups,)
    if zero:
        kernel = np.zeros(lead + (c_out, c_in, k, k), dtype=dtype)
        bias = np.zeros(lead + (c_out,), dtype=dtype)
    else:
        bound = np.sqrt(1.0 / (c_in * k * k))
        kernel = rng.uniform(-bound, bound, size=lead + (c_out, c_in, k, k)).astype(dtype)
        bias = rng.uniform(-bound, bound, size=lead + (c_out,)).astype(dtype)
    return ConvParams(Tensor(kernel, requires_grad=True), Tensor(bias, requires_grad=True))


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``[G, N, C, H, W] -> [G, N*H*W, k*k*C]``, zero 'same' padding, taps ordered (ky, kx, c)."""
    g, n, c, h, w = x.shape
    p = k // 2
    xl = np.zeros((g, n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    xl[:, :, p:p + h, p:p + w, :] = x.transpose(0, 1, 3, 4, 2)
    win = sliding_window_view(xl, (k, k), axis=(2, 3))  # [G, N, H, W, C, k, k]
    return win.transpose(0, 1, 2, 3, 5, 6, 4).reshape(g, n * h * w, k * k * c)


def _conv_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation. x ``[G, N, C, H, W]``, w ``[G, O, C, k, k]``."""
    g, n, c, h, wd = x.shape
    o, k = w.shape[1], w.shape[-1]
    if k == 1:
        out = np.matmul(w.reshape(g, 1, o, c), x.reshape(g, n, c, h * wd))
        return out.reshape(g, n, o, h, wd)
    wm = w.transpose(0, 3, 4, 2, 1).reshape(g, k * k * c, o)
    out = np.matmul(_im2col(x, k), wm)  # [G, NHW, O]
    return np.ascontiguousarray(out.reshape(g, n, h, wd, o).transpose(0, 1, 4, 2, 3))


def _conv_weight_grad(x: np.ndarray, gy: np.ndarray, k: int) -> np.ndarray:
    """dL/dw ``[G, O, C, k, k]`` from input ``[G, N, C, H, W]`` and output grad ``[G, N, O, H, W]``."""
    g, n, c, h, w = x.shape
    o = gy.shape[2]
    if k == 1:
        gw = np.matmul(gy.reshape(g, n, o, h * w), x.reshape(g, n, c, h * w).transpose(0, 1, 3, 2))
        return gw.sum(axis=1).reshape(g, o, c, 1, 1)
    gmat = gy.transpose(0, 1, 3, 4, 2).reshape(g, n * h * w, o)
    gw = np.matmul(_im2col(x, k).transpose(0, 2, 1), gmat)  # [G, kkC, O]
    return gw.reshape(g, k, k, c, o).transpose(0, 4, 3, 1, 2)


def conv2d(x, params: ConvParams) -> Tensor:
    """2D convolution, stride 1, zero padding k//2 so output H, W equal input H, W.

    Ungrouped: ``x`` is ``[..., C_in, H, W]``. Grouped (5-d kernel): ``x`` is
    ``[G, N, C_in, H, W]`` and group g is convolved with kernel g only.
    """
    x, w, b = as_tensor(x), params.kernel, params.bias
    k, c_in, c_out = params.k, params.c_in, params.c_out
    grouped = w.ndim == 5
    if x.ndim < 3 or (grouped and x.ndim != 5):
        raise ShapeError("conv2d input rank", "[G, N, C, H, W]" if grouped else "[..., C, H, W]", x.shape)
    if x.shape[-3] != c_in:
        raise ShapeError("conv2d input channels", c_in, x.shape[-3])
    if grouped and x.shape[0] != w.shape[0]:
        raise ShapeError("conv2d groups", w.shape[0], x.shape[0])
    h, wd = x.shape[-2:]
    if h < 1 or wd < 1:
        raise ShapeError("conv2d spatial dims", ">= 1", (h, wd))

    lead = x.shape[:-3]
    gcount = w.shape[0] if grouped else 1
    xd = x.data.reshape(gcount, -1, c_in, h, wd)
    wd5 = w.data.reshape(gcount, c_out, c_in, k, k)
    out = _conv_forward(xd, wd5)
    out += b.data.reshape(gcount, 1, c_out, 1, 1)
    out = out.reshape(*lead, c_out, h, wd)

    def vjp(gy):
        gy5 = gy.reshape(gcount, -1, c_out, h, wd)
        gx = gw = gb = None
        if x.requires_grad:
            flipped = np.ascontiguousarray(wd5[..., ::-1, ::-1].transpose(0, 2, 1, 3, 4))
            gx = _conv_forward(gy5, flipped).reshape(x.shape)
        if w.requires_grad:
            gw = np.ascontiguousarray(_conv_weight_grad(xd, gy5, k)).reshape(w.shape)
        if b.requires_grad:
            gb = gy5.sum(axis=(1, 3, 4)).reshape(b.shape)
        return gx, gw, gb

    return record("conv2d", out, (x, w, b), vjp)


def residual_block(x, conv1: ConvParams, conv2: ConvParams) -> Tensor:
    """x + conv2(relu(conv1(x))) with both convs C -> C."""
    x = as_tensor(x)
    c = x.shape[-3]
    for name, p in (("conv1", conv1), ("conv2", conv2)):
        if p.c_in != c or p.c_out != c:
            raise ShapeError(f"residual_block {name} width", (c, c), (p.c_out, p.c_in))
    return add(x, conv2d(relu(conv2d(x, conv1)), conv2))


Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__getitem__ = lambda self, index: getitem(self, index)
