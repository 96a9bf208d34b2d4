"""Separable bicubic resampling with MATLAB-imresize-style antialiasing.

Cubic convolution kernel with a = -0.5. When shrinking, the kernel is
stretched by 1/scale so every input pixel contributes (antialiasing). Taps
falling outside the image are clamped to the nearest edge pixel.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError

CUBIC_A = -0.5


def cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_weights(in_len: int, out_len: int, scale: float, antialias: bool = True) -> np.ndarray:
    """Dense ``[out_len, in_len]`` interpolation matrix for one axis. Rows sum to 1."""
    if out_len < 1 or in_len < 1:
        raise ShapeError("resize length", ">= 1", (in_len, out_len))
    width = 4.0
    if scale < 1 and antialias:
        kernel = lambda t: scale * cubic(scale * t)  # noqa: E731
        width /= scale
    else:
        kernel = cubic
    x = np.arange(out_len, dtype=np.float64)
    # Output pixel centers mapped to input coordinates (0-based, pixel-center convention).
    u = (x + 0.5) / scale - 0.5
    left = np.floor(u - width / 2).astype(np.int64) + 1
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :] - 1
    w = kernel(u[:, None] - idx)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_len - 1)
    mat = np.zeros((out_len, in_len), dtype=np.float64)
    np.add.at(mat, (np.repeat(np.arange(out_len), taps), idx.ravel()), w.ravel())
    return mat


def output_size(in_len: int, scale: float) -> int:
    # Guard against 0.1 * 30 = 3.0000000000000004 style round-up.
    return int(math.ceil(round(in_len * scale, 9)))


def bicubic_resize(img: np.ndarray, scale: float | None = None, size: tuple[int, int] | None = None,
                   antialias: bool = True) -> np.ndarray:
    """Resize ``[..., H, W]`` by ``scale`` (or to ``size`` = (H', W')).

    With only ``scale`` given the output is ceil(H * scale) x ceil(W * scale).
    """
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if size is None:
        if scale is None or scale <= 0:
            raise ShapeError("bicubic_resize scale", "> 0", scale)
        size = (output_size(h, scale), output_size(w, scale))
        sy = sx = float(scale)
    else:
        sy, sx = size[0] / h, size[1] / w
    if size[0] < 1 or size[1] < 1:
        raise ShapeError("bicubic_resize target size", ">= 1x1", size)
    wy = resize_weights(h, size[0], sy, antialias)
    wx = resize_weights(w, size[1], sx, antialias)
    dtype = img.dtype if img.dtype.kind == "f" else np.float32
    out = np.einsum("ih,...hw,jw->...ij", wy, img.astype(np.float64), wx, optimize=True)
    return out.astype(dtype)


def shift_image(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Translate ``[..., H, W]`` content by (dy, dx): out[y, x] = img[y - dy, x - dx].

    Integer shifts are exact index moves; fractional ones use the cubic kernel.
    Samples that land outside the image clamp to the edge.
    """
    h, w = img.shape[-2:]
    return np.einsum("ih,...hw,jw->...ij", _shift_matrix(h, dy), img, _shift_matrix(w, dx)).astype(img.dtype)


def _shift_matrix(n: int, d: float) -> np.ndarray:
    pos = np.arange(n) - d
    mat = np.zeros((n, n))
    if float(d).is_integer():
        np.add.at(mat, (np.arange(n), np.clip(pos.astype(np.int64), 0, n - 1)), 1.0)
        return mat
    base = np.floor(pos).astype(np.int64)
    for t in range(-1, 3):
        idx = base + t
        np.add.at(mat, (np.arange(n), np.clip(idx, 0, n - 1)), cubic(pos - idx))
    return mat
