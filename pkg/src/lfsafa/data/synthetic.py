"""Synthetic light fields with exact, known parallax."""
from __future__ import annotations

import math

import numpy as np

from ..errors import LightFieldError
from .lightfield import LightField
from .resize import shift_image


def synth_lf(base: np.ndarray, a: int, disparity_px: float, color_space: str = "RGB") -> LightField:
    """Build an a x a light field of a fronto-parallel plane.

    View (u, v) is ``base`` with its content translated by
    (d * (u - c), d * (v - c)), c = (a - 1) / 2, then every view is cropped to
    the same centered window so no view sees outside ``base``.
    """
    base = np.asarray(base, dtype=np.float32)
    if base.ndim != 3:
        raise LightFieldError(f"base must be [C, H, W], got {base.shape}")
    if a < 1:
        raise LightFieldError(f"angular resolution must be >= 1, got {a}")
    c = (a - 1) / 2
    reach = abs(disparity_px) * c
    integer = all(float(disparity_px * (k - c)).is_integer() for k in range(a))
    margin = int(math.ceil(reach - 1e-9)) + (0 if integer else 2)
    h, w = base.shape[1:]
    if h - 2 * margin < 1 or w - 2 * margin < 1:
        raise LightFieldError(
            f"disparity {disparity_px} px at a={a} shifts views out of a {h}x{w} base (needs margin {margin})")

    views = np.empty((a, a, base.shape[0], h - 2 * margin, w - 2 * margin), dtype=np.float32)
    for u in range(a):
        for v in range(a):
            shifted = shift_image(base, disparity_px * (u - c), disparity_px * (v - c))
            views[u, v] = shifted[:, margin:h - margin, margin:w - margin]
    return LightField(views, color_space)


def random_scene(rng: np.random.Generator, h: int, w: int, channels: int = 1) -> np.ndarray:
    """Piecewise-smooth test scene ``[C, H, W]`` in [0, 1]: gradients, shapes, stripes.

    Rendered at 2x and box-filtered down so edges are sharp but not aliased.
    """
    hh, ww = 2 * h, 2 * w
    yy, xx = np.mgrid[0:hh, 0:ww].astype(np.float64)
    out = np.empty((channels, hh, ww))
    for ch in range(channels):
        g = rng.uniform(-0.3, 0.3, size=2)
        img = 0.5 + g[0] * (yy / hh - 0.5) + g[1] * (xx / ww - 0.5)
        if ch:
            img = 0.6 * out[0] + 0.4 * img
        out[ch] = img

    for _ in range(int(rng.integers(8, 16))):
        kind = rng.integers(0, 4)
        cy, cx = rng.uniform(0, hh), rng.uniform(0, ww)
        size = rng.uniform(0.05, 0.3) * min(hh, ww)
        if kind == 0:
            ang = rng.uniform(0, np.pi)
            ry, rx = yy - cy, xx - cx
            py = ry * np.cos(ang) - rx * np.sin(ang)
            px = ry * np.sin(ang) + rx * np.cos(ang)
            mask = (np.abs(py) < size / 2) & (np.abs(px) < size * rng.uniform(0.3, 1.0))
        elif kind == 1:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < size ** 2 / 4
        elif kind == 2:
            ang = rng.uniform(0, np.pi)
            period = rng.uniform(3.0, 10.0)
            phase = (yy * np.cos(ang) + xx * np.sin(ang)) / period
            mask = ((yy - cy) ** 2 + (xx - cx) ** 2 < size ** 2) & (np.floor(phase) % 2 == 0)
        else:
            ang = rng.uniform(0, np.pi)
            dist = np.abs((yy - cy) * np.cos(ang) - (xx - cx) * np.sin(ang))
            mask = (dist < rng.uniform(1.0, 3.0)) & ((yy - cy) ** 2 + (xx - cx) ** 2 < size ** 2)
        for ch in range(channels):
            out[ch][mask] = rng.uniform(0, 1)

    out = out.reshape(channels, h, 2, w, 2).mean(axis=(2, 4))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synthetic_dataset(rng: np.random.Generator, count: int, a: int, size: int, disparity_px: float,
                      channels: int = 1) -> list[LightField]:
    """``count`` random-scene light fields whose views are ``size x size``."""
    c = (a - 1) / 2
    margin = int(math.ceil(abs(disparity_px) * c - 1e-9)) + 2
    color = "Y" if channels == 1 else "RGB"
    return [synth_lf(random_scene(rng, size + 2 * margin, size + 2 * margin, channels), a, disparity_px,
                     color_space=color).crop_to(size) for _ in range(count)]
