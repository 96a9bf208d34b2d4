"""Aligned LR/HR patch sampling and angularly consistent augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LightFieldError
from .lightfield import LightField
from .resize import bicubic_resize


@dataclass
class PatchPair:
    lr: LightField
    hr: LightField
    scale: int
    offset: tuple[int, int] = (0, 0)


def degrade(hr: LightField, scale: int) -> LightField:
    """Bicubic (antialiased) x1/scale downsampling of every view. ``hr`` must be modcropped."""
    h, w = hr.spatial
    if h % scale or w % scale:
        raise LightFieldError(f"HR views {h}x{w} not divisible by scale {scale}; modcrop first")
    lr = bicubic_resize(hr.views, size=(h // scale, w // scale))
    return LightField(lr, hr.color_space)


def sample_patch(lr: LightField, hr: LightField, p: int, scale: int, rng: np.random.Generator) -> PatchPair:
    """Crop the same p x p LR window from every view, and the matching (s*p)^2 HR window."""
    h, w = lr.spatial
    if hr.spatial != (h * scale, w * scale) or hr.a != lr.a:
        raise LightFieldError(f"HR {hr.a}x{hr.a}@{hr.spatial} does not match LR {lr.a}x{lr.a}@{lr.spatial} x{scale}")
    if p > h or p > w:
        raise LightFieldError(f"patch {p} larger than LR views {h}x{w}")
    y0 = int(rng.integers(0, h - p + 1))
    x0 = int(rng.integers(0, w - p + 1))
    sp = scale * p
    return PatchPair(
        LightField(lr.views[..., y0:y0 + p, x0:x0 + p], lr.color_space),
        LightField(hr.views[..., scale * y0:scale * y0 + sp, scale * x0:scale * x0 + sp], hr.color_space),
        scale,
        (y0, x0),
    )


def transform_views(views: np.ndarray, rot_k: int = 0, hflip: bool = False, vflip: bool = False) -> np.ndarray:
    """Apply a dihedral transform jointly to pixels and to the (u, v) view grid of ``[a, a, C, H, W]``.

    Rotation comes first, then flips. hflip mirrors x and the v axis, vflip
    mirrors y and the u axis, rot90 turns both (y, x) and (u, v) by k quarter
    turns, so a plane with disparity d maps to a plane with disparity d.
    """
    out = views
    if rot_k % 4:
        if rot_k % 2 and views.shape[-1] != views.shape[-2]:
            raise LightFieldError(f"odd rotation needs square views, got {views.shape[-2:]}")
        out = np.rot90(np.rot90(out, rot_k, axes=(3, 4)), rot_k, axes=(0, 1))
    if hflip:
        out = out[:, ::-1, :, :, ::-1]
    if vflip:
        out = out[::-1, :, :, ::-1, :]
    return np.ascontiguousarray(out)


def augment(pair: PatchPair, rot_k: int = 0, hflip: bool = False, vflip: bool = False) -> PatchPair:
    return PatchPair(
        LightField(transform_views(pair.lr.views, rot_k, hflip, vflip), pair.lr.color_space),
        LightField(transform_views(pair.hr.views, rot_k, hflip, vflip), pair.hr.color_space),
        pair.scale,
        pair.offset,
    )


def random_augment(pair: PatchPair, rng: np.random.Generator) -> PatchPair:
    return augment(pair, int(rng.integers(0, 4)), bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
