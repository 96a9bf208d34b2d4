"""Light-field container and PNG ingestion (view directories and macro-pixel images)."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import cv2
import numpy as np

from ..errors import LightFieldError
from .color import rgb_to_ycbcr, ycbcr_to_rgb

COLOR_SPACES = ("RGB", "YCbCr", "Y")
_VIEW_RE = re.compile(r"^view_(\d+)_(\d+)\.png$")


class SaiIndex(NamedTuple):
    """Angular coordinate of one sub-aperture view; flat index is u * a + v."""

    u: int
    v: int

    def flat(self, a: int) -> int:
        if not (0 <= self.u < a and 0 <= self.v < a):
            raise LightFieldError(f"view index {tuple(self)} outside a {a}x{a} grid")
        return self.u * a + self.v

    @classmethod
    def from_flat(cls, i: int, a: int) -> "SaiIndex":
        return cls(*divmod(i, a))


@dataclass
class LightField:
    """``views`` is ``[a, a, C, H, W]`` float32 with values in [0, 1]."""

    views: np.ndarray
    color_space: str = "RGB"

    def __post_init__(self):
        v = np.asarray(self.views)
        if v.ndim != 5 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise LightFieldError(f"views must be [a, a, C, H, W] with a >= 1, got {v.shape}")
        if self.color_space not in COLOR_SPACES:
            raise LightFieldError(f"unknown color space {self.color_space!r}")
        if self.color_space == "Y" and v.shape[2] != 1:
            raise LightFieldError(f"Y light field must have one channel, got {v.shape[2]}")
        self.views = v.astype(np.float32, copy=False)

    @property
    def a(self) -> int:
        return self.views.shape[0]

    @property
    def n(self) -> int:
        return self.a * self.a

    @property
    def channels(self) -> int:
        return self.views.shape[2]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.views.shape[3], self.views.shape[4]

    def flat_views(self) -> np.ndarray:
        """``[n, C, H, W]`` in flat order i = u * a + v."""
        return self.views.reshape(self.n, *self.views.shape[2:])

    def view(self, u: int, v: int) -> np.ndarray:
        return self.views[u, v]

    def map_views(self, fn) -> "LightField":
        out = np.stack([np.stack([fn(self.views[u, v]) for v in range(self.a)]) for u in range(self.a)])
        return LightField(out, self.color_space)

    def to_ycbcr(self) -> "LightField":
        if self.color_space == "YCbCr":
            return self
        if self.color_space != "RGB":
            raise LightFieldError(f"cannot convert {self.color_space} to YCbCr")
        return LightField(rgb_to_ycbcr(self.views), "YCbCr")

    def to_rgb(self) -> "LightField":
        if self.color_space == "RGB":
            return self
        if self.color_space == "YCbCr":
            return LightField(ycbcr_to_rgb(self.views), "RGB")
        return LightField(np.repeat(self.views, 3, axis=2), "RGB")

    def to_y(self) -> "LightField":
        if self.color_space == "Y":
            return self
        if self.color_space == "RGB" and self.channels == 1:
            return LightField(self.views, "Y")
        return LightField(self.to_ycbcr().views[:, :, :1], "Y")

    def center_crop(self, a: int) -> "LightField":
        """Central ``a x a`` block of views."""
        if a > self.a or (self.a - a) % 2:
            raise LightFieldError(f"cannot take a centered {a}x{a} block from {self.a}x{self.a}")
        o = (self.a - a) // 2
        return LightField(self.views[o:o + a, o:o + a], self.color_space)

    def crop_to(self, h: int, w: int | None = None) -> "LightField":
        """Centered spatial crop of every view to h x w."""
        w = h if w is None else w
        hh, ww = self.spatial
        if h > hh or w > ww:
            raise LightFieldError(f"cannot crop {hh}x{ww} views to {h}x{w}")
        y0, x0 = (hh - h) // 2, (ww - w) // 2
        return LightField(self.views[..., y0:y0 + h, x0:x0 + w], self.color_space)

    def modcrop(self, s: int) -> "LightField":
        h, w = self.spatial
        return LightField(self.views[..., : h - h % s, : w - w % s], self.color_space)


# --------------------------------------------------------------------------
# image files

def read_png(path) -> np.ndarray:
    """PNG (8- or 16-bit, gray or color) -> float32 ``[C, H, W]`` in [0, 1], RGB order."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise LightFieldError(f"cannot read image {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float32) / scale
    if img.ndim == 2:
        return img[None]
    if img.shape[2] == 4:
        img = img[:, :, :3]
    return np.ascontiguousarray(img[:, :, ::-1].transpose(2, 0, 1))


def write_png(path, img: np.ndarray, bits: int = 8) -> None:
    """Write ``[C, H, W]`` floats in [0, 1] (C = 1 or 3) as an 8- or 16-bit PNG."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise LightFieldError(f"write_png expects [1|3, H, W], got {img.shape}")
    peak, dtype = (65535.0, np.uint16) if bits == 16 else (255.0, np.uint8)
    q = np.clip(np.rint(np.clip(img, 0.0, 1.0) * peak), 0, peak).astype(dtype)
    q = q[0] if q.shape[0] == 1 else q[::-1].transpose(1, 2, 0)
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise LightFieldError(f"cannot write image {path}")


# --------------------------------------------------------------------------
# light-field layouts

def demux_macro_pixel(image: np.ndarray, a: int) -> np.ndarray:
    """``[C, a*H, a*W]`` macro-pixel image -> ``[a, a, C, H, W]``; view[u, v][y, x] = image[y*a + u, x*a + v]."""
    c, hh, ww = image.shape
    if hh % a or ww % a:
        raise LightFieldError(f"macro-pixel image {hh}x{ww} is not divisible by angular resolution {a}")
    return np.ascontiguousarray(image.reshape(c, hh // a, a, ww // a, a).transpose(2, 4, 0, 1, 3))


def encode_macro_pixel(lf: LightField) -> np.ndarray:
    """Inverse of :func:`demux_macro_pixel`: ``[C, a*H, a*W]``."""
    a, _, c, h, w = lf.views.shape
    return np.ascontiguousarray(lf.views.transpose(2, 3, 0, 4, 1).reshape(c, h * a, w * a))


def decode_lf(source, a: int, color_space: str = "RGB") -> LightField:
    """Load a light field from a directory of ``view_{u}_{v}.png`` or a macro-pixel PNG.

    ``source`` may also be an in-memory ``[C, a*H, a*W]`` macro-pixel array.
    """
    if a < 1:
        raise LightFieldError(f"angular resolution must be >= 1, got {a}")
    if isinstance(source, np.ndarray):
        return LightField(demux_macro_pixel(source, a), color_space)
    path = Path(source)
    if path.is_dir():
        return _load_view_dir(path, a, color_space)
    return LightField(demux_macro_pixel(read_png(path), a), color_space)


def _load_view_dir(path: Path, a: int, color_space: str) -> LightField:
    rows = []
    shape = None
    for u in range(a):
        row = []
        for v in range(a):
            f = path / f"view_{u}_{v}.png"
            if not f.exists():
                raise LightFieldError(f"missing view {f.name} in {path}")
            img = read_png(f)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise LightFieldError(f"{f.name} has shape {img.shape}, expected {shape}")
            row.append(img)
        rows.append(np.stack(row))
    return LightField(np.stack(rows), color_space)


def angular_size_of_dir(path) -> int:
    """Infer a from the ``view_u_v.png`` files present in ``path``."""
    idx = [tuple(map(int, m.groups())) for f in Path(path).iterdir() if (m := _VIEW_RE.match(f.name))]
    if not idx:
        raise LightFieldError(f"no view_u_v.png files in {path}")
    return max(max(u, v) for u, v in idx) + 1


def save_view_dir(lf: LightField, path, bits: int = 8) -> list[Path]:
    """Write every view as ``view_{u}_{v}.png``; returns the written paths."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    views = lf.to_rgb().views if lf.color_space == "YCbCr" else lf.views
    out = []
    for u in range(lf.a):
        for v in range(lf.a):
            f = path / f"view_{u}_{v}.png"
            write_png(f, views[u, v], bits)
            out.append(f)
    return out
