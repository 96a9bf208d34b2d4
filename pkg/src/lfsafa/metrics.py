"""Y-channel PSNR / SSIM over every sub-aperture view."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .data.lightfield import LightField, SaiIndex
from .errors import LightFieldError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _as_plane(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ShapeError("metric input", "[1, H, W] or [H, W]", img.shape)
        img = img[0]
    return img


def quantize8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def psnr(ref, test, quantize: bool = False) -> float:
    """10 log10(1 / MSE) in dB for [0, 1] images; ``inf`` when the images are identical."""
    a, b = _as_plane(ref), _as_plane(test)
    if a.shape != b.shape:
        raise ShapeError("psnr", a.shape, b.shape)
    if quantize:
        a, b = quantize8(a), quantize8(b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(ref, test, quantize: bool = False) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), data range 1."""
    a, b = _as_plane(ref), _as_plane(test)
    if a.shape != b.shape:
        raise ShapeError("ssim", a.shape, b.shape)
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError("ssim image size", f">= {SSIM_WINDOW}x{SSIM_WINDOW}", a.shape)
    if quantize:
        a, b = quantize8(a), quantize8(b)
    g = gaussian_window()
    c1, c2 = K1 ** 2, K2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class ViewScore:
    index: SaiIndex
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    per_view: list[ViewScore]
    scale: int
    border_crop: int
    mean_psnr: float = field(init=False)
    mean_ssim: float = field(init=False)

    def __post_init__(self):
        self.mean_psnr = float(np.mean([v.psnr for v in self.per_view]))
        self.mean_ssim = float(np.mean([v.ssim for v in self.per_view]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_view"] = [{"u": v.index.u, "v": v.index.v, "psnr": _num(v.psnr), "ssim": v.ssim}
                         for v in self.per_view]
        d["mean_psnr"] = _num(self.mean_psnr)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        lines = [f"scale x{self.scale}, border crop {self.border_crop}px", f"{'view':>8}  {'PSNR':>8}  {'SSIM':>7}"]
        for v in self.per_view:
            lines.append(f"{f'({v.index.u},{v.index.v})':>8}  {_fmt_db(v.psnr):>8}  {v.ssim:7.4f}")
        lines.append(f"{'mean':>8}  {_fmt_db(self.mean_psnr):>8}  {self.mean_ssim:7.4f}")
        return "\n".join(lines)


def _num(x: float):
    return "inf" if math.isinf(x) else x


def _fmt_db(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.2f}"


def evaluate_lf(sr: LightField, hr: LightField, border_crop: int | None = None, scale: int = 2,
                quantize: bool = False) -> EvalReport:
    """Per-view Y-channel PSNR/SSIM after cropping ``border_crop`` px (default: ``scale``) per side."""
    if sr.a != hr.a or sr.views.shape[2:] != hr.views.shape[2:]:
        raise LightFieldError(f"SR light field {sr.views.shape} does not match HR {hr.views.shape}")
    crop = scale if border_crop is None else border_crop
    sy, hy = sr.to_y().views, hr.to_y().views
    h, w = sy.shape[-2:]
    if 2 * crop >= min(h, w):
        raise LightFieldError(f"border crop {crop} leaves nothing of {h}x{w} views")
    if crop:
        sy, hy = sy[..., crop:h - crop, crop:w - crop], hy[..., crop:h - crop, crop:w - crop]
    rows = []
    for u in range(sr.a):
        for v in range(sr.a):
            rows.append(ViewScore(SaiIndex(u, v), psnr(hy[u, v], sy[u, v], quantize), ssim(hy[u, v], sy[u, v], quantize)))
    return EvalReport(rows, scale, crop)


def format_comparison(results: dict[str, dict[str, tuple[float, float]]], title: str = "") -> str:
    """Plain-text table: one row per method, one ``PSNR/SSIM`` column per dataset."""
    datasets = sorted({d for r in results.values() for d in r})
    width = max([len(m) for m in results] + [6])
    head = f"{'Method':<{width}} | " + " | ".join(f"{d:^14}" for d in datasets)
    lines = ([title] if title else []) + [head, "-" * len(head)]
    for method, row in results.items():
        cells = [f"{_fmt_db(row[d][0])}/{row[d][1]:.3f}" if d in row else "-" for d in datasets]
        lines.append(f"{method:<{width}} | " + " | ".join(f"{c:^14}" for c in cells))
    return "\n".join(lines)
