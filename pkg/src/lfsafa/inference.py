"""Whole-light-field super-resolution with optional adaptation, tiled to bound memory."""
from __future__ import annotations

import math

import numpy as np

from .adaptation import Adaptation
from .backbone import Backbone
from .data.color import rgb_to_ycbcr, ycbcr_to_rgb
from .data.lightfield import LightField
from .data.resize import bicubic_resize
from .errors import CheckpointError, LightFieldError

# Upper bound on floats held by one SAS activation tensor during inference.
_ACTIVATION_BUDGET = 8_000_000


def receptive_radius(backbone: Backbone, adaptation: Adaptation | None = None) -> int:
    """LR-pixel radius of the network's receptive field (3x3 convs add one each)."""
    r = 2 + 2 * backbone.config.n_blocks
    r += sum(0.5 ** i for i in range(len(backbone.up))) + 1.0 / backbone.config.scale
    if adaptation is not None:
        r += 2 + 2 * adaptation.config.n_res_blocks
    return int(math.ceil(r))


def check_compatible(backbone: Backbone, adaptation: Adaptation | None, a: int | None = None) -> None:
    if adaptation is None:
        return
    if adaptation.config.features != backbone.config.features:
        raise CheckpointError(f"adaptation expects {adaptation.config.features} features, "
                              f"backbone produces {backbone.config.features}")
    if a is not None and adaptation.config.angular != a:
        raise CheckpointError(f"adaptation was trained for a={adaptation.config.angular}, light field has a={a}")


def _forward_tile(x: np.ndarray, backbone: Backbone, adaptation: Adaptation | None) -> np.ndarray:
    """``[n, C_img, h, w] -> [n, C_img, s*h, s*w]``; no tape is active so nothing is recorded."""
    feats = backbone.extract_features(x)
    if adaptation is not None:
        n = x.shape[0]
        c, hid = adaptation.config.features, adaptation.config.hidden
        per_target = n * hid * x.shape[-2] * x.shape[-1]
        chunk = max(1, min(n, _ACTIVATION_BUDGET // max(per_target, 1)))
        parts = [adaptation.adapt_all_views(feats, list(range(i, min(i + chunk, n)))).data
                 for i in range(0, n, chunk)]
        feats = np.concatenate(parts, axis=0).reshape(n, c, *x.shape[-2:])
    return backbone.upscale(feats).data


def super_resolve_views(views: np.ndarray, backbone: Backbone, adaptation: Adaptation | None = None,
                        tile: int | None = 48) -> np.ndarray:
    """Network SR of ``[n, C_img, H, W]`` LR views (same space the backbone was trained in).

    The image is processed in ``tile`` x ``tile`` LR blocks, each extended by
    the receptive radius, so the stitched result equals a whole-image pass.
    """
    n, c, h, w = views.shape
    check_compatible(backbone, adaptation, int(round(math.sqrt(n))) if adaptation is not None else None)
    s = backbone.config.scale
    if tile is None or (h <= tile and w <= tile):
        return _forward_tile(views, backbone, adaptation)
    m = receptive_radius(backbone, adaptation)
    out = np.empty((n, c, s * h, s * w), dtype=np.float32)
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1, x1 = min(y0 + tile, h), min(x0 + tile, w)
            ya, xa = max(0, y0 - m), max(0, x0 - m)
            yb, xb = min(h, y1 + m), min(w, x1 + m)
            sr = _forward_tile(np.ascontiguousarray(views[..., ya:yb, xa:xb]), backbone, adaptation)
            out[..., s * y0:s * y1, s * x0:s * x1] = sr[..., s * (y0 - ya):s * (y1 - ya), s * (x0 - xa):s * (x1 - xa)]
    return out


def super_resolve(lf: LightField, backbone: Backbone, adaptation: Adaptation | None = None,
                  tile: int | None = 48) -> LightField:
    """Upscale every view of an LR light field by the backbone's scale.

    A one-channel backbone runs on luminance: color inputs go through YCbCr,
    Y is super-resolved by the network and Cb/Cr are bicubic-upscaled.
    """
    a, s = lf.a, backbone.config.scale
    h, w = lf.spatial
    cimg = backbone.config.channels
    if cimg == lf.channels and (cimg == 3 or lf.color_space != "YCbCr"):
        sr = super_resolve_views(lf.flat_views(), backbone, adaptation, tile)
        return LightField(sr.reshape(a, a, cimg, s * h, s * w), lf.color_space)
    if cimg != 1:
        raise LightFieldError(f"backbone expects {cimg} channels, light field has {lf.channels}")
    ycc = lf.views if lf.color_space == "YCbCr" else rgb_to_ycbcr(lf.views)
    y = super_resolve_views(np.ascontiguousarray(ycc[:, :, :1].reshape(a * a, 1, h, w)), backbone, adaptation, tile)
    chroma = bicubic_resize(ycc[:, :, 1:], size=(s * h, s * w))
    out = np.concatenate([y.reshape(a, a, 1, s * h, s * w), chroma], axis=2)
    if lf.color_space == "RGB":
        out = ycbcr_to_rgb(out)
    return LightField(np.clip(out, 0.0, 1.0) if lf.color_space == "RGB" else out, lf.color_space)


def bicubic_upscale(lf: LightField, scale: int) -> LightField:
    h, w = lf.spatial
    return LightField(bicubic_resize(lf.views, size=(scale * h, scale * w)), lf.color_space)
