"""Desk-scale EDSR-style SISR backbone split into a feature extractor and an upscaler."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .errors import ShapeError
from .nn import ConvParams, Tensor, init_conv
from .nn.params import ParameterSet

SUPPORTED_SCALES = (2, 4)


@dataclass(frozen=True)
class BackboneConfig:
    channels: int = 1      # image channels (1 = Y only)
    features: int = 64     # width of the feature maps handed to the adaptation module
    n_blocks: int = 4
    scale: int = 2

    def __post_init__(self):
        if self.scale not in SUPPORTED_SCALES:
            raise ShapeError("backbone scale", SUPPORTED_SCALES, self.scale)
        if min(self.channels, self.features) < 1 or self.n_blocks < 0:
            raise ShapeError("backbone config", "positive widths, n_blocks >= 0", asdict(self))


class Backbone(ParameterSet):
    """head -> residual body -> body tail (+ head skip) = features; (conv, x2 shuffle)* -> tail = image."""

    def __init__(self, config: BackboneConfig = BackboneConfig(), rng: np.random.Generator | None = None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        c, f = config.channels, config.features
        self.config = config
        self.head = init_conv(c, f, 3, rng, dtype=dtype)
        self.body = [(init_conv(f, f, 3, rng, dtype=dtype), init_conv(f, f, 3, rng, dtype=dtype))
                     for _ in range(config.n_blocks)]
        self.body_tail = init_conv(f, f, 3, rng, dtype=dtype)
        self.up = [init_conv(f, 4 * f, 3, rng, dtype=dtype) for _ in range(config.scale // 2)]
        self.tail = init_conv(f, c, 3, rng, dtype=dtype)
        self.frozen = False

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        convs: list[tuple[str, ConvParams]] = [("head", self.head)]
        for i, (c1, c2) in enumerate(self.body):
            convs += [(f"body.{i}.conv1", c1), (f"body.{i}.conv2", c2)]
        convs.append(("body_tail", self.body_tail))
        convs += [(f"up.{i}", p) for i, p in enumerate(self.up)]
        convs.append(("tail", self.tail))
        out = []
        for name, p in convs:
            p.kernel.name, p.bias.name = f"{name}.kernel", f"{name}.bias"
            out += [(p.kernel.name, p.kernel), (p.bias.name, p.bias)]
        return out

    def set_frozen(self, frozen: bool = True) -> "Backbone":
        """Frozen parameters stop requiring gradients, so no tape records them."""
        self.frozen = frozen
        for t in self.parameters():
            t.requires_grad = not frozen
        return self

    def extract_features(self, img) -> Tensor:
        """``[..., C_img, H, W] -> [..., C_i, H, W]``."""
        img = nn.as_tensor(img)
        if img.ndim < 3 or img.shape[-3] != self.config.channels:
            raise ShapeError("extract_features input channels", self.config.channels,
                             img.shape[-3] if img.ndim >= 3 else img.shape)
        x = nn.conv2d(img, self.head)
        res = x
        for c1, c2 in self.body:
            res = nn.residual_block(res, c1, c2)
        return nn.add(nn.conv2d(res, self.body_tail), x)

    def upscale(self, feat, scale: int | None = None) -> Tensor:
        """``[..., C_i, H, W] -> [..., C_img, s*H, s*W]``."""
        scale = self.config.scale if scale is None else scale
        if scale not in SUPPORTED_SCALES:
            raise ShapeError("upscale factor", SUPPORTED_SCALES, scale)
        if scale != self.config.scale:
            raise ShapeError("upscale factor (backbone was built for)", self.config.scale, scale)
        x = nn.as_tensor(feat)
        if x.shape[-3] != self.config.features:
            raise ShapeError("upscale feature channels", self.config.features, x.shape[-3])
        for p in self.up:
            x = nn.pixel_shuffle(nn.conv2d(x, p), 2)
        return nn.conv2d(x, self.tail)

    def __call__(self, img) -> Tensor:
        return self.upscale(self.extract_features(img))

    def metadata(self) -> dict:
        return {"kind": "backbone", **asdict(self.config), "frozen": self.frozen}

    @classmethod
    def from_metadata(cls, meta: dict) -> "Backbone":
        cfg = BackboneConfig(**{k: meta[k] for k in ("channels", "features", "n_blocks", "scale")})
        model = cls(cfg)
        model.set_frozen(bool(meta.get("frozen", False)))
        return model
