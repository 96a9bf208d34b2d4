"""Sub-aperture feature adaptation: per-source-view shift (SAS) blocks and a fusion block.

For target view i and every source view j,

    f_i^j = SAS_j([f_j, f_i - f_j])
    f_i'  = f_i + F_s([f_i^1, ..., f_i^n])

SAS_j is indexed by the source view only and shared across targets. F_s is a
1x1 blend of the n concatenated SAS outputs followed by a 3x3 conv.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import nn
from .errors import ShapeError
from .nn import ConvParams, Tensor, init_conv
from .nn.params import ParameterSet


@dataclass(frozen=True)
class AdaptationConfig:
    angular: int = 5        # a; n = a * a views and SAS blocks
    features: int = 64      # C_i, width of backbone features
    hidden: int = 32        # C_x, width inside each SAS block
    n_res_blocks: int = 3
    use_difference: bool = True
    use_residual: bool = True

    @property
    def n(self) -> int:
        return self.angular * self.angular

    @property
    def entry_in(self) -> int:
        return 2 * self.features if self.use_difference else self.features


@dataclass
class SasParams:
    entry: ConvParams
    blocks: list[tuple[ConvParams, ConvParams]]


@dataclass
class FusionParams:
    blend: ConvParams    # n*C_x -> C_i, 1x1
    process: ConvParams  # C_i -> C_i, 3x3


class Adaptation(ParameterSet):
    """The trainable module between a frozen feature extractor and upscaler.

    SAS weights are stored stacked along a leading source-view axis, so one
    grouped conv evaluates all n SAS blocks at once. ``sas(j)`` slices out
    the parameters of block j.

    The fusion ``process`` conv starts at zero, which makes the module an
    exact identity at initialization while the blend conv starts random.
    Zeroing both would leave a saddle where neither weight gets a gradient.
    """

    def __init__(self, config: AdaptationConfig = AdaptationConfig(), rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if config.angular < 1:
            raise ShapeError("angular resolution", ">= 1", config.angular)
        rng = rng if rng is not None else np.random.default_rng(0)
        n, c, x = config.n, config.features, config.hidden
        self.config = config
        self.entry = init_conv(config.entry_in, x, 3, rng, groups=n, dtype=dtype)
        self.blocks = [(init_conv(x, x, 3, rng, groups=n, dtype=dtype), init_conv(x, x, 3, rng, groups=n, dtype=dtype))
                       for _ in range(config.n_res_blocks)]
        self.fusion = FusionParams(
            blend=init_conv(n * x, c, 1, rng, dtype=dtype),
            process=init_conv(c, c, 3, rng, zero=True, dtype=dtype),
        )

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        convs = [("sas.entry", self.entry)]
        for b, (c1, c2) in enumerate(self.blocks):
            convs += [(f"sas.block{b}.conv1", c1), (f"sas.block{b}.conv2", c2)]
        convs += [("fusion.blend", self.fusion.blend), ("fusion.process", self.fusion.process)]
        out = []
        for name, p in convs:
            p.kernel.name, p.bias.name = f"{name}.kernel", f"{name}.bias"
            out += [(p.kernel.name, p.kernel), (p.bias.name, p.bias)]
        return out

    def metadata(self) -> dict:
        return {"kind": "adaptation", **asdict(self.config)}

    @classmethod
    def from_metadata(cls, meta: dict) -> "Adaptation":
        keys = ("angular", "features", "hidden", "n_res_blocks", "use_difference", "use_residual")
        return cls(AdaptationConfig(**{k: meta[k] for k in keys}))

    # ------------------------------------------------------------------
    # straight-line path: one (target, source) pair at a time

    def sas(self, j: int) -> SasParams:
        if not 0 <= j < self.config.n:
            raise ShapeError("SAS index", f"0..{self.config.n - 1}", j)

        def pick(p: ConvParams) -> ConvParams:
            return ConvParams(nn.getitem(p.kernel, j), nn.getitem(p.bias, j))

        return SasParams(pick(self.entry), [(pick(c1), pick(c2)) for c1, c2 in self.blocks])

    def sas_forward(self, j: int, f_j, f_i) -> Tensor:
        """SAS_j applied to source features f_j on behalf of target features f_i: ``[C_i,H,W] -> [C_x,H,W]``."""
        f_j, f_i = nn.as_tensor(f_j), nn.as_tensor(f_i)
        if f_j.shape != f_i.shape:
            raise ShapeError("sas_forward f_j vs f_i", f_i.shape, f_j.shape)
        p = self.sas(j)
        x = nn.concat_channels([f_j, nn.sub(f_i, f_j)]) if self.config.use_difference else f_j
        x = nn.conv2d(x, p.entry)
        for c1, c2 in p.blocks:
            x = nn.residual_block(x, c1, c2)
        return x

    def fuse(self, f_i, shifted) -> Tensor:
        """Blend the n shifted features (flat source order) and add them to f_i."""
        f_i = nn.as_tensor(f_i)
        shifted = list(shifted)
        if len(shifted) != self.config.n:
            raise ShapeError("fuse: number of shifted features", self.config.n, len(shifted))
        for s in shifted:
            if s.shape[-2:] != f_i.shape[-2:]:
                raise ShapeError("fuse: spatial dims", f_i.shape[-2:], s.shape[-2:])
        z = nn.conv2d(nn.conv2d(nn.concat_channels(shifted), self.fusion.blend), self.fusion.process)
        return nn.add(f_i, z) if self.config.use_residual else z

    def adapt_view(self, i: int, features) -> Tensor:
        """f_i' for one target view, from ``[n, C_i, H, W]`` features (or a list of n maps)."""
        feats = list(features) if isinstance(features, (list, tuple)) else nn.unbind(features, 0)
        f_i = feats[i]
        return self.fuse(f_i, [self.sas_forward(j, feats[j], f_i) for j in range(self.config.n)])

    # ------------------------------------------------------------------
    # batched path

    def adapt_all_views(self, features, targets: Sequence[int] | None = None) -> Tensor:
        """``[..., n, C_i, H, W] -> [..., n, C_i, H, W]``; output i is f_i'.

        Equivalent to ``adapt_view`` for every i. The entry conv of SAS_j on
        [f_j, f_i - f_j] is split by linearity into conv(f_j; W_a - W_b) +
        conv(f_i; W_b), so the n^2 source/target pairs only pay for the
        residual blocks.

        ``targets`` restricts the output to those target views (in the given
        order, shape ``[..., len(targets), C_i, H, W]``); inference uses it to
        bound memory.
        """
        if isinstance(features, (list, tuple)):
            return nn.unbind(self.adapt_all_views(nn.stack(features, 0), targets), 0)
        feats = nn.as_tensor(features)
        cfg = self.config
        n, c, x = cfg.n, cfg.features, cfg.hidden
        if feats.ndim < 4 or feats.shape[-4] != n or feats.shape[-3] != c:
            raise ShapeError("adapt_all_views features", f"[..., {n}, {c}, H, W]", feats.shape)
        lead, (h, w) = feats.shape[:-4], feats.shape[-2:]
        b = int(np.prod(lead)) if lead else 1
        f = nn.reshape(feats, (b, n, c, h, w))
        if targets is None:
            tgt, t = f, n
        else:
            targets = list(targets)
            if not targets or min(targets) < 0 or max(targets) >= n:
                raise ShapeError("adapt_all_views targets", f"indices in 0..{n - 1}", targets)
            tgt, t = f[:, targets], len(targets)
        by_source = nn.transpose(f, (1, 0, 2, 3, 4))  # [n_j, B, C, H, W]

        if cfg.use_difference:
            kern = self.entry.kernel
            w_src, w_diff = kern[:, :, :c], kern[:, :, c:]
            own = nn.conv2d(by_source, ConvParams(nn.sub(w_src, w_diff), self.entry.bias))  # [n_j, B, X, H, W]
            stacked = ConvParams(nn.reshape(w_diff, (n * x, c, 3, 3)), Tensor(np.zeros(n * x, dtype=kern.dtype)))
            cross = nn.conv2d(tgt, stacked)  # [B, t, n_j*X, H, W]
            cross = nn.transpose(nn.reshape(cross, (b, t, n, x, h, w)), (2, 0, 1, 3, 4, 5))  # [n_j, B, t, X, H, W]
            e = nn.add(cross, nn.reshape(own, (n, b, 1, x, h, w)))
            e = nn.reshape(e, (n, b * t, x, h, w))
        else:
            e = nn.conv2d(by_source, self.entry)  # [n_j, B, X, H, W]; independent of the target

        for c1, c2 in self.blocks:
            e = nn.residual_block(e, c1, c2)

        if cfg.use_difference:
            s = nn.transpose(nn.reshape(e, (n, b, t, x, h, w)), (1, 2, 0, 3, 4, 5))
            s = nn.reshape(s, (b, t, n * x, h, w))
        else:
            s = nn.reshape(nn.transpose(e, (1, 0, 2, 3, 4)), (b, 1, n * x, h, w))
        z = nn.conv2d(nn.conv2d(s, self.fusion.blend), self.fusion.process)
        out = nn.add(tgt, z) if cfg.use_residual else nn.broadcast_to(z, (b, t, c, h, w))
        return nn.reshape(out, lead + (t, c, h, w))
