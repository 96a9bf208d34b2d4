"""Finite-difference check of the full composite F_up(adapt(F_feat(x))) in float64."""
from __future__ import annotations

import numpy as np

from . import nn
from .adaptation import Adaptation, AdaptationConfig
from .backbone import Backbone, BackboneConfig
from .nn.gradcheck import GradCheckResult, gradient_check_detail


def tiny_models(seed: int, angular: int = 2, features: int = 4, hidden: int = 3):
    """Small float64 backbone and adaptation module with a non-zero fusion conv.

    The fusion ``process`` conv starts at zero, which would hide every SAS
    gradient, so it is re-drawn here.
    """
    rng = np.random.default_rng(seed)
    bb = Backbone(BackboneConfig(channels=1, features=features, n_blocks=1, scale=2), rng, dtype=np.float64)
    ad = Adaptation(AdaptationConfig(angular=angular, features=features, hidden=hidden, n_res_blocks=1),
                    rng, dtype=np.float64)
    proc = ad.fusion.process
    proc.kernel.data = rng.uniform(-0.3, 0.3, proc.kernel.shape)
    proc.bias.data = rng.uniform(-0.1, 0.1, proc.bias.shape)
    return bb, ad


def composite_check(seed: int, angular: int = 2, size: int = 8, max_coords: int | None = 24,
                    eps: float = 1e-3) -> GradCheckResult:
    """Check d/d(input, every parameter) of a random projection of the composite output."""
    rng = np.random.default_rng(10_000 + seed)
    bb, ad = tiny_models(seed, angular)
    n = angular * angular
    x = nn.Tensor(rng.uniform(0, 1, (n, 1, size, size)), requires_grad=True)
    proj = rng.standard_normal((n, 1, 2 * size, 2 * size))

    def loss(_):
        feats = bb.extract_features(x)
        sr = bb.upscale(nn.reshape(ad.adapt_all_views(feats), feats.shape))
        return nn.sum_(nn.mul(sr, proj))

    points = [x] + bb.parameters() + ad.parameters()
    worst, checked, skipped = 0.0, 0, 0
    for k, p in enumerate(points):
        res = gradient_check_detail(loss, p, eps, max_coords=max_coords, rng=np.random.default_rng(seed * 997 + k))
        worst = max(worst, res.max_rel_error)
        checked += res.checked
        skipped += res.skipped_kinks
    return GradCheckResult(worst, checked, skipped)
