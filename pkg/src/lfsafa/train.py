"""Two-phase training: a SISR backbone on single views, then the adaptation module on a frozen backbone."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .adaptation import Adaptation, AdaptationConfig
from .backbone import Backbone, BackboneConfig
from .data.lightfield import LightField
from .data.patches import degrade, random_augment, sample_patch
from .errors import TrainingError
from .inference import super_resolve_views
from .metrics import psnr
from .nn import GradTape, Tensor, l1_loss
from .nn.optim import Adam, step_decay_lr

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig", "TrainLog", "adaptation_step_loss", "l1_loss", "lr_schedule", "prepare_pairs",
    "sample_batch", "split_validation", "train_adaptation", "train_backbone", "validation_psnr",
]


@dataclass(frozen=True)
class TrainConfig:
    scale: int = 2
    patch: int = 32              # LR patch side
    batch: int = 4
    epochs: int = 250
    batches_per_epoch: int = 1000
    lr0: float = 1e-4
    lr_decay: float = 0.5
    decay_every: int = 50        # epochs
    seed: int = 0
    phase: str = "adaptation"    # or "backbone"
    angular: int = 5
    use_difference: bool = True
    use_residual: bool = True
    features: int = 64           # C_i
    hidden: int = 32             # C_x
    n_blocks: int = 4            # backbone residual blocks
    channels: int = 1            # 1 = train on Y
    val_fraction: float = 0.1
    deterministic: bool = True

    def __post_init__(self):
        for name in ("scale", "patch", "batch", "lr0", "lr_decay", "decay_every", "angular", "features", "hidden"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"TrainConfig.{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0 or self.batches_per_epoch < 0:
            raise TrainingError("epochs and batches_per_epoch must be >= 0")
        if self.phase not in ("backbone", "adaptation"):
            raise TrainingError(f"unknown phase {self.phase!r}")
        if self.scale not in (2, 4):
            raise TrainingError(f"scale must be 2 or 4, got {self.scale}")

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        """Full recipe: 250 epochs x 1000 batches of 4, 32px LR patches, Adam 1e-4 halved every 50 epochs."""
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """CI-sized run on one CPU core: narrow widths, a 3x3 grid, 2 x 100 steps.

        The backbone phase gets 2 x 750 steps on 32 px patches instead, so
        the adaptation module is measured against a converged SISR network
        rather than making up for an undertrained one.
        """
        base = dict(epochs=2, batches_per_epoch=100, angular=3, n_blocks=4, features=DESK_FEATURES,
                    hidden=DESK_HIDDEN, patch=DESK_PATCH, lr0=DESK_LR)
        if overrides.get("phase") == "backbone":
            base.update(batches_per_epoch=750, patch=32)
        base.update(overrides)
        return cls(**base)

    @property
    def steps(self) -> int:
        return self.epochs * self.batches_per_epoch

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(channels=self.channels, features=self.features, n_blocks=self.n_blocks,
                              scale=self.scale)

    def adaptation_config(self) -> AdaptationConfig:
        return AdaptationConfig(angular=self.angular, features=self.features, hidden=self.hidden,
                                use_difference=self.use_difference, use_residual=self.use_residual)


DESK_FEATURES = 32
DESK_HIDDEN = 8
DESK_PATCH = 16
DESK_LR = 1e-3


def lr_schedule(cfg: TrainConfig) -> list[float]:
    """Learning rate used in each epoch."""
    return [step_decay_lr(e, cfg.lr0, cfg.lr_decay, cfg.decay_every) for e in range(cfg.epochs)]


@dataclass
class TrainLog:
    """Step records, optionally mirrored to a JSONL file."""

    path: Path | None = None
    every: int = 1
    records: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            self.path.write_text("")

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None and (record["step"] % self.every == 0 or "psnr_val" in record):
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record) + "\n")

    @property
    def losses(self) -> list[float]:
        return [r["loss"] for r in self.records]


def split_validation(dataset: Sequence[LightField], fraction: float) -> tuple[list[LightField], list[LightField]]:
    """Hold out the last ``ceil(fraction * len)`` light fields (at least one kept for training)."""
    dataset = list(dataset)
    k = min(len(dataset) - 1, int(math.ceil(fraction * len(dataset)))) if fraction > 0 else 0
    return (dataset[:len(dataset) - k], dataset[len(dataset) - k:]) if k > 0 else (dataset, [])


def prepare_pairs(dataset: Sequence[LightField], scale: int, channels: int = 1) -> list[tuple[LightField, LightField]]:
    """(LR, HR) pairs: luminance (or RGB), modcropped to the scale, bicubic-degraded."""
    pairs = []
    for lf in dataset:
        hr = lf.to_y() if channels == 1 else lf.to_rgb()
        hr = hr.modcrop(scale)
        pairs.append((degrade(hr, scale), hr))
    return pairs


def validation_psnr(pairs, backbone: Backbone, adaptation: Adaptation | None = None, border: int | None = None) -> float:
    """Mean PSNR over every view of every validation pair."""
    border = backbone.config.scale if border is None else border
    vals = []
    for lr, hr in pairs:
        sr = super_resolve_views(lr.flat_views(), backbone, adaptation)
        ref = hr.flat_views()
        b = border
        for k in range(ref.shape[0]):
            vals.append(psnr(ref[k, :, b:-b or None, b:-b or None], sr[k, :, b:-b or None, b:-b or None]))
    return float(np.mean(vals))


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for weight init and for batch sampling."""
    init, data = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(data)


def sample_batch(pairs, cfg: TrainConfig, rng: np.random.Generator):
    """``cfg.batch`` aligned, augmented LF patches: (LR ``[B, n, C, p, p]``, HR ``[B, n, C, sp, sp]``)."""
    lrs, hrs = [], []
    for _ in range(cfg.batch):
        lr, hr = pairs[int(rng.integers(len(pairs)))]
        pair = random_augment(sample_patch(lr, hr, cfg.patch, cfg.scale, rng), rng)
        lrs.append(pair.lr.flat_views())
        hrs.append(pair.hr.flat_views())
    return np.stack(lrs), np.stack(hrs)


def _check_loss(loss: Tensor, step: int) -> float:
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {step}")
    return value


def train_backbone(dataset: Sequence[LightField], cfg: TrainConfig, log_to: TrainLog | None = None,
                   backbone: Backbone | None = None) -> Backbone:
    """Train a SISR backbone treating every view as an independent image."""
    if not dataset:
        raise TrainingError("train_backbone needs a non-empty dataset")
    init_rng, rng = _rngs(cfg.seed)
    model = backbone if backbone is not None else Backbone(cfg.backbone_config(), init_rng)
    model.set_frozen(False)
    train_set, val_set = split_validation(dataset, cfg.val_fraction)
    pairs = prepare_pairs(train_set, cfg.scale, cfg.channels)
    val_pairs = prepare_pairs(val_set, cfg.scale, cfg.channels)
    opt = Adam(model.parameters(), lr=cfg.lr0)
    schedule = lr_schedule(cfg)

    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(cfg.batches_per_epoch):
            lrb, hrb = [], []
            for _ in range(cfg.batch):
                lr, hr = pairs[int(rng.integers(len(pairs)))]
                u, v = (int(t) for t in rng.integers(0, lr.a, size=2))
                single_lr = LightField(lr.views[u:u + 1, v:v + 1], lr.color_space)
                single_hr = LightField(hr.views[u:u + 1, v:v + 1], hr.color_space)
                pair = random_augment(sample_patch(single_lr, single_hr, cfg.patch, cfg.scale, rng), rng)
                lrb.append(pair.lr.views[0, 0])
                hrb.append(pair.hr.views[0, 0])
            with GradTape() as tape:
                loss = l1_loss(model(np.stack(lrb)), np.stack(hrb))
            value = _check_loss(loss, step)
            opt.step(tape.backward(loss), lr=schedule[epoch])
            _log(log_to, step, epoch, schedule[epoch], value)
            step += 1
        if val_pairs and log_to is not None:
            _log(log_to, step - 1, epoch, schedule[epoch], value, validation_psnr(val_pairs, model))
    return model


def train_adaptation(dataset: Sequence[LightField], backbone: Backbone, cfg: TrainConfig,
                     log_to: TrainLog | None = None, adaptation: Adaptation | None = None) -> Adaptation:
    """Train only the adaptation module; the backbone must already be frozen.

    Each step draws ``cfg.batch`` aligned light-field patches, runs frozen
    feature extraction on every view, adapts all views jointly, upscales
    them with the frozen upscaler and sums the per-view L1 losses.
    """
    if not backbone.frozen:
        raise TrainingError("protocol violation: backbone must be frozen before adaptation training")
    if not dataset:
        raise TrainingError("train_adaptation needs a non-empty dataset")
    bad = [lf.a for lf in dataset if lf.a != cfg.angular]
    if bad:
        raise TrainingError(f"dataset angular resolution {bad[0]} does not match config angular={cfg.angular}")
    if backbone.config.scale != cfg.scale:
        raise TrainingError(f"backbone scale x{backbone.config.scale} != config scale x{cfg.scale}")

    init_rng, rng = _rngs(cfg.seed)
    acfg = replace(cfg.adaptation_config(), features=backbone.config.features)
    model = adaptation if adaptation is not None else Adaptation(acfg, init_rng)
    train_set, val_set = split_validation(dataset, cfg.val_fraction)
    pairs = prepare_pairs(train_set, cfg.scale, cfg.channels)
    val_pairs = prepare_pairs(val_set, cfg.scale, cfg.channels)
    opt = Adam(model.parameters(), lr=cfg.lr0)
    schedule = lr_schedule(cfg)
    n = acfg.n

    step = 0
    value = float("nan")
    for epoch in range(cfg.epochs):
        for _ in range(cfg.batches_per_epoch):
            lr_b, hr_b = sample_batch(pairs, cfg, rng)
            b, _, c, p, _ = lr_b.shape
            feats = backbone.extract_features(lr_b.reshape(b * n, c, p, p))
            with GradTape() as tape:
                adapted = model.adapt_all_views(nn.reshape(feats, (b, n, -1, p, p)))
                sr = backbone.upscale(nn.reshape(adapted, (b * n, -1, p, p)))
                loss = nn.mul(l1_loss(sr, hr_b.reshape(sr.shape)), float(n))
            value = _check_loss(loss, step)
            opt.step(tape.backward(loss), lr=schedule[epoch])
            _log(log_to, step, epoch, schedule[epoch], value)
            step += 1
        if val_pairs and log_to is not None:
            _log(log_to, step - 1, epoch, schedule[epoch], value, validation_psnr(val_pairs, backbone, model))
    return model


def adaptation_step_loss(batch: tuple[np.ndarray, np.ndarray], backbone: Backbone,
                         adaptation: Adaptation | None) -> float:
    """Summed per-view L1 of one batch, with or without the adaptation module."""
    lr_b, hr_b = batch
    b, n, c, p, _ = lr_b.shape
    feats = backbone.extract_features(lr_b.reshape(b * n, c, p, p))
    if adaptation is not None:
        feats = nn.reshape(adaptation.adapt_all_views(nn.reshape(feats, (b, n, -1, p, p))), (b * n, -1, p, p))
    sr = backbone.upscale(feats)
    return float(l1_loss(sr, hr_b.reshape(sr.shape)).item() * n)


def _log(log_to: TrainLog | None, step: int, epoch: int, lr: float, loss: float, psnr_val: float | None = None):
    if log_to is None:
        return
    rec = {"step": step, "epoch": epoch, "lr": lr, "loss": loss}
    if psnr_val is not None:
        rec["psnr_val"] = psnr_val
    log_to.write(rec)
