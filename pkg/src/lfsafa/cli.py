"""``lfsafa`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every subcommand writing to ``--out`` refuses to touch an existing
non-empty directory unless ``--force`` is given, and leaves a
``config.json`` snapshot plus a ``manifest.json`` (inputs, config digest,
output hashes) next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data.lightfield import (LightField, angular_size_of_dir, decode_lf, encode_macro_pixel, save_view_dir,
                              write_png)
from .data.patches import degrade
from .data.synthetic import synthetic_dataset
from .errors import CheckpointError, LfsafaError, LightFieldError, ShapeError, TrainingError
from .inference import bicubic_upscale, super_resolve
from .metrics import evaluate_lf
from .runtime import configure
from .train import TrainConfig, TrainLog, train_adaptation, train_backbone

log = logging.getLogger("lfsafa")


class UsageError(Exception):
    """Bad flags or inputs; exit code 2."""


# ----------------------------------------------------------------------------
# provenance helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _prepare_out(out: Path, force: bool) -> Path:
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())) and not force:
        raise UsageError(f"output {out} exists and is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}


def _write_manifest(out: Path, args: argparse.Namespace, inputs: list, extra: dict | None = None) -> Path:
    config = _snapshot(args)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True, default=str))
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "version": __version__,
        "command": args.command,
        "inputs": [{"path": str(p), "sha256": _sha256(Path(p)) if Path(p).is_file() else None} for p in inputs],
        "config_digest": _config_digest(config),
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _load_lf(src: str, angular: int | None, color: str | None = None) -> LightField:
    path = Path(src)
    if not path.exists():
        raise UsageError(f"input {src} does not exist")
    if angular is None:
        if not path.is_dir():
            raise UsageError("--angular is required for macro-pixel inputs")
        angular = angular_size_of_dir(path)
    lf = decode_lf(path, angular)
    if color is None:
        color = "Y" if lf.channels == 1 else "RGB"
    return LightField(lf.views, color)


def _lf_dirs(root: Path) -> list[Path]:
    if any(root.glob("view_*_*.png")):
        return [root]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and any(p.glob("view_*_*.png")))
    if not dirs:
        raise UsageError(f"no light fields (directories of view_u_v.png) under {root}")
    return dirs


# ----------------------------------------------------------------------------
# subcommands

def cmd_decode(args) -> int:
    try:
        lf = decode_lf(args.input, args.angular)
    except LightFieldError as exc:
        raise UsageError(str(exc)) from exc
    out = _prepare_out(args.out, args.force)
    save_view_dir(lf, out, bits=args.bits)
    _write_manifest(out, args, [args.input])
    print(f"decoded {lf.a}x{lf.a} views of {lf.spatial[0]}x{lf.spatial[1]} into {out}")
    return 0


def cmd_encode(args) -> int:
    lf = _load_lf(args.input, args.angular)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise UsageError(f"output {out} exists (use --force to overwrite)")
    write_png(out, encode_macro_pixel(lf), bits=args.bits)
    print(f"encoded {lf.a}x{lf.a} light field into {out}")
    return 0


def cmd_synth(args) -> int:
    out = _prepare_out(args.out, args.force)
    rng = np.random.default_rng(args.seed)
    for k, lf in enumerate(synthetic_dataset(rng, args.count, args.angular, args.size, args.disparity,
                                             channels=args.channels)):
        save_view_dir(lf, out / f"lf_{k:03d}", bits=args.bits)
    _write_manifest(out, args, [])
    print(f"wrote {args.count} synthetic {args.angular}x{args.angular} light fields to {out}")
    return 0


def _train_config(args) -> TrainConfig:
    base = TrainConfig.desk if args.preset == "desk" else TrainConfig.paper
    over = {"phase": "backbone" if args.phase == "backbone" else "adaptation", "seed": args.seed,
            "scale": args.scale, "deterministic": not args.nondeterministic}
    for flag, key in (("angular", "angular"), ("epochs", "epochs"), ("batches_per_epoch", "batches_per_epoch"),
                      ("lr", "lr0"), ("patch", "patch"), ("batch", "batch"), ("features", "features"),
                      ("hidden", "hidden")):
        if getattr(args, flag) is not None:
            over[key] = getattr(args, flag)
    if "no-diff" in args.ablation:
        over["use_difference"] = False
    if "no-residual" in args.ablation:
        over["use_residual"] = False
    try:
        return base(**over)
    except TrainingError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args) -> int:
    if args.phase == "adapt" and not args.backbone:
        raise UsageError("--phase adapt requires --backbone CHECKPOINT")
    cfg = _train_config(args)
    configure(cfg.deterministic)
    backbone = None
    if args.phase == "adapt":
        backbone = load_checkpoint(args.backbone, expect={"kind": "backbone"})
        if backbone.config.scale != cfg.scale:
            raise UsageError(f"backbone checkpoint is x{backbone.config.scale}, --scale is {cfg.scale}")
        backbone.set_frozen(True)
    if args.data:
        dataset = [_load_lf(str(d), None) for d in _lf_dirs(Path(args.data))]
        if args.phase == "adapt":
            dataset = [lf.center_crop(cfg.angular) if lf.a > cfg.angular else lf for lf in dataset]
    else:
        rng = np.random.default_rng(cfg.seed)
        dataset = synthetic_dataset(rng, args.synthetic_count, cfg.angular, args.synthetic_size, args.disparity)
    out = _prepare_out(args.out, args.force)
    tlog = TrainLog(out / "train_log.jsonl", every=args.log_every)
    t0 = time.perf_counter()
    if args.phase == "backbone":
        model = train_backbone(dataset, cfg, tlog)
        model.set_frozen(True)
        ckpt = save_checkpoint(model, out / "backbone.lfsa", extra={"config_digest": cfg.digest(),
                                                                    "train_config": cfg.to_dict()})
    else:
        before = backbone.checksum()
        model = train_adaptation(dataset, backbone, cfg, tlog)
        if backbone.checksum() != before:
            raise TrainingError("backbone parameters changed during adaptation training")
        ckpt = save_checkpoint(model, out / "adaptation.lfsa", extra={"config_digest": cfg.digest(),
                                                                      "train_config": cfg.to_dict(),
                                                                      "backbone_checksum": before})
    elapsed = time.perf_counter() - t0
    inputs = [args.backbone] if args.backbone else []
    _write_manifest(out, args, inputs + ([args.data] if args.data else []),
                    {"train_config": cfg.to_dict(), "seconds": round(elapsed, 1)})
    last = tlog.records[-1]["loss"] if tlog.records else float("nan")
    print(f"trained {args.phase} for {cfg.steps} steps in {elapsed:.0f}s; final loss {last:.5f}; wrote {ckpt}")
    return 0


def cmd_sr(args) -> int:
    configure(True)
    backbone = load_checkpoint(args.backbone, expect={"kind": "backbone"})
    if args.scale is not None and args.scale != backbone.config.scale:
        raise UsageError(f"--scale {args.scale} does not match backbone scale x{backbone.config.scale}")
    lf = _load_lf(args.input, args.angular)
    adaptation = None
    if args.adapt:
        adaptation = load_checkpoint(args.adapt, expect={"kind": "adaptation"})
        if adaptation.config.angular != lf.a:
            raise UsageError(f"adaptation checkpoint is for a={adaptation.config.angular}, input has a={lf.a}")
        if adaptation.config.features != backbone.config.features:
            raise UsageError("adaptation and backbone checkpoints have different feature widths")
    out = _prepare_out(args.out, args.force)
    sr = super_resolve(lf, backbone, adaptation, tile=args.tile)
    save_view_dir(sr, out, bits=args.bits)
    _write_manifest(out, args, [args.backbone] + ([args.adapt] if args.adapt else []) + [args.input])
    print(f"super-resolved {lf.a}x{lf.a} views x{backbone.config.scale} into {out}")
    return 0


def cmd_eval(args) -> int:
    hr = _load_lf(args.hr, args.angular)
    if args.bicubic:
        hr = hr.modcrop(args.scale)
        sr = bicubic_upscale(degrade(hr, args.scale), args.scale)
    elif args.sr:
        sr = _load_lf(args.sr, args.angular)
    else:
        raise UsageError("eval needs --sr DIR or --bicubic")
    try:
        report = evaluate_lf(sr, hr, border_crop=args.border, scale=args.scale, quantize=args.quantize)
    except (LightFieldError, ShapeError) as exc:
        raise UsageError(str(exc)) from exc
    print(report.to_table())
    if args.out:
        out = _prepare_out(args.out, args.force)
        (out / "report.json").write_text(report.to_json())
        _write_manifest(out, args, [p for p in (args.sr, args.hr) if p])
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import composite_check

    configure(True)
    worst = 0.0
    for seed in range(args.seeds):
        res = composite_check(seed, angular=args.angular, size=args.size, max_coords=args.max_coords)
        worst = max(worst, res.max_rel_error)
        print(f"seed {seed:3d}: max rel error {res.max_rel_error:.3e} over {res.checked} coords "
              f"({res.skipped_kinks} kinks skipped)")
    ok = worst < args.tol
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    from .ablation import format_ablation, run_ablation

    base = TrainConfig.desk if args.preset == "desk" else TrainConfig.paper
    over = {"seed": args.seed, "scale": args.scale}
    if args.epochs is not None:
        over["epochs"] = args.epochs
    if args.batches_per_epoch is not None:
        over["batches_per_epoch"] = args.batches_per_epoch
    cfg = base(**over)
    bcfg = base(seed=args.seed, scale=args.scale, phase="backbone")
    if args.backbone_steps is not None:
        bcfg = replace(bcfg, epochs=1, batches_per_epoch=args.backbone_steps)
    configure(True)
    out = _prepare_out(args.out, args.force) if args.out else None
    results, backbone = run_ablation(cfg, n_train=args.train_count, n_test=args.test_count, size=args.size,
                                     backbone_cfg=bcfg)
    table = format_ablation(results)
    print(table)
    if out is not None:
        (out / "ablation.txt").write_text(table + "\n")
        (out / "ablation.json").write_text(json.dumps([r.__dict__ for r in results], indent=2))
        save_checkpoint(backbone, out / "backbone.lfsa", extra={"config_digest": cfg.digest()})
        _write_manifest(out, args, [], {"train_config": cfg.to_dict()})
    return 0


# ----------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfsafa", description="Light-field SR by adapting a frozen SISR network.")
    p.add_argument("--version", action="version", version=f"lfsafa {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def out_flags(sp, required=True):
        sp.add_argument("--out", type=Path, required=required)
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty --out")

    sp = sub.add_parser("decode", help="macro-pixel PNG -> directory of view PNGs")
    sp.add_argument("input")
    sp.add_argument("--angular", "-a", type=int, required=True)
    sp.add_argument("--bits", type=int, choices=(8, 16), default=8)
    out_flags(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("encode", help="directory of view PNGs -> macro-pixel PNG")
    sp.add_argument("input")
    sp.add_argument("--angular", "-a", type=int)
    sp.add_argument("--bits", type=int, choices=(8, 16), default=8)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("synth", help="write synthetic parallax light fields")
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--angular", "-a", type=int, default=5)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--disparity", type=float, default=1.0)
    sp.add_argument("--channels", type=int, choices=(1, 3), default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bits", type=int, choices=(8, 16), default=16)
    out_flags(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="phase 1 (backbone) or phase 2 (adaptation) training")
    sp.add_argument("--phase", choices=("backbone", "adapt"), required=True)
    sp.add_argument("--backbone", help="frozen backbone checkpoint (required for --phase adapt)")
    sp.add_argument("--data", help="directory of light-field view directories; synthetic data if omitted")
    sp.add_argument("--preset", choices=("desk", "paper"), default="desk")
    sp.add_argument("--scale", type=int, choices=(2, 4), default=2)
    sp.add_argument("--angular", "-a", type=int)
    sp.add_argument("--ablation", action="append", choices=("no-diff", "no-residual"), default=[])
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batches-per-epoch", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--patch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--features", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--synthetic-count", type=int, default=12)
    sp.add_argument("--synthetic-size", type=int, default=64)
    sp.add_argument("--disparity", type=float, default=1.0)
    sp.add_argument("--log-every", type=int, default=1)
    sp.add_argument("--nondeterministic", action="store_true", help="allow multi-threaded BLAS (LFSAFA_THREADS)")
    out_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sr", help="super-resolve a light field")
    sp.add_argument("--backbone", required=True)
    sp.add_argument("--adapt")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--angular", "-a", type=int)
    sp.add_argument("--scale", type=int)
    sp.add_argument("--tile", type=int, default=48)
    sp.add_argument("--bits", type=int, choices=(8, 16), default=8)
    out_flags(sp)
    sp.set_defaults(func=cmd_sr)

    sp = sub.add_parser("eval", help="Y-channel PSNR/SSIM of SR views against HR views")
    sp.add_argument("--sr")
    sp.add_argument("--hr", required=True)
    sp.add_argument("--bicubic", action="store_true", help="score the bicubic baseline built from --hr")
    sp.add_argument("--angular", "-a", type=int)
    sp.add_argument("--scale", type=int, default=2)
    sp.add_argument("--border", type=int)
    sp.add_argument("--quantize", action="store_true", help="round Y to 8 bits before scoring")
    out_flags(sp, required=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the full composite")
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--angular", "-a", type=int, default=2)
    sp.add_argument("--size", type=int, default=8)
    sp.add_argument("--max-coords", type=int, default=24)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("ablate", help="desk-scale ablation matrix")
    sp.add_argument("--matrix", action="store_true", help="run the five-row matrix (the only mode)")
    sp.add_argument("--preset", choices=("desk", "paper"), default="desk")
    sp.add_argument("--scale", type=int, choices=(2, 4), default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batches-per-epoch", type=int)
    sp.add_argument("--backbone-steps", type=int, help="phase-1 steps (default: the preset's)")
    sp.add_argument("--train-count", type=int, default=12)
    sp.add_argument("--test-count", type=int, default=4)
    sp.add_argument("--size", type=int, default=64)
    out_flags(sp, required=False)
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, CheckpointError) as exc:
        print(f"lfsafa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (LfsafaError, OSError, ValueError, FloatingPointError) as exc:
        print(f"lfsafa {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
