"""Command line entry point.

Subcommands: gen-synthetic, train, eval, predict, augment-preview, gradcheck.
Exit codes: 0 success, 2 usage/config error, 3 data or format error,
4 numerical divergence (including a failed gradcheck). The seed falls back
to the VIVIDET_SEED environment variable when no --seed is given.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import clipio, metrics, synthetic, training
from .config import format_flat, load_flat
from .errors import ConfigError, DivergenceError, FormatError, ShapeError, VividetError
from .model import (
    HEAD_LINEAR,
    HEAD_TANH_HIDDEN,
    ModelConfig,
    SCALE_FULL_DIM,
    SCALE_PER_HEAD,
    init_params,
    load_model,
    save_model,
)
from .rng import make_rng
from .tensor import GradTape, Tensor, check_gradients
from .video import AugmentSpec, VideoClip

# Tuned defaults for the train command (also the ModelConfig/TrainConfig defaults).
TRAIN_DEFAULTS = {
    "batch_size": 32,
    "epochs": 100,
    "learning_rate": 1e-4,
    "weight_decay": 1e-5,
    "split_fraction": 0.6,
    "patch": (8, 8, 8),
    "embed_dim": 128,
    "heads": 8,
    "layers": 8,
    "mlp_ratio": 4,
    "classes": 2,
    "frames": 56,
    "size": 64,
    "channels": 3,
    "head_variant": HEAD_LINEAR,
    "attention_scale": SCALE_PER_HEAD,
    "seed": 0,
    "workers": 1,
    "augment": True,
    "blur_sigma": (0.5, 1.5),
    "rotation": (-15.0, 15.0),
    "h_flip_prob": 0.5,
    "v_flip_prob": 0.0,
    "perturb": 0.05,
}


def _tuple_arg(n, cast):
    def parse(text):
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated values, got {text!r}")
        try:
            return tuple(cast(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"could not parse {text!r}") from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vividet",
        description="Violence detection with a tubelet-token video transformer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate the synthetic moving-blob dataset")
    p.add_argument("--clips-per-class", type=int, default=60, help="clips per class (default: 60)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $VIVIDET_SEED or 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--frames", type=int, default=16, help="frames per clip (default: 16)")
    p.add_argument("--size", type=int, default=32, help="frame height and width (default: 32)")
    p.add_argument("--channels", type=int, default=1, help="channels per pixel (default: 1)")
    p.add_argument("--motion-gap", type=float, default=3.0,
                   help="violent-class speed multiplier minus one (default: 3.0)")
    p.set_defaults(handler=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("dataset", help="dataset root (violent/ and nonviolent/ subdirectories)")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--out", default="runs", help="parent directory for run outputs (default: runs)")
    p.add_argument("--run-name", default=None, help="run subdirectory name (default: time-stamped)")
    p.add_argument("--batch-size", type=int, default=None, help="batch size (default: 32)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default: 100)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default: 0.0001)")
    p.add_argument("--weight-decay", type=float, default=None, help="decoupled weight decay (default: 0.00001)")
    p.add_argument("--split", type=float, default=None, help="train fraction of the 60-40 style split (default: 0.6)")
    p.add_argument("--patch", type=_tuple_arg(3, int), default=None, help="tubelet t,w,h (default: 8,8,8)")
    p.add_argument("--embed-dim", type=int, default=None, help="token projection dimension (default: 128)")
    p.add_argument("--heads", type=int, default=None, help="attention heads (default: 8)")
    p.add_argument("--layers", type=int, default=None, help="encoder layers (default: 8)")
    p.add_argument("--mlp-ratio", type=int, default=None, help="MLP hidden width multiplier (default: 4)")
    p.add_argument("--frames", type=int, default=None, help="frames per clip (default: 56)")
    p.add_argument("--size", type=int, default=None, help="frame height and width (default: 64)")
    p.add_argument("--channels", type=int, default=None, help="channels per pixel (default: 3)")
    p.add_argument("--head", choices=[HEAD_LINEAR, HEAD_TANH_HIDDEN], default=None,
                   help="classification head variant (default: linear)")
    p.add_argument("--attention-scale", choices=[SCALE_PER_HEAD, SCALE_FULL_DIM], default=None,
                   help="attention score scaling dimension (default: per_head)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $VIVIDET_SEED or 0)")
    p.add_argument("--workers", type=int, default=None, help="augmentation worker threads; 1 = fully deterministic (default: 1)")
    p.add_argument("--no-augment", action="store_true", help="disable online augmentation")
    p.add_argument("--blur-sigma", type=_tuple_arg(2, float), default=None, help="blur sigma range (default: 0.5,1.5)")
    p.add_argument("--rotation", type=_tuple_arg(2, float), default=None, help="rotation range in degrees (default: -15,15)")
    p.add_argument("--h-flip-prob", type=float, default=None, help="horizontal flip probability (default: 0.5)")
    p.add_argument("--v-flip-prob", type=float, default=None, help="vertical flip probability (default: 0.0)")
    p.add_argument("--perturb", type=float, default=None, help="uniform noise amplitude (default: 0.05)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint", help="model checkpoint (.vvdt)")
    p.add_argument("dataset", help="dataset root")
    p.add_argument("--out", default=None, help="base path for report files (writes .txt and .json)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="classify a single clip")
    p.add_argument("checkpoint", help="model checkpoint (.vvdt)")
    p.add_argument("clip", help="clip file (.vclip)")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("augment-preview", help="apply the augmentation pipeline to one clip")
    p.add_argument("clip", help="input clip (.vclip)")
    p.add_argument("--out", required=True, help="output clip path")
    p.add_argument("--dump-frames", default=None, help="directory for per-frame PNG dumps")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $VIVIDET_SEED or 0)")
    p.add_argument("--blur-sigma", type=_tuple_arg(2, float), default=(0.5, 1.5), help="blur sigma range (default: 0.5,1.5)")
    p.add_argument("--rotation", type=_tuple_arg(2, float), default=(-15.0, 15.0), help="rotation range in degrees (default: -15,15)")
    p.add_argument("--h-flip-prob", type=float, default=0.5, help="horizontal flip probability (default: 0.5)")
    p.add_argument("--v-flip-prob", type=float, default=0.0, help="vertical flip probability (default: 0.0)")
    p.add_argument("--perturb", type=float, default=0.05, help="uniform noise amplitude (default: 0.05)")
    p.add_argument("--identity", action="store_true", help="apply the identity spec (no transform)")
    p.set_defaults(handler=cmd_augment_preview)

    p = sub.add_parser("gradcheck", help="finite-difference check of the tiny model's gradients")
    p.add_argument("--tol", type=float, default=1e-3, help="maximum relative error allowed (default: 0.001)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $VIVIDET_SEED or 0)")
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def _resolve_seed(flag_value, file_values: dict | None = None) -> int:
    if flag_value is not None:
        return flag_value
    if file_values and "seed" in file_values:
        return int(file_values["seed"])
    env = os.environ.get("VIVIDET_SEED")
    return int(env) if env else 0


def cmd_gen_synthetic(args) -> int:
    spec = synthetic.SyntheticSpec(
        clips_per_class=args.clips_per_class,
        frame_count=args.frames,
        height=args.size,
        width=args.size,
        channels=args.channels,
        motion_gap=args.motion_gap,
        seed=_resolve_seed(args.seed),
    )
    clips = synthetic.generate_synthetic(spec)
    root = clipio.save_dataset(clips, args.out)
    stats = synthetic.class_motion_stats(clips)
    print(f"wrote {len(clips)} clips under {root}")
    print(
        "mean inter-frame difference: violent={violent:.5f} nonviolent={nonviolent:.5f}".format(**stats)
    )
    return 0


def _resolve(args, file_values: dict, key: str, flag_name: str | None = None):
    flag = getattr(args, flag_name or key, None)
    if flag is not None:
        return flag
    if key in file_values:
        return file_values[key]
    return TRAIN_DEFAULTS[key]


def _train_setup(args):
    file_values = load_flat(args.config) if args.config else {}
    unknown = set(file_values) - set(TRAIN_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    r = lambda key, flag=None: _resolve(args, file_values, key, flag)
    seed = _resolve_seed(args.seed, file_values)
    frames, size, channels = r("frames"), r("size"), r("channels")
    model_config = ModelConfig(
        tubelet=tuple(r("patch")),
        embed_dim=r("embed_dim"),
        heads=r("heads"),
        layers=r("layers"),
        mlp_ratio=r("mlp_ratio"),
        classes=TRAIN_DEFAULTS["classes"],
        input_shape=(frames, size, size, channels),
        head_variant=r("head_variant", "head"),
        attention_scale=r("attention_scale"),
    )
    augment_on = bool(r("augment")) and not args.no_augment
    augment = (
        AugmentSpec(
            blur_sigma_range=tuple(r("blur_sigma")),
            rotation_range_deg=tuple(r("rotation")),
            h_flip_prob=r("h_flip_prob"),
            v_flip_prob=r("v_flip_prob"),
            perturb_amplitude=r("perturb"),
            seed=seed,
        )
        if augment_on
        else None
    )
    train_config = training.TrainConfig(
        batch_size=r("batch_size"),
        epochs=r("epochs"),
        learning_rate=r("learning_rate", "lr"),
        weight_decay=r("weight_decay"),
        split_fraction=r("split_fraction", "split"),
        seed=seed,
        augment=augment,
        workers=r("workers"),
    )
    snapshot = {
        "batch_size": train_config.batch_size,
        "epochs": train_config.epochs,
        "learning_rate": train_config.learning_rate,
        "weight_decay": train_config.weight_decay,
        "split_fraction": train_config.split_fraction,
        "patch": model_config.tubelet,
        "embed_dim": model_config.embed_dim,
        "heads": model_config.heads,
        "layers": model_config.layers,
        "mlp_ratio": model_config.mlp_ratio,
        "classes": model_config.classes,
        "frames": frames,
        "size": size,
        "channels": channels,
        "head_variant": model_config.head_variant,
        "attention_scale": model_config.attention_scale,
        "seed": seed,
        "workers": train_config.workers,
        "augment": augment_on,
        "blur_sigma": tuple(r("blur_sigma")),
        "rotation": tuple(r("rotation")),
        "h_flip_prob": r("h_flip_prob"),
        "v_flip_prob": r("v_flip_prob"),
        "perturb": r("perturb"),
    }
    return model_config, train_config, snapshot


def cmd_train(args) -> int:
    model_config, train_config, snapshot = _train_setup(args)
    run_name = args.run_name or time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(args.out) / run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(format_flat(snapshot))

    dataset = clipio.load_dataset(
        args.dataset,
        frame_count=model_config.input_shape[0],
        size=model_config.input_shape[1],
        channels=model_config.input_shape[3],
    )
    print(f"loaded {len(dataset)} clips from {args.dataset}")

    def log(stats):
        if train_config.log_every and stats.epoch % train_config.log_every == 0:
            print(
                f"epoch {stats.epoch:3d}  train_loss={stats.train_loss:.4f} train_acc={stats.train_acc:.4f}"
                f"  val_loss={stats.val_loss:.4f} val_acc={stats.val_acc:.4f}"
            )

    result = training.train(model_config, dataset, train_config, callbacks=[log])

    save_model(run_dir / "best.vvdt", result.best_params, model_config)
    save_model(run_dir / "final.vvdt", result.params, model_config)
    training.export_history(result.history, run_dir / "history.csv")

    _, val_clips = training.split_stratified(dataset, train_config.split_fraction, train_config.seed)
    report = metrics.evaluate(result.best_params, val_clips, model_config)
    metrics.export_report(report, run_dir / "report")
    print(metrics.render_report(report), end="")
    print(f"artifacts written to {run_dir}")
    return 0


def cmd_eval(args) -> int:
    params, config = load_model(args.checkpoint)
    dataset = clipio.load_dataset(
        args.dataset,
        frame_count=config.input_shape[0],
        size=config.input_shape[1],
        channels=config.input_shape[3],
    )
    report = metrics.evaluate(params, dataset, config)
    print(metrics.render_report(report), end="")
    if args.out:
        txt, js = metrics.export_report(report, args.out)
        print(f"report written to {txt} and {js}")
    return 0


def cmd_predict(args) -> int:
    from .model import classify

    params, config = load_model(args.checkpoint)
    clip = clipio.read_clip(args.clip)
    probs = classify(clip, params, config)
    label = "violent" if int(np.argmax(probs)) == 0 else "nonviolent"
    print(f"prediction: {label} (p_violent={probs[0]:.4f}, p_nonviolent={probs[1]:.4f})")
    print(f"label={label} p_violent={probs[0]:.4f}")
    return 0


def cmd_augment_preview(args) -> int:
    clip = clipio.read_clip(args.clip)
    seed = _resolve_seed(args.seed)
    if args.identity:
        spec = AugmentSpec.identity(seed)
    else:
        spec = AugmentSpec(
            blur_sigma_range=tuple(args.blur_sigma),
            rotation_range_deg=tuple(args.rotation),
            h_flip_prob=args.h_flip_prob,
            v_flip_prob=args.v_flip_prob,
            perturb_amplitude=args.perturb,
            seed=seed,
        )
    from .video import augment_clip

    augmented = augment_clip(clip, spec)
    clipio.write_clip(augmented, args.out)
    print(f"augmented clip written to {args.out}")
    if args.dump_frames:
        from PIL import Image

        dump = Path(args.dump_frames)
        dump.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(augmented.frames):
            arr = np.clip(frame * 255.0, 0, 255).astype(np.uint8)
            img = Image.fromarray(arr[:, :, 0], mode="L") if arr.shape[2] == 1 else Image.fromarray(arr, mode="RGB")
            img.save(dump / f"frame_{i:04d}.png")
        print(f"dumped {len(augmented.frames)} frames to {dump}")
    return 0


def cmd_gradcheck(args) -> int:
    from .tensor import backward, concat, cross_entropy_with_logits  # noqa: F401
    from .model import forward_logits

    seed = _resolve_seed(args.seed)
    config = ModelConfig(
        tubelet=(4, 8, 8),
        embed_dim=16,
        heads=2,
        layers=2,
        mlp_ratio=4,
        classes=2,
        input_shape=(8, 16, 16, 1),
    )
    params = init_params(config, seed, dtype=np.float64)
    rng = make_rng(seed, "gradcheck-clips")
    clips = [rng.random(config.input_shape) for _ in range(2)]
    labels = np.array([0, 1])

    def loss_fn():
        rows = [forward_logits(c, params, config) for c in clips]
        return cross_entropy_with_logits(concat(rows, axis=0), labels)

    err = check_gradients(loss_fn, params.all(), step=1e-4, max_coords_per_tensor=40, seed=seed)
    print(f"max relative error: {err:.3e} (tolerance {args.tol:.1e})")
    if err <= args.tol:
        print("gradcheck PASS")
        return 0
    print("gradcheck FAIL")
    return 4


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, ShapeError, VividetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
