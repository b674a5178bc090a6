"""Supervised training: loss, optimizer, stratified split, epoch loop.

The loop is deterministic for a fixed seed in single-worker mode: dataset
split, per-epoch shuffles, parameter init and per-clip augmentation all
derive from named PCG64 streams, and batches are processed in order by a
single logical writer over the parameters.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, ShapeError
from .model import ModelConfig, ModelParams, forward_logits, init_params
from .rng import make_rng, stable_hash64
from .tensor import GradTape, Tensor, backward, concat, cross_entropy_with_logits
from .video import AugmentSpec, VideoClip, augment_clip


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of `labels` under softmax(logits),
    evaluated through log-sum-exp so large scores cannot overflow."""
    return cross_entropy_with_logits(logits, labels)


class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay.

    Per step: the decay `p *= 1 - lr*wd` is applied first, then the
    bias-corrected moment update `p -= lr * m_hat / (sqrt(v_hat) + eps)`
    with beta1=0.9, beta2=0.999, eps=1e-8. Updates mutate parameters in
    place and are deterministic.
    """

    def __init__(self, params, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: dict) -> None:
        missing = [p for p in self.params if p not in grads]
        if missing:
            raise KeyError(f"gradient missing for {len(missing)} parameter tensor(s)")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            g = grads[p].data
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are the tuned values (batch 32,
    100 epochs, lr 1e-4, weight decay 1e-5, 60/40 train/validation)."""

    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    split_fraction: float = 0.6
    seed: int = 0
    augment: AugmentSpec | None = field(default_factory=AugmentSpec)
    log_every: int = 1
    workers: int = 1
    lr_schedule: Callable | None = None  # (epoch, base_lr) -> lr; None = constant

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be strictly between 0 and 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    params: ModelParams          # final parameters
    best_params: ModelParams     # highest validation accuracy (ties: lowest val loss)
    best_epoch: int
    history: list


def split_stratified(dataset: list, split_fraction: float, seed: int) -> tuple:
    """Seeded class-stratified split into (train, validation) lists."""
    by_class: dict[int, list] = {}
    for clip in dataset:
        by_class.setdefault(clip.label.class_index, []).append(clip)
    rng = make_rng(seed, "split")
    train: list = []
    val: list = []
    for class_index in sorted(by_class):
        members = by_class[class_index]
        order = rng.permutation(len(members))
        n_train = round(split_fraction * len(members))
        for rank, idx in enumerate(order):
            (train if rank < n_train else val).append(members[idx])
    return train, val


def _epoch_augment_spec(base: AugmentSpec, epoch: int) -> AugmentSpec:
    # vary augmentation across epochs while keeping augment_clip a pure
    # function of (clip, spec)
    return base.with_seed(base.seed ^ stable_hash64(f"epoch-{epoch}"))


def _batch_logits(clips, labels, params, config) -> tuple:
    rows = [forward_logits(clip, params, config) for clip in clips]
    logits = concat(rows, axis=0)
    loss = cross_entropy_with_logits(logits, labels)
    return logits, loss


def _eval_split(clips, labels, params, config) -> tuple:
    if not clips:
        return float("nan"), float("nan")
    rows = [forward_logits(clip, params, config) for clip in clips]
    logits = concat(rows, axis=0)
    loss = float(cross_entropy_with_logits(logits, labels).item())
    acc = float(np.mean(np.argmax(logits.data, axis=1) == labels))
    return loss, acc


def train(model_config: ModelConfig, dataset: list, config: TrainConfig, callbacks=None) -> TrainResult:
    """Run the full loop and return final params, best checkpoint and the
    per-epoch learning curves.

    Per epoch: seeded shuffle of the train split, online augmentation (one
    derived seed per (clip, epoch)), batched forward/loss/backward/update.
    A non-finite loss aborts with DivergenceError.
    """
    train_clips, val_clips = split_stratified(dataset, config.split_fraction, config.seed)
    if not train_clips or not val_clips:
        raise ValueError(f"split produced {len(train_clips)} train / {len(val_clips)} val clips; need both non-empty")
    if len({c.label.class_index for c in train_clips}) < 2:
        raise ValueError("training split does not contain both classes")

    for clip in dataset:
        if clip.frames.shape != model_config.input_shape:
            raise ShapeError(
                f"clip {clip.source_id!r} shape {clip.frames.shape} does not match model input {model_config.input_shape}"
            )

    params = init_params(model_config, config.seed)
    param_list = params.all()
    optimizer = AdamW(param_list, lr=config.learning_rate, weight_decay=config.weight_decay)
    val_labels = np.array([c.label.class_index for c in val_clips])

    history: list[EpochStats] = []
    best = None  # (val_acc, -val_loss, epoch, snapshot)
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(config.epochs):
            if config.lr_schedule is not None:
                optimizer.lr = config.lr_schedule(epoch, config.learning_rate)
            order = make_rng(config.seed, "shuffle", epoch).permutation(len(train_clips))
            epoch_spec = _epoch_augment_spec(config.augment, epoch) if config.augment else None

            total_loss = 0.0
            total_correct = 0
            for start in range(0, len(order), config.batch_size):
                batch_idx = order[start : start + config.batch_size]
                batch = [train_clips[i] for i in batch_idx]
                if epoch_spec is not None:
                    if pool is not None:
                        batch = list(pool.map(lambda c: augment_clip(c, epoch_spec), batch))
                    else:
                        batch = [augment_clip(c, epoch_spec) for c in batch]
                labels = np.array([c.label.class_index for c in batch])

                with GradTape() as tape:
                    logits, loss = _batch_logits(batch, labels, params, model_config)
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    raise DivergenceError(f"non-finite loss {loss_value} at epoch {epoch}, batch {start // config.batch_size}")
                grads = backward(tape, loss, params=param_list)
                optimizer.step(grads)

                total_loss += loss_value * len(batch)
                total_correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))

            train_loss = total_loss / len(train_clips)
            train_acc = total_correct / len(train_clips)
            val_loss, val_acc = _eval_split(val_clips, val_labels, params, model_config)
            stats = EpochStats(epoch, train_loss, train_acc, val_loss, val_acc)
            history.append(stats)
            if callbacks:
                for cb in callbacks:
                    cb(stats)
            key = (val_acc, -val_loss)
            if best is None or key > best[0]:
                best = (key, epoch, params.clone())
    finally:
        if pool is not None:
            pool.shutdown()

    if best is None:
        best_params, best_epoch = params.clone(), -1
    else:
        _, best_epoch, best_params = best
    return TrainResult(params=params, best_params=best_params, best_epoch=best_epoch, history=history)


# ---------------------------------------------------------------------------
# history export
# ---------------------------------------------------------------------------

_HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def export_history(history: list, path) -> None:
    """Per-epoch learning curves as CSV (header + one row per epoch).
    Floats are written with repr so the file round-trips losslessly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_FIELDS)
        for stats in history:
            writer.writerow(
                [stats.epoch, repr(stats.train_loss), repr(stats.train_acc), repr(stats.val_loss), repr(stats.val_acc)]
            )


def load_history(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _HISTORY_FIELDS:
            raise ValueError(f"unexpected history header {header}")
        return [
            EpochStats(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            for row in reader
        ]
