"""Spatio-temporal video transformer with tubelet tokens.

Forward structure: non-overlapping t x w x h voxel blocks are flattened and
linearly projected to D-dimensional tokens; a learned CLS token is prepended
and a learned positional embedding added (self-attention alone is
permutation invariant, the positional table is what breaks that); L pre-norm
encoder blocks apply multi-head self-attention and a GeLU MLP, each inside a
residual skip; the classification head reads only the final CLS row and a
softmax yields the class distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .errors import FormatError, ShapeError
from .rng import make_rng, truncated_normal
from .tensor import (
    Tensor,
    add,
    concat,
    gelu,
    layer_norm,
    matmul,
    mul,
    narrow,
    softmax,
    tanh_act,
    transpose,
)
from .video import VideoClip

LN_EPS = 1e-5

HEAD_LINEAR = "linear"
HEAD_TANH_HIDDEN = "tanh_hidden"
SCALE_PER_HEAD = "per_head"
SCALE_FULL_DIM = "full_dim"


@dataclass
class ModelConfig:
    """Architecture hyperparameters. Defaults follow the tuned values:
    patch (8,8,8), projection 128, 8 heads, 8 layers, 2 classes, clips of
    56 frames at 64x64x3."""

    tubelet: tuple = (8, 8, 8)  # (t, w, h)
    embed_dim: int = 128
    heads: int = 8
    layers: int = 8
    mlp_ratio: int = 4
    classes: int = 2
    input_shape: tuple = (56, 64, 64, 3)  # (T, H, W, C)
    head_variant: str = HEAD_LINEAR
    attention_scale: str = SCALE_PER_HEAD

    def __post_init__(self):
        self.tubelet = tuple(int(v) for v in self.tubelet)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if len(self.tubelet) != 3 or any(v < 1 for v in self.tubelet):
            raise ValueError(f"tubelet must be three positive sizes, got {self.tubelet}")
        if len(self.input_shape) != 4 or any(v < 1 for v in self.input_shape):
            raise ValueError(f"input_shape must be (T, H, W, C), got {self.input_shape}")
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if self.head_variant not in (HEAD_LINEAR, HEAD_TANH_HIDDEN):
            raise ValueError(f"unknown head_variant {self.head_variant!r}")
        if self.attention_scale not in (SCALE_PER_HEAD, SCALE_FULL_DIM):
            raise ValueError(f"unknown attention_scale {self.attention_scale!r}")
        tubelet_grid(self.input_shape, self.tubelet)  # raises if a tubelet dim exceeds input

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def token_count(self) -> int:
        n_t, n_w, n_h = tubelet_grid(self.input_shape, self.tubelet)
        return n_t * n_w * n_h

    @property
    def voxels_per_tubelet(self) -> int:
        t, w, h = self.tubelet
        return t * w * h * self.input_shape[3]


def tubelet_grid(input_shape, tubelet) -> tuple:
    """(n_t, n_w, n_h) = floor(T/t), floor(W/w), floor(H/h); remainder voxels
    beyond the last full tubelet are discarded."""
    t_dim, h_dim, w_dim, _ = input_shape
    t, w, h = tubelet
    if t > t_dim or w > w_dim or h > h_dim:
        raise ShapeError(f"tubelet {tubelet} exceeds input {input_shape}")
    return (t_dim // t, w_dim // w, h_dim // h)


def tubelet_tokens(frames: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Rearrange a (T, H, W, C) clip into the (N, t*w*h*C) token matrix.

    Each voxel block is flattened in (time, height, width, channel) order;
    tokens are ordered time-major, then height, then width.
    """
    if frames.shape != config.input_shape:
        raise ShapeError(f"clip shape {frames.shape} does not match configured {config.input_shape}")
    t, w, h = config.tubelet
    n_t, n_w, n_h = tubelet_grid(config.input_shape, config.tubelet)
    c = config.input_shape[3]
    cropped = frames[: n_t * t, : n_h * h, : n_w * w, :]
    blocks = cropped.reshape(n_t, t, n_h, h, n_w, w, c)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5, 6)  # (n_t, n_h, n_w, t, h, w, c)
    return np.ascontiguousarray(blocks.reshape(n_t * n_h * n_w, t * h * w * c))


class ModelParams:
    """All learnable tensors, keyed by their canonical checkpoint names."""

    def __init__(self, tensors: dict):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list:
        return list(self.tensors)

    def all(self) -> list:
        return list(self.tensors.values())

    def layer(self, i: int) -> dict:
        """Short-keyed view of one encoder block's tensors."""
        prefix = f"layer.{i}."
        return {
            name[len(prefix) :].replace(".", "_"): t
            for name, t in self.tensors.items()
            if name.startswith(prefix)
        }

    def clone(self) -> "ModelParams":
        return ModelParams({k: t.copy() for k, t in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            {k: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad) for k, t in self.tensors.items()}
        )

    @property
    def total_size(self) -> int:
        return sum(t.size for t in self.tensors.values())


def param_shapes(config: ModelConfig) -> dict:
    """Canonical name -> (shape, init kind) for every learnable tensor.

    Kinds: "normal" tensors are drawn from a truncated normal (std 0.02),
    "zeros" start at zero, "ones" at one (layer-norm gains).
    """
    d = config.embed_dim
    p = config.voxels_per_tubelet
    n = config.token_count
    r = config.mlp_ratio
    k = config.classes
    shapes: dict = {
        "embed.weight": ((p, d), "normal"),
        "embed.bias": ((d,), "zeros"),
        "cls_token": ((1, d), "zeros"),
        "pos_embed": ((n + 1, d), "normal"),
    }
    for i in range(config.layers):
        shapes[f"layer.{i}.ln1.gain"] = ((d,), "ones")
        shapes[f"layer.{i}.ln1.bias"] = ((d,), "zeros")
        shapes[f"layer.{i}.msa.w_q"] = ((d, d), "normal")
        shapes[f"layer.{i}.msa.w_k"] = ((d, d), "normal")
        shapes[f"layer.{i}.msa.w_v"] = ((d, d), "normal")
        shapes[f"layer.{i}.msa.w_o"] = ((d, d), "normal")
        shapes[f"layer.{i}.ln2.gain"] = ((d,), "ones")
        shapes[f"layer.{i}.ln2.bias"] = ((d,), "zeros")
        shapes[f"layer.{i}.mlp.w1"] = ((d, r * d), "normal")
        shapes[f"layer.{i}.mlp.b1"] = ((r * d,), "zeros")
        shapes[f"layer.{i}.mlp.w2"] = ((r * d, d), "normal")
        shapes[f"layer.{i}.mlp.b2"] = ((d,), "zeros")
    if config.head_variant == HEAD_TANH_HIDDEN:
        shapes["head.hidden.weight"] = ((d, d), "normal")
        shapes["head.hidden.bias"] = ((d,), "zeros")
    shapes["head.out.weight"] = ((d, k), "normal")
    shapes["head.out.bias"] = ((k,), "zeros")
    return shapes


def param_count(config: ModelConfig) -> int:
    """Closed-form learnable parameter count.

    With P = t*w*h*C voxels per tubelet, N tokens, D = embed_dim,
    r = mlp_ratio and K classes:

        embed     P*D + D
        cls/pos   D + (N+1)*D
        per layer 4*D^2 + 4*D + 2*r*D^2 + r*D + D
        head      D*K + K          (linear)
                  D^2 + D + D*K + K (tanh hidden)
    """
    return sum(int(np.prod(shape)) for shape, _ in param_shapes(config).values())


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Fresh parameters: truncated normal (std 0.02) dense weights and
    positional table, zero biases and CLS token, unit layer-norm gains.
    Deterministic per (config, seed); tensors are created in canonical order
    from a single PCG64 stream."""
    rng = make_rng(seed, "init")
    tensors = {}
    for name, (shape, kind) in param_shapes(config).items():
        if kind == "normal":
            data = truncated_normal(rng, shape, std=0.02, dtype=dtype)
        elif kind == "ones":
            data = np.ones(shape, dtype=dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(tensors)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def tubelet_embed(clip, params: ModelParams, config: ModelConfig) -> Tensor:
    """Project every tubelet's flattened voxels to a D-vector: X @ W + b."""
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    weight = params["embed.weight"]
    x = Tensor(tubelet_tokens(frames, config).astype(weight.dtype))
    return add(matmul(x, weight), params["embed.bias"])


def assemble_sequence(tokens: Tensor, params: ModelParams) -> Tensor:
    """Prepend the CLS token and add the positional table to all N+1 rows."""
    pos = params["pos_embed"]
    if pos.shape[0] != tokens.shape[0] + 1:
        raise ShapeError(f"positional table has {pos.shape[0]} rows, need {tokens.shape[0] + 1}")
    return add(concat([params["cls_token"], tokens], axis=0), pos)


def self_attention_head(y: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor, config: ModelConfig, sink=None) -> Tensor:
    """One scaled dot-product attention head.

    Q = yW_q, K = yW_k, V = yW_v; rows of softmax(QK^T / sqrt(s)) are the
    attention weights; s is the head width (default) or the full embed dim
    when config.attention_scale selects the paper-literal variant.
    """
    q = matmul(y, w_q)
    k = matmul(y, w_k)
    v = matmul(y, w_v)
    s = config.embed_dim if config.attention_scale == SCALE_FULL_DIM else w_q.shape[1]
    scores = mul(matmul(q, transpose(k)), 1.0 / np.sqrt(float(s)))
    attn = softmax(scores, axis=-1)
    if sink is not None:
        sink.append(attn.data.copy())
    return matmul(attn, v)


def msa(y: Tensor, layer_params: dict, config: ModelConfig, sink=None) -> Tensor:
    """Multi-head self-attention: heads use disjoint contiguous column blocks
    of W_q/W_k/W_v (head order), outputs are concatenated and projected."""
    dh = config.head_dim
    heads = []
    for i in range(config.heads):
        w_q = narrow(layer_params["msa_w_q"], 1, i * dh, dh)
        w_k = narrow(layer_params["msa_w_k"], 1, i * dh, dh)
        w_v = narrow(layer_params["msa_w_v"], 1, i * dh, dh)
        heads.append(self_attention_head(y, w_q, w_k, w_v, config, sink=sink))
    return matmul(concat(heads, axis=1), layer_params["msa_w_o"])


def _mlp(y: Tensor, layer_params: dict) -> Tensor:
    hidden = gelu(add(matmul(y, layer_params["mlp_w1"]), layer_params["mlp_b1"]))
    return add(matmul(hidden, layer_params["mlp_w2"]), layer_params["mlp_b2"])


def encoder_block(y: Tensor, layer_params: dict, config: ModelConfig, sink=None) -> Tensor:
    """Pre-norm residual block: y + MSA(LN(y)), then (.) + MLP(LN(.))."""
    normed = layer_norm(y, layer_params["ln1_gain"], layer_params["ln1_bias"], LN_EPS)
    y = add(y, msa(normed, layer_params, config, sink=sink))
    normed = layer_norm(y, layer_params["ln2_gain"], layer_params["ln2_bias"], LN_EPS)
    return add(y, _mlp(normed, layer_params))


def encode(clip, params: ModelParams, config: ModelConfig, sink=None) -> Tensor:
    """Full encoder: tubelet embedding, CLS + positions, L blocks.
    Returns the final (N+1) x D sequence; `sink`, when given, collects every
    attention matrix (layer-major, head order within a layer)."""
    y = assemble_sequence(tubelet_embed(clip, params, config), params)
    for i in range(config.layers):
        y = encoder_block(y, params.layer(i), config, sink=sink)
    return y


def head_logits(c0: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    """Classification head over the final CLS row (1 x D) -> (1 x classes)."""
    if config.head_variant == HEAD_TANH_HIDDEN:
        c0 = tanh_act(add(matmul(c0, params["head.hidden.weight"]), params["head.hidden.bias"]))
    return add(matmul(c0, params["head.out.weight"]), params["head.out.bias"])


def forward_logits(clip, params: ModelParams, config: ModelConfig, sink=None) -> Tensor:
    """Logits for one clip; only row 0 (CLS) of the encoder output feeds the head."""
    final = encode(clip, params, config, sink=sink)
    return head_logits(narrow(final, 0, 0, 1), params, config)


def classify(clip, params: ModelParams, config: ModelConfig, sink=None) -> np.ndarray:
    """Class probability vector (violent, non-violent); sums to 1."""
    logits = forward_logits(clip, params, config, sink=sink)
    return softmax(logits, axis=-1).data.reshape(-1).copy()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def config_to_manifest(config: ModelConfig) -> str:
    lines = [
        f"tubelet = ({config.tubelet[0]}, {config.tubelet[1]}, {config.tubelet[2]})",
        f"embed_dim = {config.embed_dim}",
        f"heads = {config.heads}",
        f"layers = {config.layers}",
        f"mlp_ratio = {config.mlp_ratio}",
        f"classes = {config.classes}",
        "input_shape = ({}, {}, {}, {})".format(*config.input_shape),
        f"head_variant = {config.head_variant}",
        f"attention_scale = {config.attention_scale}",
    ]
    return "\n".join(lines) + "\n"


def config_from_manifest(text: str) -> ModelConfig:
    from .config import parse_flat

    values = parse_flat(text)
    try:
        return ModelConfig(
            tubelet=values["tubelet"],
            embed_dim=values["embed_dim"],
            heads=values["heads"],
            layers=values["layers"],
            mlp_ratio=values["mlp_ratio"],
            classes=values["classes"],
            input_shape=values["input_shape"],
            head_variant=values["head_variant"],
            attention_scale=values["attention_scale"],
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint manifest invalid: {exc}") from exc


def save_model(path, params: ModelParams, config: ModelConfig) -> None:
    checkpoint.write_tensors(path, params.tensors, manifest=config_to_manifest(config))


def load_model(path) -> tuple:
    """Read a model checkpoint; returns (params, config). The manifest makes
    the file self-describing, and every tensor is validated against the
    shapes the config implies."""
    tensors, manifest = checkpoint.read_tensors(path)
    if manifest is None:
        raise FormatError(f"{path}: checkpoint has no config manifest")
    config = config_from_manifest(manifest)
    expected = param_shapes(config)
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise FormatError(f"{path}: tensor names do not match config (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, (shape, _) in expected.items():
        if tensors[name].shape != shape:
            raise FormatError(f"{path}: tensor {name} has shape {tensors[name].shape}, config implies {shape}")
    params = ModelParams({name: Tensor(tensors[name].data, requires_grad=True) for name in expected})
    return params, config
