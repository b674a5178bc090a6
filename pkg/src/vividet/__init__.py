"""Violence detection in video with a tubelet-token video transformer.

The package is organized as:

    tensor      dense tensors + reverse-mode autodiff (matmul, softmax,
                layer norm, GeLU, tanh, gradient checking)
    video       frame preprocessing and seeded clip-consistent augmentation
    synthetic   desk-scale moving-blob dataset with a controllable margin
    clipio      .vclip container, frame-directory ingestion, dataset layout
    model       tubelet embedding, CLS/positional tokens, pre-norm encoder
                blocks with multi-head self-attention, classification head
    training    cross-entropy, AdamW, stratified split, epoch loop
    metrics     confusion matrix, per-class precision/recall/F1 report
    cli         gen-synthetic / train / eval / predict / augment-preview /
                gradcheck subcommands
"""

from .checkpoint import read_tensors, write_tensors
from .clipio import expand_dataset, load_dataset, load_frame_dir, read_clip, save_dataset, write_clip
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    NumericsError,
    ShapeError,
    TapeError,
    VividetError,
)
from .metrics import EvalReport, evaluate, export_report, render_report, report_from_confusion
from .model import (
    ModelConfig,
    ModelParams,
    assemble_sequence,
    classify,
    encode,
    encoder_block,
    forward_logits,
    head_logits,
    init_params,
    load_model,
    msa,
    param_count,
    save_model,
    self_attention_head,
    tubelet_embed,
    tubelet_grid,
)
from .synthetic import SyntheticSpec, class_motion_stats, generate_synthetic, mean_interframe_diff
from .tensor import (
    GradTape,
    Tensor,
    backward,
    check_gradients,
    gelu,
    layer_norm,
    matmul,
    softmax,
    tanh_act,
)
from .training import AdamW, TrainConfig, TrainResult, cross_entropy, export_history, load_history, split_stratified, train
from .video import (
    AugmentSpec,
    Label,
    VideoClip,
    augment_clip,
    flip,
    gaussian_blur,
    perturb_uniform,
    resize_letterbox,
    rotate,
    sample_frames,
)

__version__ = "0.1.0"
