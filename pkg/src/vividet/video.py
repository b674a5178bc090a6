"""Frame-stack preprocessing and seeded, clip-consistent augmentation.

Frames are float32 arrays with values in [0, 1]; a clip is a (T, H, W, C)
stack. Every transform here is a pure function, and augment_clip draws one
parameter set per clip so all frames of a clip receive the same transform
(per-frame resampling would scramble the temporal signal the model embeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .rng import make_rng, mix_seed


class Label(Enum):
    """Clip label. `class_index` orders classes as (violent, non-violent),
    which is also the report row order; `file_byte` is the .vclip wire value."""

    VIOLENT = 0
    NONVIOLENT = 1
    UNLABELED = 2

    @property
    def class_index(self) -> int:
        if self is Label.UNLABELED:
            raise ValueError("unlabeled clip has no class index")
        return self.value

    @property
    def file_byte(self) -> int:
        return {Label.VIOLENT: 1, Label.NONVIOLENT: 0, Label.UNLABELED: 255}[self]

    @staticmethod
    def from_file_byte(b: int) -> "Label":
        try:
            return {1: Label.VIOLENT, 0: Label.NONVIOLENT, 255: Label.UNLABELED}[b]
        except KeyError:
            raise ValueError(f"invalid label byte {b}") from None

    @staticmethod
    def from_class_index(i: int) -> "Label":
        return (Label.VIOLENT, Label.NONVIOLENT)[i]


@dataclass
class VideoClip:
    """A (T, H, W, C) stack of [0, 1] pixel intensities plus metadata."""

    frames: np.ndarray
    label: Label = Label.UNLABELED
    source_id: str = ""

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4:
            raise ValueError(f"clip frames must be (T, H, W, C), got {self.frames.shape}")

    @property
    def shape(self) -> tuple:
        return self.frames.shape

    def validate_range(self) -> None:
        lo, hi = float(self.frames.min()), float(self.frames.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"clip {self.source_id!r} pixels outside [0,1]: [{lo}, {hi}]")


def sample_frames(frames: np.ndarray, target: int) -> np.ndarray:
    """Pick `target` frames: uniform floor-spaced indices when enough frames
    exist, otherwise all frames followed by copies of the last one."""
    f = len(frames)
    if f == 0:
        raise ValueError("empty frame sequence")
    if target < 1:
        raise ValueError(f"target frame count must be >= 1, got {target}")
    if f >= target:
        idx = (np.arange(target) * f) // target
    else:
        idx = np.concatenate([np.arange(f), np.full(target - f, f - 1)])
    return np.ascontiguousarray(np.asarray(frames)[idx])


def _bilinear_resize(frame: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = frame.shape[:2]
    if (out_h, out_w) == (h, w):
        return frame.copy()
    r = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    c = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0).astype(np.float32)[:, None, None]
    fc = (c - c0).astype(np.float32)[None, :, None]
    top = frame[np.ix_(r0, c0)] * (1 - fc) + frame[np.ix_(r0, c1)] * fc
    bot = frame[np.ix_(r1, c0)] * (1 - fc) + frame[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def resize_letterbox(frame: np.ndarray, size: int) -> np.ndarray:
    """Scale by min(size/H, size/W) keeping the aspect ratio exactly, and
    center the content on a black size x size canvas."""
    if size < 8:
        raise ValueError(f"target size must be >= 8, got {size}")
    h, w = frame.shape[:2]
    scale = min(size / h, size / w)
    if scale == 1.0 and h == w == size:
        return frame.astype(np.float32, copy=True)
    new_h = max(1, round(h * scale))
    new_w = max(1, round(w * scale))
    content = _bilinear_resize(frame.astype(np.float32), new_h, new_w)
    canvas = np.zeros((size, size, frame.shape[2]), dtype=np.float32)
    top = (size - new_h) // 2
    left = (size - new_w) // 2
    canvas[top : top + new_h, left : left + new_w] = content
    return np.clip(canvas, 0.0, 1.0)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma * sigma))
    return (k / k.sum()).astype(np.float32)


def gaussian_blur(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), normalized to
    sum 1, edges clamped to the border pixel."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kernel = _gaussian_kernel(sigma)
    radius = len(kernel) // 2
    out = frame.astype(np.float32)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        acc = np.zeros_like(out)
        for tap, weight in enumerate(kernel):
            index = [slice(None)] * out.ndim
            index[axis] = slice(tap, tap + out.shape[axis])
            acc += weight * padded[tuple(index)]
        out = acc
    return np.clip(out, 0.0, 1.0)


def rotate(frame: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the frame center (positive = counter-clockwise) with
    bilinear sampling; out-of-bounds samples contribute zero."""
    if not -180.0 <= angle_deg <= 180.0:
        raise ValueError(f"angle must be in [-180, 180], got {angle_deg}")
    if angle_deg == 0.0:
        return frame.astype(np.float32, copy=True)
    h, w = frame.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    x = cc - cx
    y = cy - rr  # image y points up
    src_c = cx + cos_t * x + sin_t * y
    src_r = cy - (-sin_t * x + cos_t * y)

    r0 = np.floor(src_r).astype(np.intp)
    c0 = np.floor(src_c).astype(np.intp)
    fr = (src_r - r0).astype(np.float32)[..., None]
    fc = (src_c - c0).astype(np.float32)[..., None]

    img = frame.astype(np.float32)
    out = np.zeros_like(img)
    for dr, dc, weight in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        ri, ci = r0 + dr, c0 + dc
        inside = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        ri_c = np.clip(ri, 0, h - 1)
        ci_c = np.clip(ci, 0, w - 1)
        out += weight * inside[..., None] * img[ri_c, ci_c]
    return np.clip(out, 0.0, 1.0)


def flip(frame: np.ndarray, axis: str) -> np.ndarray:
    """Reverse pixel order horizontally ((r,c) -> (r, W-1-c)) or vertically."""
    if axis == "horizontal":
        return np.ascontiguousarray(frame[:, ::-1])
    if axis == "vertical":
        return np.ascontiguousarray(frame[::-1, :])
    raise ValueError(f"flip axis must be 'horizontal' or 'vertical', got {axis!r}")


def perturb_uniform(frame: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. U(-amplitude, amplitude) noise and clamp to [0, 1]."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if amplitude == 0:
        return frame.astype(np.float32, copy=True)
    noise = rng.uniform(-amplitude, amplitude, size=frame.shape)
    return np.clip(frame + noise, 0.0, 1.0).astype(np.float32)


@dataclass
class AugmentSpec:
    """Augmentation magnitudes and the seed that makes them reproducible.

    Defaults are mild, label-preserving transforms; the blur/rotation values
    are sampled uniformly from their ranges once per clip.
    """

    blur_sigma_range: tuple = (0.5, 1.5)
    rotation_range_deg: tuple = (-15.0, 15.0)
    h_flip_prob: float = 0.5
    v_flip_prob: float = 0.0
    perturb_amplitude: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("blur_sigma_range", "rotation_range_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} lower bound {lo} exceeds upper bound {hi}")
        for name in ("h_flip_prob", "v_flip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if not 0.0 <= self.perturb_amplitude <= 0.5:
            raise ValueError(f"perturb_amplitude must be in [0, 0.5], got {self.perturb_amplitude}")

    @staticmethod
    def identity(seed: int = 0) -> "AugmentSpec":
        return AugmentSpec((0.0, 0.0), (0.0, 0.0), 0.0, 0.0, 0.0, seed)

    def with_seed(self, seed: int) -> "AugmentSpec":
        return replace(self, seed=seed)


def augment_clip(clip: VideoClip, spec: AugmentSpec) -> VideoClip:
    """Apply one sampled transform set to every frame of the clip.

    Deterministic in (clip bytes, spec): the parameter stream is seeded by
    spec.seed XOR a stable hash of clip.source_id, so equal inputs give
    bitwise-equal outputs in any process. An all-zero spec returns the frames
    bitwise unchanged.
    """
    rng = make_rng(mix_seed(spec.seed, clip.source_id))
    sigma = float(rng.uniform(*spec.blur_sigma_range))
    angle = float(rng.uniform(*spec.rotation_range_deg))
    do_h = rng.random() < spec.h_flip_prob
    do_v = rng.random() < spec.v_flip_prob

    frames = clip.frames
    t = frames.shape[0]
    out = np.empty_like(frames)
    for i in range(t):
        frame = frames[i]
        if sigma > 0:
            frame = gaussian_blur(frame, sigma)
        if angle != 0.0:
            frame = rotate(frame, angle)
        if do_h:
            frame = flip(frame, "horizontal")
        if do_v:
            frame = flip(frame, "vertical")
        out[i] = frame
    # one noise field per clip, shared by all frames (temporal consistency);
    # drawn last so disabling it does not shift the other draws
    if spec.perturb_amplitude > 0:
        noise = rng.uniform(-spec.perturb_amplitude, spec.perturb_amplitude, size=frames.shape[1:])
        out = np.clip(out + noise[None].astype(np.float32), 0.0, 1.0).astype(np.float32)
    return VideoClip(out, label=clip.label, source_id=clip.source_id)
