"""Clip container I/O and dataset directory handling.

The native .vclip file, all integers little-endian:

    magic   4 bytes  b"VCLP"
    version u32      currently 1
    label   u8       0 non-violent, 1 violent, 255 unlabeled
    T,H,W,C u32 each
    payload float32 * T*H*W*C, row-major

A dataset directory is `root/{violent,nonviolent}/` where each entry is
either a `*.vclip` file or a subdirectory of lexicographically ordered image
frames (PNG/BMP/etc; anything Pillow reads without a codec stack). Frame
directories are letterboxed and frame-sampled at load time; .vclip files are
stored preprocessed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .video import AugmentSpec, Label, VideoClip, augment_clip, resize_letterbox, sample_frames

MAGIC = b"VCLP"
VERSION = 1
_MAX_ELEMENTS = 1 << 34
_IMAGE_SUFFIXES = {".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff", ".pgm", ".ppm"}

_LABEL_DIRS = {Label.VIOLENT: "violent", Label.NONVIOLENT: "nonviolent"}


def write_clip(clip: VideoClip, path) -> None:
    t, h, w, c = clip.frames.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IB", VERSION, clip.label.file_byte))
        fh.write(struct.pack("<4I", t, h, w, c))
        fh.write(np.ascontiguousarray(clip.frames, dtype="<f4").tobytes())


def read_clip(path) -> VideoClip:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 25:
        raise FormatError(f"{path}: truncated header")
    version, label_byte = struct.unpack_from("<IB", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        label = Label.from_file_byte(label_byte)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    t, h, w, c = struct.unpack_from("<4I", blob, 9)
    n = t * h * w * c
    if n == 0 or n > _MAX_ELEMENTS:
        raise FormatError(f"{path}: dimensions ({t},{h},{w},{c}) out of range")
    payload = blob[25:]
    if len(payload) != 4 * n:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {4 * n}")
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, h, w, c).astype(np.float32)
    return VideoClip(frames, label=label, source_id=path.stem)


def load_frame_dir(path, frame_count: int, size: int, channels: int, label: Label = Label.UNLABELED) -> VideoClip:
    """Ingest a directory of numbered image files as one preprocessed clip."""
    from PIL import Image

    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise FormatError(f"{path}: no image frames found")
    mode = "L" if channels == 1 else "RGB"
    frames = []
    for p in files:
        with Image.open(p) as img:
            arr = np.asarray(img.convert(mode), dtype=np.float32) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None]
        frames.append(resize_letterbox(arr, size))
    stack = sample_frames(np.stack(frames), frame_count)
    return VideoClip(stack, label=label, source_id=path.name)


def save_dataset(clips: list[VideoClip], root) -> Path:
    """Write clips under root/{violent,nonviolent}/ plus a manifest.csv
    listing every file with its label."""
    root = Path(root)
    rows = []
    for clip in clips:
        sub = _LABEL_DIRS[clip.label]
        directory = root / sub
        directory.mkdir(parents=True, exist_ok=True)
        name = f"{clip.source_id}.vclip"
        write_clip(clip, directory / name)
        rows.append(f"{sub}/{name},{sub}")
    manifest = root / "manifest.csv"
    manifest.write_text("path,label\n" + "\n".join(sorted(rows)) + "\n")
    return root


def load_dataset(root, frame_count: int = 56, size: int = 64, channels: int = 3) -> list[VideoClip]:
    """Read every clip under root/{violent,nonviolent}/, in sorted order.

    .vclip files keep their stored shape and label byte; frame directories
    are preprocessed to (frame_count, size, size, channels) and labeled by
    their parent directory.
    """
    root = Path(root)
    clips: list[VideoClip] = []
    for label, sub in _LABEL_DIRS.items():
        directory = root / sub
        if not directory.is_dir():
            continue
        for entry in sorted(directory.iterdir()):
            if entry.is_file() and entry.suffix == ".vclip":
                clip = read_clip(entry)
                if clip.label is Label.UNLABELED:
                    clip.label = label
                clips.append(clip)
            elif entry.is_dir():
                clips.append(load_frame_dir(entry, frame_count, size, channels, label=label))
    if not clips:
        raise FormatError(f"{root}: no clips found under violent/ or nonviolent/")
    return clips


def expand_dataset(clips: list[VideoClip], spec: AugmentSpec, copies: int = 1) -> list[VideoClip]:
    """Offline augmentation: each clip plus `copies` augmented variants.

    Variant k of a clip uses the spec reseeded by (spec.seed, k), so the
    expansion is deterministic and distinct per copy.
    """
    out = list(clips)
    for k in range(copies):
        variant_spec = spec.with_seed((spec.seed + 1 + k) * 0x9E3779B97F4A7C15 & (1 << 64) - 1)
        for clip in clips:
            aug = augment_clip(clip, variant_spec)
            aug.source_id = f"{clip.source_id}-aug{k}"
            out.append(aug)
    return out
