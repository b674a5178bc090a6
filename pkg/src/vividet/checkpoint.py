"""Named-tensor checkpoint file ("VVDT").

Layout, all integers little-endian:

    magic    4 bytes  b"VVDT"
    version  u32      currently 1
    count    u32      number of named tensors
    then per tensor:
        name_len u32, name UTF-8, rank u32, dims u64 * rank,
        payload float32 * prod(dims), row-major
    optionally, after the tensor table:
        magic b"MNFS", text_len u32, UTF-8 text of "key = value" lines

The manifest section is how model checkpoints carry their configuration,
making a checkpoint self-describing. Values are stored as float32 regardless
of the in-memory dtype.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"VVDT"
MANIFEST_MAGIC = b"MNFS"
VERSION = 1

# Refuse dim products beyond this when reading; guards against running the
# allocator on a corrupt header.
_MAX_ELEMENTS = 1 << 34


def write_tensors(path, tensors: Mapping[str, Tensor], manifest: str | None = None) -> None:
    """Write named tensors (and an optional manifest text section) to `path`."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, t in tensors.items():
            raw = name.encode("utf-8")
            data = np.ascontiguousarray(t.data, dtype="<f4")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())
        if manifest is not None:
            raw = manifest.encode("utf-8")
            fh.write(MANIFEST_MAGIC)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_tensors(path) -> tuple[dict[str, Tensor], str | None]:
    """Read a VVDT file; returns ({name: Tensor}, manifest text or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        offset, name, arr = _read_one(path, view, offset)
        tensors[name] = Tensor(arr)
    manifest = None
    if offset < len(blob):
        if blob[offset : offset + 4] != MANIFEST_MAGIC:
            raise FormatError(f"{path}: trailing bytes are not a manifest section")
        (text_len,) = struct.unpack_from("<I", blob, offset + 4)
        start = offset + 8
        if start + text_len > len(blob):
            raise FormatError(f"{path}: truncated manifest")
        manifest = bytes(view[start : start + text_len]).decode("utf-8")
    return tensors, manifest


def _read_one(path, view: memoryview, offset: int):
    try:
        (name_len,) = struct.unpack_from("<I", view, offset)
        offset += 4
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", view, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", view, offset)
        offset += 8 * rank
    except struct.error as exc:
        raise FormatError(f"{path}: truncated tensor header") from exc
    n = 1
    for d in dims:
        n *= d
    if n > _MAX_ELEMENTS:
        raise FormatError(f"{path}: tensor '{name}' dims {dims} overflow sanity bound")
    end = offset + 4 * n
    if end > len(view):
        raise FormatError(f"{path}: truncated payload for tensor '{name}'")
    arr = np.frombuffer(view[offset:end], dtype="<f4").reshape(dims).astype(np.float32)
    return end, name, arr
