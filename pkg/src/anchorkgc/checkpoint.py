"""Binary checkpoint format.

Layout (little-endian)::

    b"AKGC"  u32 version
    u32 meta_len   meta_len bytes of UTF-8 JSON (sorted keys)
    u32 n_tensors
    n_tensors x { u32 name_len, name (UTF-8), u32 ndim, ndim x u64 dims, f64 data (row-major) }

Tensors are written in sorted name order so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

MAGIC = b"AKGC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes, exclude=()) -> tuple[dict[str, np.ndarray], dict]:
    """Parse a checkpoint; tensors named in ``exclude`` are skipped, never materialized."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not an AKGC checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim)) if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        raw = take(8 * n)
        if name in exclude:
            continue
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return tensors, meta


def save(path: str, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(tensors, meta))


def load(path: str, exclude=()) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        return loads(f.read(), exclude)
