"""Deterministic versioned binary blobs for checkpoints.

Layout: magic (4 bytes), version (u16), meta length (u32) + UTF-8 JSON,
array count (u32), then per array: name (u16 length + bytes), dtype string
(u16 length + bytes), ndim (u8), dims (u32 each), raw C-order bytes.
Identical inputs produce byte-identical files (no timestamps, sorted keys).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


class CheckpointError(ValueError):
    """Unreadable or mismatched checkpoint blob."""


def write_blob(path, magic: bytes, version: int, meta: dict, arrays: dict) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [magic, struct.pack("<HI", version, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        name_b = name.encode()
        dtype_b = arr.dtype.str.encode()
        parts.append(struct.pack("<H", len(name_b)) + name_b)
        parts.append(struct.pack("<H", len(dtype_b)) + dtype_b)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_blob(path, magic: bytes, max_version: int):
    """Returns (version, meta dict, {name: array})."""
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:4] != magic:
        raise CheckpointError(f"{path}: not a {magic!r} checkpoint")
    version, meta_len = struct.unpack_from("<HI", data, 4)
    if version > max_version:
        raise CheckpointError(f"{path}: checkpoint version {version} too new")
    off = 10
    meta = json.loads(data[off:off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode()
        off += nlen
        (dlen,) = struct.unpack_from("<H", data, off)
        off += 2
        dtype = np.dtype(data[off:off + dlen].decode())
        off += dlen
        ndim = data[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        arrays[name] = np.frombuffer(data[off:off + n_bytes], dtype=dtype).reshape(shape).copy()
        off += n_bytes
    return version, meta, arrays
