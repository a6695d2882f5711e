"""Binary checkpoint container.

Layout (all integers little-endian):

    magic           4 bytes  b"THNV"
    version         u32      (currently 1)
    meta_len        u32      followed by meta_len bytes of UTF-8 JSON
    n_entries       u32
    entry table     per entry:
                      name_len u16, name bytes (UTF-8)
                      kind_len u16, kind bytes (UTF-8)
                      stride   u32
                      ndim     u32, then ndim x u32 dims
    payload         float32 little-endian arrays, C order, in table order
    crc32           u32 over every preceding byte

Round-trips are bit-exact; the CRC is verified on load.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ..errors import CheckpointError

MAGIC = b"THNV"
VERSION = 1


class Entry:
    __slots__ = ("kind", "stride", "array")

    def __init__(self, kind: str, stride: int, array: np.ndarray):
        self.kind = kind
        self.stride = int(stride)
        self.array = np.ascontiguousarray(array, dtype="<f4")


def save_checkpoint(path, entries: dict[str, Entry], meta: dict) -> None:
    """Write named parameter arrays plus a JSON meta block."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(entries))]
    payload = []
    for name, entry in entries.items():
        name_b = name.encode("utf-8")
        kind_b = entry.kind.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)) + name_b)
        parts.append(struct.pack("<H", len(kind_b)) + kind_b)
        parts.append(struct.pack("<I", entry.stride))
        dims = entry.array.shape
        parts.append(struct.pack("<I", len(dims)) + struct.pack(f"<{len(dims)}I", *dims))
        payload.append(entry.array.tobytes())
    blob = b"".join(parts) + b"".join(payload)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, Entry]]:
    """Read a checkpoint; raises CheckpointError on any corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off); off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (meta_len,) = struct.unpack_from("<I", blob, off); off += 4
    meta = json.loads(blob[off:off + meta_len].decode("utf-8")); off += meta_len
    (n_entries,) = struct.unpack_from("<I", blob, off); off += 4
    table = []
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", blob, off); off += 2
        name = blob[off:off + name_len].decode("utf-8"); off += name_len
        (kind_len,) = struct.unpack_from("<H", blob, off); off += 2
        kind = blob[off:off + kind_len].decode("utf-8"); off += kind_len
        (stride,) = struct.unpack_from("<I", blob, off); off += 4
        (ndim,) = struct.unpack_from("<I", blob, off); off += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, off); off += 4 * ndim
        table.append((name, kind, stride, dims))
    entries = {}
    for name, kind, stride, dims in table:
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(dims)
        off += 4 * count
        entries[name] = Entry(kind, stride, arr.copy())
    if off != len(blob) - 4:
        raise CheckpointError(f"{path}: payload size mismatch")
    return meta, entries
