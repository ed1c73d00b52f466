"""Binary checkpoint container.

Layout (all integers little-endian u32)::

    b"SSLE" | version | len(kind) kind-utf8 | n_tensors
    per tensor: len(name) name-utf8 | rank | dims... | float32 payload (row-major)
    CRC-32 of every preceding byte

Metadata travels as a rank-1 tensor named ``__meta__`` holding the bytes of a
UTF-8 JSON document, one byte per float32 element.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"SSLE"
VERSION = 1
META_NAME = "__meta__"


class CheckpointError(ValueError):
    pass


def encode(kind: str, tensors: dict, meta: dict | None = None) -> bytes:
    items = list(tensors.items())
    if meta is not None:
        raw = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        items.append((META_NAME, np.frombuffer(raw, dtype=np.uint8).astype(np.float32)))
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise CheckpointError(f"duplicate tensor names: {dup}")
    kind_b = kind.encode("utf-8")
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(kind_b)) + kind_b
    out += struct.pack("<I", len(items))
    for name, value in items:
        arr = np.asarray(value)
        as32 = arr.astype("<f4")
        if arr.dtype.kind == "f" and not np.array_equal(as32.astype(arr.dtype), arr, equal_nan=True):
            raise CheckpointError(f"tensor {name!r} is not exactly representable in float32")
        name_b = name.encode("utf-8")
        out += struct.pack("<I", len(name_b)) + name_b
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(as32).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def decode(blob: bytes, source: str = "<bytes>"):
    """Return ``(kind, tensors, meta)``; tensors are float64 arrays."""
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{source}: not an SSLE checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{source}: CRC mismatch (corrupted or truncated file)")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError(f"{source}: truncated checkpoint")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    def u32():
        return struct.unpack("<I", take(4))[0]

    version = u32()
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported format version {version} (expected {VERSION})")
    kind = take(u32()).decode("utf-8")
    tensors, meta = {}, None
    for _ in range(u32()):
        name = take(u32()).decode("utf-8")
        rank = u32()
        dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        if name in tensors or (name == META_NAME and meta is not None):
            raise CheckpointError(f"{source}: duplicate tensor {name!r}")
        if name == META_NAME:
            meta = json.loads(arr.astype(np.uint8).tobytes().decode("utf-8"))
        else:
            tensors[name] = arr.astype(np.float64)
    if pos != len(body):
        raise CheckpointError(f"{source}: {len(body) - pos} trailing bytes")
    return kind, tensors, meta


def write(path, kind: str, tensors: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode(kind, tensors, meta))


def read(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(blob, str(path))
