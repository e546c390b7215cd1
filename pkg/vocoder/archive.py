# vocoder/archive.py
"""Tensor archive: a flat, bit-exact container for float32 tensors.

Layout (little-endian)::

    b"BMG1" | u32 count | count x entry
    entry = u32 name_len | utf-8 name | u8 dtype (0 = float32) | u8 ndim
            | ndim x u32 dim | float32 payload (4 * prod(dims) bytes)
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from core.errors import ArchiveError

MAGIC = b"BMG1"
DTYPE_FLOAT32 = 0

Entries = Union[Mapping[str, np.ndarray], Iterable[Tuple[str, np.ndarray]]]


def _pairs(entries: Entries):
    return entries.items() if isinstance(entries, Mapping) else entries


def encode_archive(entries: Entries) -> bytes:
    seen = set()
    chunks = []
    count = 0
    for name, tensor in _pairs(entries):
        if not name:
            raise ArchiveError("entry name must be non-empty")
        if name in seen:
            raise ArchiveError(f"duplicate entry name {name!r}")
        seen.add(name)
        arr = np.asarray(tensor, dtype="<f4")
        if arr.ndim > 255:
            raise ArchiveError(f"{name}: ndim={arr.ndim} exceeds 255")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BB", DTYPE_FLOAT32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
        count += 1
    return MAGIC + struct.pack("<I", count) + b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise ArchiveError(
                f"truncated archive reading {what}: expected {end} bytes, got {len(self.buf)}"
            )
        out = self.buf[self.pos : end]
        self.pos = end
        return out


def decode_archive(buf: bytes) -> Dict[str, np.ndarray]:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise ArchiveError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (count,) = struct.unpack("<I", r.take(4, "entry count"))
    out: Dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", r.take(4, f"entry {i} name length"))
        try:
            name = r.take(name_len, f"entry {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ArchiveError(f"entry {i}: name is not valid utf-8") from exc
        dtype, ndim = struct.unpack("<BB", r.take(2, f"{name} header"))
        if dtype != DTYPE_FLOAT32:
            raise ArchiveError(f"{name}: unsupported dtype byte {dtype}")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} dims"))
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = r.take(4 * size, f"{name} payload")
        if name in out:
            raise ArchiveError(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise ArchiveError(f"trailing bytes: expected {r.pos} bytes, got {len(buf)}")
    return out


def archive_write(path: Union[str, Path], entries: Entries) -> None:
    data = encode_archive(entries)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise ArchiveError(f"{path}: cannot write archive ({exc.strerror or exc})") from exc


def archive_read(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise ArchiveError(f"archive not found: {p}")
    return decode_archive(p.read_bytes())
