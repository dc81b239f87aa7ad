"""Binary parameter checkpoints.

Layout (all little-endian)::

    b"UTRCKPT1"
    u32  header length H, then H bytes of UTF-8 ``key=value`` lines
    u32  entry count
    per entry: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
               prod(dims) x f64 row-major data

The header block may be empty (H = 0).
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import UsageError

MAGIC = b"UTRCKPT1"


def encode(entries: Mapping[str, np.ndarray], header: str = "") -> bytes:
    head = header.encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(head)), head, struct.pack("<I", len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> tuple[dict[str, np.ndarray], str]:
    if buf[:8] != MAGIC:
        raise UsageError("not a checkpoint: bad magic")
    pos = 8
    (hlen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    header = buf[pos:pos + hlen].decode("utf-8")
    pos += hlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64)
        pos += 8 * n
        entries[name] = data.reshape(dims)
    if pos != len(buf):
        raise UsageError(f"checkpoint has {len(buf) - pos} trailing bytes")
    return entries, header


def save(path, entries: Mapping[str, np.ndarray], header: str = "") -> None:
    Path(path).write_bytes(encode(entries, header))


def load(path) -> tuple[dict[str, np.ndarray], str]:
    return decode(Path(path).read_bytes())


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def format_header(values: Mapping[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in values.items())


def parse_header(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"malformed checkpoint header line {line!r}")
        out[key.strip()] = value.strip()
    return out
