"""Binary container for named weight tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"FSNT"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor:
        name_len u16, name UTF-8,
        dtype    u8  (0 = float64, 1 = float32),
        rank     u8,
        dims     u32 * rank,
        data     raw little-endian values, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FSNT"
VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise ValueError(f"unsupported dtype {arr.dtype} for tensor {name}")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype(arr.dtype.newbyteorder("<")).tobytes(order="C")
    Path(path).write_bytes(bytes(out))


class WeightsFormatError(ValueError):
    pass


def _take(buf: bytes, offset: int, n: int) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise WeightsFormatError(
            f"truncated weights file: needed {offset + n} bytes, have {len(buf)}"
        )
    return buf[offset : offset + n], offset + n


def load_weights(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    chunk, off = _take(buf, 0, 4)
    if chunk != MAGIC:
        raise WeightsFormatError(f"bad magic {chunk!r}, expected {MAGIC!r}")
    chunk, off = _take(buf, off, 8)
    version, count = struct.unpack("<II", chunk)
    if version != VERSION:
        raise WeightsFormatError(f"unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, off = _take(buf, off, 2)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, off = _take(buf, off, name_len)
        name = chunk.decode("utf-8")
        chunk, off = _take(buf, off, 2)
        dtype_code, rank = struct.unpack("<BB", chunk)
        if dtype_code not in _DTYPES:
            raise WeightsFormatError(f"unknown dtype code {dtype_code} for {name}")
        chunk, off = _take(buf, off, 4 * rank)
        dims = struct.unpack(f"<{rank}I", chunk)
        dtype = _DTYPES[dtype_code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        chunk, off = _take(buf, off, nbytes)
        tensors[name] = np.frombuffer(chunk, dtype=dtype).reshape(dims).copy()
    if off != len(buf):
        raise WeightsFormatError(f"{len(buf) - off} trailing bytes after last tensor")
    return tensors
