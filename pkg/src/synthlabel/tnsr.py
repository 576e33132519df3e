"""TNSR binary tensor format and length-prefixed text blocks.

Layout (all integers little-endian):
    magic "TNSR" | u32 version=1 | u8 dtype (0 = float64) | u8 ndims |
    ndims x u64 dims | row-major float64 payload

Checkpoints and model files concatenate a length-prefixed UTF-8 text header
(u64 byte length + bytes) with a sequence of TNSR records; round-trips are
bit-exact.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_F64 = 0


def write_tensor(f: BinaryIO, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > 255:
        raise FormatError(f"TNSR supports 1..255 dims, got {arr.ndim}")
    f.write(MAGIC)
    f.write(struct.pack("<I", VERSION))
    f.write(struct.pack("<BB", DTYPE_F64, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad TNSR magic: {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(f, 4))
    if version != VERSION:
        raise FormatError(f"unsupported TNSR version {version}")
    dtype, ndims = struct.unpack("<BB", _read_exact(f, 2))
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported TNSR dtype {dtype}")
    if ndims < 1:
        raise FormatError("TNSR ndims must be >= 1")
    dims = struct.unpack(f"<{ndims}Q", _read_exact(f, 8 * ndims))
    count = 1
    for d in dims:
        if d == 0:
            raise FormatError("TNSR dims must be positive")
        count *= d
    payload = _read_exact(f, 8 * count)
    # copy: frombuffer views are read-only and would poison downstream kernels
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def _read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated TNSR stream: wanted {n} bytes, got {len(buf)}")
    return buf


def write_text_block(f: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    f.write(struct.pack("<Q", len(raw)))
    f.write(raw)


def read_text_block(f: BinaryIO) -> str:
    (n,) = struct.unpack("<Q", _read_exact(f, 8))
    return _read_exact(f, n).decode("utf-8")


def save_tensors(path, text_header: str, arrays: list[np.ndarray]) -> None:
    """Write a text header plus TNSR records to ``path``."""
    with open(path, "wb") as f:
        write_text_block(f, text_header)
        for arr in arrays:
            write_tensor(f, arr)


def load_tensors(path, count: int | None = None) -> tuple[str, list[np.ndarray]]:
    """Read a text header plus TNSR records; ``count=None`` reads to EOF."""
    arrays: list[np.ndarray] = []
    with open(path, "rb") as f:
        header = read_text_block(f)
        while count is None or len(arrays) < count:
            if count is None:
                pos = f.tell()
                if not f.read(1):
                    break
                f.seek(pos)
            arrays.append(read_tensor(f))
    return header, arrays
