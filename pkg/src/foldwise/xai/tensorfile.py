"""TNSR v1: a self-describing binary tensor file, bit-exact on round trip.

Layout: bytes 0-3 magic ``TNSR``; byte 4 version (1); byte 5 dtype tag
(1 = 32-bit float); byte 6 rank; then rank little-endian uint32 dims;
then the row-major little-endian float32 payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ArgumentError, FormatError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sBBB")


@dataclass(frozen=True)
class Tensor32:
    """A rank >= 1 single-precision tensor (row-major)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim < 1:
            raise ArgumentError("tensor rank must be >= 1")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def write_tensor(tensor: Tensor32, path: str | Path) -> None:
    data = tensor.data
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(data.astype("<f4", copy=False).tobytes(order="C"))


def read_tensor(path: str | Path) -> Tensor32:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dtype, rank = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unsupported dtype tag {dtype}")
    if rank < 1:
        raise FormatError(f"{path}: rank must be >= 1, got {rank}")
    dims_end = _HEADER.size + 4 * rank
    if len(buf) < dims_end:
        raise FormatError(f"{path}: truncated dimension list")
    shape = struct.unpack_from(f"<{rank}I", buf, _HEADER.size)
    count = 1
    for d in shape:
        count *= d
    expected = dims_end + 4 * count
    if len(buf) < expected:
        raise FormatError(f"{path}: truncated payload ({len(buf) - dims_end} of {4 * count} bytes)")
    if len(buf) > expected:
        raise FormatError(f"{path}: {len(buf) - expected} trailing bytes after payload")
    flat = np.frombuffer(buf, dtype="<f4", count=count, offset=dims_end)
    return Tensor32(flat.astype(np.float32).reshape(shape))
