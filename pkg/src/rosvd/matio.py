"""Binary interchange formats for real matrices (ROSV) and bit matrices (ROSB).

Both share one little-endian header::

    magic   4 bytes   b"ROSV" or b"ROSB"
    version u32
    rows    u64
    cols    u64

ROSV is followed by ``rows*cols`` float64 values in row-major order.  ROSB is
followed by the bits in row-major order, packed 8 per byte MSB-first with a
zero-padded final byte.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MATRIX_MAGIC = b"ROSV"
BITS_MAGIC = b"ROSB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def _header(magic: bytes, rows: int, cols: int) -> bytes:
    return _HEADER.pack(magic, FORMAT_VERSION, rows, cols)


def _parse_header(data: bytes, magic: bytes) -> tuple[int, int]:
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes")
    got, version, rows, cols = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    return rows, cols


def encode_matrix(values: np.ndarray) -> bytes:
    a = np.asarray(values, dtype="<f8")
    if a.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {a.shape}")
    return _header(MATRIX_MAGIC, *a.shape) + np.ascontiguousarray(a).tobytes()


def decode_matrix(data: bytes) -> np.ndarray:
    rows, cols = _parse_header(data, MATRIX_MAGIC)
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"payload size {len(data)} does not match {rows}x{cols} header ({expected})")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def encode_bits(bits: np.ndarray) -> bytes:
    b = np.asarray(bits)
    if b.ndim != 2:
        raise FormatError(f"expected a 2-D bit matrix, got shape {b.shape}")
    return _header(BITS_MAGIC, *b.shape) + np.packbits(b.astype(bool).ravel()).tobytes()


def decode_bits(data: bytes) -> np.ndarray:
    rows, cols = _parse_header(data, BITS_MAGIC)
    nbytes = (rows * cols + 7) // 8
    if len(data) != _HEADER.size + nbytes:
        raise FormatError(f"payload size {len(data) - _HEADER.size} does not match {rows}x{cols} bits")
    packed = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    return np.unpackbits(packed, count=rows * cols).reshape(rows, cols)


def save_matrix(path, values) -> None:
    Path(path).write_bytes(encode_matrix(values))


def load_matrix(path) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())


def save_bits(path, bits) -> None:
    Path(path).write_bytes(encode_bits(bits))


def load_bits(path) -> np.ndarray:
    return decode_bits(Path(path).read_bytes())


def matrix_to_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(values, dtype=float):
        writer.writerow(repr(float(x)) for x in row)
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    try:
        a = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV cell: {exc}") from None
    if a.ndim != 2:
        raise FormatError("ragged CSV rows")
    return a
