"""Self-describing binary grid files.

Layout (all little-endian)::

    8 bytes   b"FHGRID1\\0"
    u32       number of axes d
    d x (f64 lo, f64 hi, u64 count)
    f64[...]  values, row-major, first axis slowest
    u64       checksum: 8-byte BLAKE2b digest of every preceding byte
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from ..parabolic import GriddedField, SpaceTimeGrid

MAGIC = b"FHGRID1\0"
_AXIS = struct.Struct("<ddQ")


class GridFileError(ValueError):
    pass


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def encode(axes, values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    counts = tuple(int(a[2]) for a in axes)
    if values.shape != counts:
        raise GridFileError(f"values shape {values.shape} does not match axis counts {counts}")
    head = MAGIC + struct.pack("<I", len(axes)) + b"".join(_AXIS.pack(float(lo), float(hi), int(n))
                                                            for lo, hi, n in axes)
    body = head + values.tobytes(order="C")
    return body + _digest(body)


def decode(data: bytes):
    if len(data) < len(MAGIC) + 4 + 8:
        raise GridFileError(f"file too short ({len(data)} bytes)")
    body, tail = data[:-8], data[-8:]
    if _digest(body) != tail:
        raise GridFileError("checksum mismatch: file is truncated or corrupted")
    if body[:8] != MAGIC:
        raise GridFileError(f"bad magic {body[:8]!r}")
    (ndim,) = struct.unpack_from("<I", body, 8)
    off = 12
    axes = []
    for _ in range(ndim):
        axes.append(_AXIS.unpack_from(body, off))
        off += _AXIS.size
    counts = tuple(int(a[2]) for a in axes)
    expected = off + 8 * int(np.prod(counts))
    if expected != len(body):
        raise GridFileError(f"payload holds {len(body) - off} bytes, header announces {expected - off}")
    values = np.frombuffer(body, dtype="<f8", offset=off).reshape(counts).astype(float)
    return axes, values


def write_grid(path, f: GriddedField) -> Path:
    g = f.grid
    path = Path(path)
    path.write_bytes(encode([(g.t_min, g.t_max, g.nt), (g.x_min, g.x_max, g.nx)], f.values))
    return path


def read_grid(path) -> GriddedField:
    axes, values = decode(Path(path).read_bytes())
    if len(axes) != 2:
        raise GridFileError(f"expected a space-time grid, file has {len(axes)} axes")
    (t0, t1, nt), (x0, x1, nx) = axes
    return GriddedField(SpaceTimeGrid(t0, t1, int(nt), x0, x1, int(nx)), values)


def grid_roundtrip(f: GriddedField, path) -> GriddedField:
    write_grid(path, f)
    return read_grid(path)
