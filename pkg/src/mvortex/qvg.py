"""QVG1 binary grid files.

Layout (little-endian)::

    b"QVG1"  u32 version=1  u32 nx ny nz  f64 origin[3]  f64 spacing[3]  u8 dtype
    payload: nx*ny*nz interleaved (re, im) f64 pairs, x fastest

Only ``dtype == 0`` (interleaved complex f64) is defined.  Real grids are
stored with a zero imaginary part.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, DimsOverflowError, TruncatedPayloadError, UnsupportedFormatError
from .grid import ComplexGrid3, GridSpec, RealGrid3

MAGIC = b"QVG1"
VERSION = 1
DTYPE_COMPLEX_F64 = 0
_HEADER = struct.Struct("<4sI3I3d3dB")
HEADER_SIZE = _HEADER.size  # 69 bytes
_MAX_POINTS = 1 << 40


def encode_grid(g: ComplexGrid3 | RealGrid3) -> bytes:
    spec = g.spec
    header = _HEADER.pack(MAGIC, VERSION, *spec.dims, *spec.origin, *spec.spacing, DTYPE_COMPLEX_F64)
    vals = np.asarray(g.values, dtype=np.complex128)
    # x fastest == Fortran order of the [ix, iy, iz] array
    payload = np.ravel(vals, order="F").astype("<c16", copy=False).tobytes()
    return header + payload


def decode_grid(data: bytes) -> ComplexGrid3:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {bytes(data[:4])!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(f"header truncated: {len(data)} < {HEADER_SIZE} bytes")
    _, version, nx, ny, nz, ox, oy, oz, hx, hy, hz, dtype = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported QVG version {version}")
    if dtype != DTYPE_COMPLEX_F64:
        raise UnsupportedFormatError(f"unsupported dtype code {dtype}")
    n = nx * ny * nz
    if n == 0 or n > _MAX_POINTS:
        raise DimsOverflowError(f"dims overflow: {nx}x{ny}x{nz}")
    expected = HEADER_SIZE + 16 * n
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"truncated payload: header dims {nx}x{ny}x{nz} need {expected - HEADER_SIZE} "
            f"payload bytes, file has {len(data) - HEADER_SIZE}"
        )
    spec = GridSpec((nx, ny, nz), (ox, oy, oz), (hx, hy, hz))
    flat = np.frombuffer(data, dtype="<c16", offset=HEADER_SIZE, count=n)
    vals = np.ascontiguousarray(flat.reshape((nx, ny, nz), order="F"), dtype=np.complex128)
    return ComplexGrid3(spec, vals)


def write_grid(g: ComplexGrid3 | RealGrid3, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_bytes(encode_grid(g))
    return path


def read_grid(path: str | os.PathLike) -> ComplexGrid3:
    return decode_grid(Path(path).read_bytes())
