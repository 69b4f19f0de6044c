"""Binary container for compressed ``L D L^T`` factors.

Layout (version 1, little endian)::

    offset  size     content
    0       8        magic b"DMEFACT\\0"
    8       4        uint32 layout version
    12      4        uint32 reserved (0)
    16      8        uint64 n
    24      8        uint64 r
    32      8 n r    float64 L, column-major
    ...     8 r      float64 diagonal of D

Non-diagonal cores are diagonalized by :func:`~dmesolve.lowrank.compress`
before writing.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .exceptions import IngestionError
from .lowrank import LowRankFactor, compress

MAGIC = b"DMEFACT\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")


def write_factor(path, factor, tol=0.0):
    """Write ``factor`` to ``path``; returns the factor actually stored."""
    if not factor.is_diagonal():
        factor = compress(factor, tol)
    n, r = factor.n, factor.rank
    d = np.diag(factor.D).astype("<f8")
    with open(os.fspath(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, n, r))
        fh.write(np.asarray(factor.L, dtype="<f8").tobytes(order="F"))
        fh.write(d.tobytes())
    return factor


def read_factor(path):
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise IngestionError(f"cannot open factor file ({err.strerror})", path) from err
    if len(blob) < _HEADER.size:
        raise IngestionError("truncated header", path)
    magic, version, _, n, r = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IngestionError("not a factor container (bad magic)", path)
    if version != VERSION:
        raise IngestionError(f"unsupported layout version {version}", path)
    expected = _HEADER.size + 8 * (n * r + r)
    if len(blob) != expected:
        raise IngestionError(f"expected {expected} bytes for n={n}, r={r}, got {len(blob)}", path)
    off = _HEADER.size
    L = np.frombuffer(blob, dtype="<f8", count=n * r, offset=off).reshape((n, r), order="F")
    d = np.frombuffer(blob, dtype="<f8", count=r, offset=off + 8 * n * r)
    return LowRankFactor(L.astype(np.float64), np.diag(d))
