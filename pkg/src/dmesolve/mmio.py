"""Matrix Market ingestion with line-accurate diagnostics.

Only the pieces needed for operator files are supported: ``matrix`` objects
in ``coordinate`` or ``array`` layout with ``real``/``integer``/``pattern``
fields and ``general``/``symmetric``/``skew-symmetric`` symmetry. Writing is
delegated to :func:`scipy.io.mmwrite`.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import IngestionError

_FIELDS = {"real", "integer", "pattern", "double"}
_SYMMETRY = {"general", "symmetric", "skew-symmetric"}


def _data_lines(fh, path, start):
    for lineno, raw in enumerate(fh, start=start):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        yield lineno, line


def read_matrix(path):
    """Read a Matrix Market file.

    Returns a CSR matrix for coordinate files and a dense ndarray for array
    files.

    Raises
    ------
    IngestionError
        With the file name and, for malformed entries, the line number.
    """
    path = os.fspath(path)
    try:
        fh = open(path, "r", encoding="ascii", errors="strict")
    except OSError as err:
        raise IngestionError(f"cannot open file ({err.strerror})", path) from err
    with fh:
        try:
            header = fh.readline()
        except UnicodeDecodeError as err:
            raise IngestionError("not a text file", path, 1) from err
        tokens = header.strip().lower().split()
        if len(tokens) != 5 or tokens[0] != "%%matrixmarket" or tokens[1] != "matrix":
            raise IngestionError("missing '%%MatrixMarket matrix' header", path, 1)
        layout, field, symmetry = tokens[2:]
        if layout not in ("coordinate", "array"):
            raise IngestionError(f"unsupported layout {layout!r}", path, 1)
        if field not in _FIELDS:
            raise IngestionError(f"unsupported field {field!r}", path, 1)
        if symmetry not in _SYMMETRY:
            raise IngestionError(f"unsupported symmetry {symmetry!r}", path, 1)
        if layout == "array" and field == "pattern":
            raise IngestionError("pattern field requires coordinate layout", path, 1)
        try:
            lines = _data_lines(fh, path, start=2)
            size = next(lines, None)
            if size is None:
                raise IngestionError("missing size line", path)
            lineno, text = size
            try:
                dims = [int(t) for t in text.split()]
            except ValueError:
                raise IngestionError(f"malformed size line {text!r}", path, lineno) from None
            if layout == "coordinate":
                return _read_coordinate(lines, dims, field, symmetry, path, lineno)
            return _read_array(lines, dims, symmetry, path, lineno)
        except UnicodeDecodeError as err:
            raise IngestionError("non-ASCII content", path) from err


def _read_coordinate(lines, dims, field, symmetry, path, size_line):
    if len(dims) != 3 or min(dims) < 0:
        raise IngestionError("coordinate size line needs 'rows cols nnz'", path, size_line)
    nrows, ncols, nnz = dims
    if symmetry != "general" and nrows != ncols:
        raise IngestionError(f"{symmetry} matrix must be square", path, size_line)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    want = 2 if field == "pattern" else 3
    count = 0
    last = size_line
    for lineno, text in lines:
        last = lineno
        if count == nnz:
            raise IngestionError(f"more than the declared {nnz} entries", path, lineno)
        parts = text.split()
        if len(parts) != want:
            raise IngestionError(f"expected {want} fields, got {len(parts)}", path, lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            if want == 3:
                vals[count] = float(parts[2])
        except ValueError:
            raise IngestionError(f"malformed entry {text!r}", path, lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise IngestionError(f"index ({i}, {j}) outside {nrows}x{ncols}", path, lineno)
        if not np.isfinite(vals[count]):
            raise IngestionError("non-finite value", path, lineno)
        if symmetry != "general" and j > i:
            raise IngestionError(f"{symmetry} files store the lower triangle only", path, lineno)
        rows[count], cols[count] = i - 1, j - 1
        count += 1
    if count != nnz:
        raise IngestionError(f"declared {nnz} entries, found {count}", path, last)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    if symmetry != "general":
        off = rows != cols
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        mirror = sp.coo_matrix((sign * vals[off], (cols[off], rows[off])), shape=(nrows, ncols))
        A = A + mirror
    return sp.csr_matrix(A)


def _read_array(lines, dims, symmetry, path, size_line):
    if len(dims) != 2 or min(dims) < 0:
        raise IngestionError("array size line needs 'rows cols'", path, size_line)
    nrows, ncols = dims
    if symmetry != "general" and nrows != ncols:
        raise IngestionError(f"{symmetry} matrix must be square", path, size_line)
    if symmetry == "general":
        slots = [(i, j) for j in range(ncols) for i in range(nrows)]
    elif symmetry == "symmetric":
        slots = [(i, j) for j in range(ncols) for i in range(j, nrows)]
    else:
        slots = [(i, j) for j in range(ncols) for i in range(j + 1, nrows)]
    out = np.zeros((nrows, ncols))
    count = 0
    last = size_line
    for lineno, text in lines:
        last = lineno
        if count == len(slots):
            raise IngestionError(f"more than the expected {len(slots)} values", path, lineno)
        try:
            v = float(text)
        except ValueError:
            raise IngestionError(f"malformed value {text!r}", path, lineno) from None
        i, j = slots[count]
        out[i, j] = v
        if symmetry == "symmetric":
            out[j, i] = v
        elif symmetry == "skew-symmetric":
            out[j, i] = -v
        count += 1
    if count != len(slots):
        raise IngestionError(f"expected {len(slots)} values, found {count}", path, last)
    return out


def write_matrix(path, A, comment=""):
    """Write ``A`` (sparse -> coordinate, dense -> array) in Matrix Market format."""
    scipy.io.mmwrite(os.fspath(path), A, comment=comment)
