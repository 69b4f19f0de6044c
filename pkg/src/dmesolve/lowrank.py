"""Symmetric low-rank factors ``P = L D L^T`` and their algebra."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import InputError, SizeError

DENSE_LIMIT = 5000
_SYM_TOL = 1e-14


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """Symmetric low-rank matrix ``L @ D @ L.T``.

    Parameters
    ----------
    L : ndarray, shape (n, r)
    D : ndarray, shape (r, r)
        Symmetric core. A 1-D array is taken as a diagonal.

    Both arrays are copied and made read-only, so a factor behaves as an
    immutable value and can be shared between threads.
    """

    L: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        L = np.array(self.L, dtype=np.float64, order="C")
        D = np.array(self.D, dtype=np.float64)
        if L.ndim == 1:
            L = L.reshape(-1, 1)
        if D.ndim == 1:
            D = np.diag(D)
        if L.ndim != 2 or D.ndim != 2:
            raise InputError("L must be 2-D and D must be 1-D or 2-D")
        r = L.shape[1]
        if D.shape != (r, r):
            raise InputError(f"core has shape {D.shape}, expected {(r, r)}")
        if r:
            asym = np.linalg.norm(D - D.T)
            if asym > _SYM_TOL * max(np.linalg.norm(D), np.finfo(float).tiny):
                raise InputError(f"core is not symmetric (|D - D^T|_F = {asym:.3e})")
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(D))):
            raise InputError("factor contains non-finite entries")
        object.__setattr__(self, "L", _freeze(L))
        object.__setattr__(self, "D", _freeze(D))

    @property
    def n(self):
        return self.L.shape[0]

    @property
    def rank(self):
        return self.L.shape[1]

    @classmethod
    def zeros(cls, n):
        """Rank-0 factor of the ``n x n`` zero matrix."""
        return cls(np.zeros((n, 0)), np.zeros((0, 0)))

    @classmethod
    def from_columns(cls, L, weight=1.0):
        """Factor ``weight * L @ L.T`` with identity core."""
        L = np.asarray(L, dtype=np.float64)
        if L.ndim == 1:
            L = L[:, None]
        return cls(L, weight * np.eye(L.shape[1]))

    def is_diagonal(self):
        return np.count_nonzero(self.D - np.diag(np.diag(self.D))) == 0

    def trace(self):
        # tr(L D L^T) = sum(D * (L^T L))
        return float(np.sum(self.D * (self.L.T @ self.L)))

    def __repr__(self):
        return f"LowRankFactor(n={self.n}, rank={self.rank})"


def concat(a, b, weight_b=1.0):
    """Factor of ``a + weight_b * b``: ``[a.L, b.L]`` with ``blkdiag(a.D, w b.D)``."""
    if a.n != b.n:
        raise InputError(f"row mismatch in concat: {a.n} vs {b.n}")
    if not np.isfinite(weight_b):
        raise InputError("weight must be finite")
    if b.rank == 0:
        return a
    L = np.hstack([a.L, b.L])
    D = sla.block_diag(a.D, weight_b * b.D) if a.rank else weight_b * b.D
    return LowRankFactor(L, D)


def _truncation_mask(lam, tol, n):
    """Indices of eigenvalues kept by compression.

    Drops ``|lam| <= tol * |lam|_2 / sqrt(n)``. At most ``n`` eigenvalues
    exist, so the discarded part has Frobenius norm at most ``tol * |lam|_2``.
    The threshold cannot grow when eigenvalues are removed, hence compressing
    twice gives the same rank. It never exceeds ``tol * max|lam|``.
    """
    mag = np.abs(lam)
    if mag.max(initial=0.0) == 0.0:
        return np.zeros(lam.shape, dtype=bool)
    return mag > tol * np.linalg.norm(lam) / np.sqrt(n)


def compress(f, tol=1e-16):
    """Column compression of an LDL^T factor.

    Thin QR of ``L`` followed by a symmetric eigendecomposition of the small
    core ``R D R^T``. Directions whose eigenvalue is negligible relative to the
    largest one are discarded. The result has orthonormal ``L`` and diagonal
    ``D`` (eigenvalues in descending order); indefinite cores keep their
    signature.

    Parameters
    ----------
    f : LowRankFactor
    tol : float
        Relative truncation tolerance, ``tol >= 0``.

    Returns
    -------
    LowRankFactor
    """
    if tol < 0:
        raise InputError("tol must be nonnegative")
    if f.rank == 0:
        return f
    Q, R = np.linalg.qr(f.L, mode="reduced")
    core = R @ f.D @ R.T
    core = 0.5 * (core + core.T)
    lam, V = np.linalg.eigh(core)
    keep = _truncation_mask(lam, tol, f.n)
    order = np.argsort(-lam[keep], kind="stable")
    lam = lam[keep][order]
    V = V[:, keep][:, order]
    return LowRankFactor(Q @ V, np.diag(lam))


def to_dense(f):
    """Materialize ``L D L^T`` as a symmetric dense matrix (``n <= 5000``)."""
    if f.n > DENSE_LIMIT:
        raise SizeError(f"refusing to densify n={f.n} > {DENSE_LIMIT}")
    if f.rank == 0:
        return np.zeros((f.n, f.n))
    P = (f.L @ f.D) @ f.L.T
    return 0.5 * (P + P.T)


def from_dense(P, tol=1e-16):
    """Eigendecomposition-based factor of a symmetric matrix."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InputError("expected a square matrix")
    nrm = np.linalg.norm(P)
    if np.linalg.norm(P - P.T) > 1e-12 * max(nrm, 1.0):
        raise InputError("matrix is not symmetric")
    if nrm == 0.0:
        return LowRankFactor.zeros(P.shape[0])
    lam, V = np.linalg.eigh(0.5 * (P + P.T))
    keep = _truncation_mask(lam, tol, P.shape[0])
    order = np.argsort(-lam[keep], kind="stable")
    return LowRankFactor(V[:, keep][:, order], np.diag(lam[keep][order]))


def frobenius_norm(f):
    """``|L D L^T|_F`` without forming the n x n matrix."""
    if f.rank == 0:
        return 0.0
    _, R = np.linalg.qr(f.L, mode="reduced")
    return float(np.linalg.norm(R @ f.D @ R.T))


def frobenius_distance(a, b):
    """``|a - b|_F`` for two factors, via a QR of the stacked columns."""
    return frobenius_norm(concat(a, b, -1.0))
