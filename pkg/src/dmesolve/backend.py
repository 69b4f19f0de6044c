"""Parallel kernels for the Newton interpolation loop.

Three memory-bound kernels do almost all of the work when propagating a
skinny block through the matrix exponential:

* ``spmm``      -- sparse (CSR) matrix times dense skinny block, fused with a
                   diagonal shift: ``alpha * A @ X + beta * X``
* ``one_norm``  -- maximum absolute column sum of a skinny block
* ``block_add`` -- in-place ``Y += alpha * X``

All three are numba kernels parallelised over rows. Reductions use a fixed
chunking that does not depend on the thread count, so results are bit
identical for any number of threads.

Kernel time is only recorded while a :class:`KernelProfile` is active
(see :func:`profile`).
"""
from __future__ import annotations

import contextlib
import contextvars
import os
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from numba import prange
from threadpoolctl import threadpool_limits

# the bundled TBB is too old for numba; avoid the warning it triggers
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

KERNELS = ("spmm", "one_norm", "block_add")

# rows per reduction chunk; fixed so that one_norm is thread-count invariant
_CHUNK = 2048


@numba.njit(parallel=True, cache=True, nogil=True)
def _csr_spmm_shift(indptr, indices, data, X, alpha, beta, out):
    n, k = X.shape
    for i in prange(n):
        for c in range(k):
            out[i, c] = beta * X[i, c]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            a = alpha * data[p]
            for c in range(k):
                out[i, c] += a * X[j, c]


@numba.njit(parallel=True, cache=True, nogil=True)
def _one_norm(X, chunk):
    n, k = X.shape
    nchunks = (n + chunk - 1) // chunk
    partial = np.zeros((nchunks, k))
    for b in prange(nchunks):
        lo = b * chunk
        hi = min(n, lo + chunk)
        for i in range(lo, hi):
            for c in range(k):
                partial[b, c] += abs(X[i, c])
    best = 0.0
    for c in range(k):
        s = 0.0
        for b in range(nchunks):
            s += partial[b, c]
        if s > best:
            best = s
    return best


@numba.njit(parallel=True, cache=True, nogil=True)
def _block_add(Y, X, alpha):
    n, k = X.shape
    for i in prange(n):
        for c in range(k):
            Y[i, c] += alpha * X[i, c]


@dataclass
class KernelProfile:
    """Accumulated wall time and call counts per instrumented section."""

    seconds: dict = field(default_factory=dict)
    calls: dict = field(default_factory=dict)

    def add(self, name, dt):
        self.seconds[name] = self.seconds.get(name, 0.0) + dt
        self.calls[name] = self.calls.get(name, 0) + 1

    def merge(self, other):
        for name, dt in other.seconds.items():
            self.seconds[name] = self.seconds.get(name, 0.0) + dt
            self.calls[name] = self.calls.get(name, 0) + other.calls.get(name, 0)


_active_profile = contextvars.ContextVar("dmesolve_profile", default=None)


@contextlib.contextmanager
def profile():
    """Activate kernel timing for the enclosed block.

    >>> with profile() as prof:
    ...     pass
    >>> prof.seconds
    {}
    """
    parent = _active_profile.get()
    prof = KernelProfile()
    token = _active_profile.set(prof)
    try:
        yield prof
    finally:
        _active_profile.reset(token)
        if parent is not None:
            parent.merge(prof)


@contextlib.contextmanager
def timed(name):
    """Time a section into the active profile, if any."""
    prof = _active_profile.get()
    if prof is None:
        yield
        return
    t0 = time.perf_counter()
    try:
        yield
    finally:
        # numba kernels return only after all worker threads joined, so the
        # clock read here already follows the parallel region's barrier
        prof.add(name, time.perf_counter() - t0)


def _as_block(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D block")
    return np.ascontiguousarray(X)


def to_csr(A):
    """Return ``A`` as canonical float64 CSR with int64 indices.

    Explicitly stored zeros are dropped; ``scipy.sparse.kron`` produces
    many of them.
    """
    A = sp.csr_matrix(A, dtype=np.float64, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    if A.indptr.dtype != np.int64:
        A = sp.csr_matrix(
            (A.data, A.indices.astype(np.int64), A.indptr.astype(np.int64)),
            shape=A.shape,
        )
    return A


def spmm(A, X, alpha=1.0, beta=0.0, out=None):
    """Compute ``alpha * A @ X + beta * X`` for CSR ``A`` and dense block ``X``."""
    X = _as_block(X)
    if A.shape != (X.shape[0], X.shape[0]):
        raise ValueError(f"spmm needs a square operator matching the block, got {A.shape} and {X.shape}")
    if out is None:
        out = np.empty_like(X)
    elif out.shape != X.shape or out.dtype != np.float64 or not out.flags.c_contiguous:
        raise ValueError("out must be a C-contiguous float64 array shaped like X")
    if X.shape[1] == 0:
        return out
    with timed("spmm"):
        _csr_spmm_shift(A.indptr, A.indices, A.data, X, float(alpha), float(beta), out)
    return out


def one_norm(X):
    """Maximum absolute column sum of ``X`` (0 for an empty block)."""
    X = _as_block(X)
    if X.size == 0:
        return 0.0
    with timed("one_norm"):
        return float(_one_norm(X, _CHUNK))


def block_add(Y, X, alpha=1.0):
    """In-place ``Y += alpha * X``; returns ``Y``."""
    if Y.shape != X.shape:
        raise ValueError(f"block shapes differ: {Y.shape} and {X.shape}")
    if X.size == 0:
        return Y
    with timed("block_add"):
        _block_add(Y, _as_block(X), float(alpha))
    return Y


def max_threads():
    return numba.config.NUMBA_NUM_THREADS


def physical_cores():
    try:
        import psutil

        n = psutil.cpu_count(logical=False)
        if n:
            return n
    except ImportError:  # pragma: no cover
        pass
    return os.cpu_count() or 1


def get_num_threads():
    return numba.get_num_threads()


def set_num_threads(n):
    """Set the kernel thread count (clipped to what the host provides)."""
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n


@contextlib.contextmanager
def threads(n):
    """Run the block with ``n`` kernel threads and ``n`` BLAS threads."""
    old = get_num_threads()
    n = set_num_threads(n)
    try:
        with threadpool_limits(limits=n):
            yield n
    finally:
        numba.set_num_threads(old)


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    A = to_csr(sp.eye(3))
    X = np.ones((3, 2))
    spmm(A, X, 1.0, 1.0)
    one_norm(X)
    block_add(X.copy(), X, 1.0)
