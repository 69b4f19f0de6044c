"""Kernel micro-benchmarks and instrumented solves."""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import astuple, dataclass, fields

import numpy as np
import scipy.sparse as sp

from . import backend
from .problems import laplacian_1d
from .schemes import integrate

RECORD_KERNELS = ("spmm", "one_norm", "block_add", "newton_total", "total")


@dataclass(frozen=True)
class BenchRecord:
    """One timing row; ``mode`` is ``"micro"`` or ``"solve"``."""

    mode: str
    kernel: str
    n: int
    rank: int
    threads: int
    seconds: float
    fraction_of_total: float

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return list(astuple(self))


def _fraction(x, total):
    return x / total if total > 0 else 0.0


def bench_operator(n):
    """Sparse test matrix of order ``n``: 2D Dirichlet Laplacian if ``n`` is a square, else 1D."""
    nx = math.isqrt(n)
    if nx * nx == n and nx >= 2:
        T = laplacian_1d(nx)
        I = sp.identity(nx, format="csr")
        return backend.to_csr(sp.kron(I, T) + sp.kron(T, I))
    return backend.to_csr(laplacian_1d(n))


def time_median(fn, repetitions=5, warmup=1):
    """Median wall time of ``fn()`` over ``repetitions`` runs after ``warmup`` runs."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def micro_benchmark(n, rank, threads=1, repetitions=5, warmup=1, seed=0):
    """Median times of the three kernels on an ``n x rank`` block.

    Returns one :class:`BenchRecord` per kernel; fractions are relative to
    the sum of the three medians.
    """
    A = bench_operator(n)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, rank))
    Y = np.zeros_like(X)
    out = np.empty_like(X)
    calls = {
        "spmm": lambda: backend.spmm(A, X, 0.5, -0.25, out=out),
        "one_norm": lambda: backend.one_norm(X),
        "block_add": lambda: backend.block_add(Y, X, 1e-3),
    }
    with backend.threads(threads):
        medians = {k: time_median(f, repetitions, warmup) for k, f in calls.items()}
    total = sum(medians.values())
    return [BenchRecord("micro", k, n, rank, threads, medians[k], _fraction(medians[k], total))
            for k in backend.KERNELS]


def instrumented_solve(spec, problem, threads=1):
    """Solve once with kernel timing; returns ``(records, report)``.

    ``newton_total`` is the time inside the Newton interpolation loops and
    ``total`` the wall time of the whole solve.
    """
    with backend.threads(threads):
        report = integrate(spec, problem)
    total = report.wall_time
    rank = max(report.rank_history) if report.rank_history else 0
    secs = dict(report.per_kernel_time)
    rows = []
    for k in backend.KERNELS + ("newton",):
        name = "newton_total" if k == "newton" else k
        s = secs.get(k, 0.0)
        rows.append(BenchRecord("solve", name, problem.n, rank, threads, s, _fraction(s, total)))
    rows.append(BenchRecord("solve", "total", problem.n, rank, threads, total, 1.0 if total > 0 else 0.0))
    return rows, report
