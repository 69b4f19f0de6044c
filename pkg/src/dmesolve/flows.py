"""Subflow propagators acting on LDL^T factors.

Naming follows the split right-hand side ``A^T P + P A + Q + S P S^T - P B R^{-1} B^T P``:

============  ==================================  ===========================
flow          subproblem                          treatment
============  ==================================  ===========================
linear        ``P' = A^T P + P A``                exact (exponential action)
constant      ``P' = Q``                          exact
riccati       ``P' = -P B R^{-1} B^T P``          exact (small solve)
bilinear      ``P' = S P S^T``                    midpoint rule / Euler
affine        ``P' = A^T P + P A + Q``            exact up to quadrature
============  ==================================  ===========================
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import backend
from .exceptions import ConfigurationError, InputError, SingularityError
from .expleja import exp_action, leja_params
from .lowrank import LowRankFactor, compress, concat


@dataclass(frozen=True, eq=False)
class RiccatiGain:
    """Quadratic term ``-P B R^{-1} B^T P``."""

    B: np.ndarray
    Rinv: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=np.float64)
        if B.ndim == 1:
            B = B[:, None]
        Rinv = np.atleast_2d(np.array(self.Rinv, dtype=np.float64))
        m = B.shape[1]
        if Rinv.shape != (m, m):
            raise InputError(f"Rinv has shape {Rinv.shape}, expected {(m, m)}")
        if np.linalg.norm(Rinv - Rinv.T) > 1e-13 * max(np.linalg.norm(Rinv), 1e-300):
            raise InputError("Rinv must be symmetric")
        if m <= 500 and np.linalg.eigvalsh(Rinv)[0] <= 0:
            raise InputError("Rinv must be positive definite")
        B.setflags(write=False)
        Rinv.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Rinv", Rinv)

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class BilinearTerm:
    """Bilinear term ``S P S^T`` with sparse ``S``."""

    S: sp.csr_matrix

    def __post_init__(self):
        S = backend.to_csr(self.S)
        if S.shape[0] != S.shape[1]:
            raise InputError("S must be square")
        object.__setattr__(self, "S", S)

    @property
    def n(self):
        return self.S.shape[0]


@dataclass(frozen=True, eq=False)
class IntegralFactor:
    """Compressed quadrature factor of ``int_0^h exp(s A^T) Q exp(s A) ds``."""

    factor: LowRankFactor
    h: float


def _check_rows(P, n, what="factor"):
    if P.n != n:
        raise InputError(f"{what} has {P.n} rows, expected {n}")


def flow_linear(op, h, P, params):
    """``exp(h A^T) P exp(h A)``: propagate the columns, keep the core."""
    _check_rows(P, op.n)
    if P.rank == 0:
        return P
    return LowRankFactor(exp_action(op, h, P.L, params), P.D)


def flow_constant(h, P, Q):
    """``P + h Q``."""
    return concat(P, Q, h)


def flow_riccati(gain, h, P):
    """Exact flow of ``P' = -P B R^{-1} B^T P`` over ``[0, h]``.

    Only the ``r x r`` core changes:
    ``D <- (I + h D (L^T B) R^{-1} (L^T B)^T)^{-1} D``.
    """
    _check_rows(P, gain.n)
    if P.rank == 0 or h == 0:
        return P
    LB = P.L.T @ gain.B
    W = LB @ gain.Rinv @ LB.T
    K = np.eye(P.rank) + h * (P.D @ W)
    if np.linalg.cond(K, 1) > 1e14:
        raise SingularityError(f"riccati flow: I + h D L^T B R^-1 B^T L is singular (h={h:g})")
    D = np.linalg.solve(K, P.D)
    return LowRankFactor(P.L, 0.5 * (D + D.T))


def flow_bilinear(term, h, P, order=2, tol=1e-16):
    """Approximate flow of ``P' = S P S^T`` over ``[0, h]``.

    ``order=2`` is the midpoint rule ``P + h S (P + h/2 S P S^T) S^T`` with
    factor ``[L, sqrt(h) S L, h/sqrt(2) S^2 L]``; ``order=1`` is explicit
    Euler ``[L, sqrt(h) S L]``. The result is compressed.
    """
    _check_rows(P, term.n)
    if order not in (1, 2):
        raise InputError("order must be 1 or 2")
    if h < 0:
        raise InputError("h must be nonnegative")
    if P.rank == 0 or h == 0:
        return P
    SL = backend.spmm(term.S, P.L)
    blocks = [P.L, math.sqrt(h) * SL]
    if order == 2:
        blocks.append((h / math.sqrt(2.0)) * backend.spmm(term.S, SL))
    k = len(blocks)
    D = np.kron(np.eye(k), P.D)
    return compress(LowRankFactor(np.hstack(blocks), D), tol)


def gauss_legendre(nodes, h):
    """Gauss-Legendre nodes and weights on ``[0, h]``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * h * (x + 1.0), 0.5 * h * w


def build_integral(op, Q, h, nodes=14, params_source=None, tol=1e-16, leja_tol=1e-16):
    """Quadrature approximation of the inhomogeneous part of the exact DLE flow.

    Parameters
    ----------
    op : ApplyOperator
    Q : LowRankFactor
    h : float
    nodes : int
        Number of Gauss-Legendre nodes (one exponential action each).
    params_source : callable, optional
        ``s -> LejaParams`` for the step ``s``; defaults to fresh parameters
        built from ``op.bounds``.
    """
    if nodes < 2:
        raise InputError("need at least 2 quadrature nodes")
    if not h > 0:
        raise InputError("h must be positive")
    _check_rows(Q, op.n, "Q")
    if params_source is None:
        def params_source(s):
            return leja_params(op.bounds, s, Q.rank, leja_tol)
    s, w = gauss_legendre(nodes, h)
    if Q.rank == 0:
        return IntegralFactor(Q, h)
    cols = [exp_action(op, sk, Q.L, params_source(sk)) for sk in s]
    D = np.kron(np.diag(w), Q.D)
    return IntegralFactor(compress(LowRankFactor(np.hstack(cols), D), tol), h)


def flow_affine(op, h, P, integral, params, tol=1e-16):
    """``exp(h A^T) P exp(h A) + int_0^h exp(s A^T) Q exp(s A) ds``, compressed."""
    if not math.isclose(integral.h, h, rel_tol=1e-12, abs_tol=0.0):
        raise ConfigurationError(f"integral factor built for h={integral.h:g}, used with h={h:g}")
    return compress(concat(flow_linear(op, h, P, params), integral.factor, 1.0), tol)
