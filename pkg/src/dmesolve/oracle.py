"""Dense reference solutions for small problems.

Slow and independent of the low-rank machinery: everything here works on
full ``n x n`` matrices and is only meant for ``n <= 100``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .exceptions import InputError, SizeError, StiffnessError

EXPM_LIMIT = 1000
ODE_LIMIT = 100


@dataclass(frozen=True)
class DenseState:
    """Symmetric solution ``P`` at time ``t``.

    ``error_estimate`` is the relative change observed when the integrator
    tolerance was halved (``nan`` if that check was not run).
    """

    P: np.ndarray
    t: float
    error_estimate: float = math.nan
    nfev: int = 0


def dense_expm(A):
    """Matrix exponential by scaling and squaring with Pade approximants."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("expm needs a square matrix")
    if A.shape[0] > EXPM_LIMIT:
        raise SizeError(f"dense expm limited to n <= {EXPM_LIMIT}")
    return sla.expm(A)


def dense_data(problem):
    """Dense ``(K, Q, P0, S, G)`` with ``K = A^T`` and ``G = B R^{-1} B^T``."""
    n = problem.n
    if n > ODE_LIMIT:
        raise SizeError(f"dense oracle limited to n <= {ODE_LIMIT}; use a self-reference")
    from .lowrank import to_dense

    K = problem.op.dense()
    S = problem.bilinear.S.toarray() if problem.bilinear is not None else None
    G = None
    if problem.gain is not None:
        B = problem.gain.B
        G = B @ problem.gain.Rinv @ B.T
    return K, to_dense(problem.Q), to_dense(problem.P0), S, G


def matrix_rhs(K, Q, S=None, G=None):
    """Right-hand side ``K P + P K^T + Q + S P S^T - P G P`` on flattened ``P``."""
    n = K.shape[0]

    def rhs(_t, y):
        P = y.reshape(n, n)
        F = K @ P
        F = F + F.T + Q
        if S is not None:
            F += S @ P @ S.T
        if G is not None:
            F -= P @ G @ P
        return F.ravel()

    return rhs


def _solve(rhs, y0, T, rel_tol, abs_tol):
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=rel_tol, atol=abs_tol)
    if sol.status != 0:
        raise StiffnessError(
            f"reference integration failed at t={sol.t[-1]:g}: {sol.message}; "
            "try a smaller n or a looser tolerance"
        )
    return sol.y[:, -1], sol.nfev


def integrate_dense(problem, rel_tol=1e-12, abs_tol=1e-14, T=None, validate=False):
    """Vectorized reference solution of the full matrix equation.

    Uses the adaptive embedded Runge-Kutta pair DOP853. With ``validate`` the
    integration is repeated at half the tolerances and the relative
    difference is reported as ``error_estimate``.
    """
    K, Q, P0, S, G = dense_data(problem)
    T = problem.T if T is None else T
    return integrate_dense_matrices(K, Q, P0, T, S=S, G=G, rel_tol=rel_tol,
                                    abs_tol=abs_tol, validate=validate)


def integrate_dense_matrices(K, Q, P0, T, S=None, G=None, rel_tol=1e-12, abs_tol=1e-14,
                             validate=False):
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    n = K.shape[0]
    if n > ODE_LIMIT:
        raise SizeError(f"dense oracle limited to n <= {ODE_LIMIT}")
    rhs = matrix_rhs(K, np.atleast_2d(Q), S, G)
    y0 = np.atleast_2d(np.asarray(P0, dtype=np.float64)).ravel()
    if T == 0:
        return DenseState(y0.reshape(n, n).copy(), 0.0, 0.0)
    y, nfev = _solve(rhs, y0, T, rel_tol, abs_tol)
    P = y.reshape(n, n)
    P = 0.5 * (P + P.T)
    est = math.nan
    if validate:
        y2, nfev2 = _solve(rhs, y0, T, 0.5 * rel_tol, 0.5 * abs_tol)
        P2 = y2.reshape(n, n)
        P2 = 0.5 * (P2 + P2.T)
        est = float(np.linalg.norm(P - P2) / max(np.linalg.norm(P2), 1e-300))
        P, nfev = P2, nfev + nfev2
    return DenseState(P, float(T), est, nfev)


def lyapunov_integral(K, Q, h):
    """``int_0^h exp(s K) Q exp(s K^T) ds`` via one block exponential (Van Loan)."""
    K = np.atleast_2d(K)
    n = K.shape[0]
    Z = np.zeros((2 * n, 2 * n))
    Z[:n, :n] = -K
    Z[:n, n:] = np.atleast_2d(Q)
    Z[n:, n:] = K.T
    F = dense_expm(h * Z)
    out = F[n:, n:].T @ F[:n, n:]
    return 0.5 * (out + out.T)


def dense_step_reference(problem, h, flow, P=None):
    """Exact dense one-step map of a single subflow.

    ``flow`` is one of ``"linear"``, ``"constant"``, ``"riccati"``,
    ``"bilinear"`` or ``"affine"``; ``P`` defaults to the problem's ``P0``.
    """
    K, Q, P0, S, G = dense_data(problem)
    P = P0 if P is None else np.asarray(P, dtype=np.float64)
    n = K.shape[0]
    if flow == "linear":
        E = dense_expm(h * K)
        out = E @ P @ E.T
    elif flow == "constant":
        out = P + h * Q
    elif flow == "riccati":
        if G is None:
            raise InputError("problem has no Riccati term")
        out = np.linalg.solve(np.eye(n) + h * P @ G, P)
    elif flow == "bilinear":
        if S is None:
            raise InputError("problem has no bilinear term")
        # vec(S P S^T) = (S kron S) vec(P) for row-major vec
        out = (dense_expm(h * np.kron(S, S)) @ P.ravel()).reshape(n, n)
    elif flow == "affine":
        E = dense_expm(h * K)
        out = E @ P @ E.T + lyapunov_integral(K, Q, h)
    else:
        raise InputError(f"unknown flow {flow!r}")
    return 0.5 * (out + out.T)


def scalar_dle(a, q, p0, t):
    """Solution of ``p' = 2 a p + q``."""
    x = 2.0 * a * t
    growth = math.expm1(x) / x if x != 0.0 else 1.0
    return math.exp(x) * p0 + q * t * growth


def scalar_dre(a, q, g, p0, t):
    """Solution of ``p' = 2 a p + q - g p^2``.

    Written as ``p = y / x`` with ``(x, y)' = H (x, y)``,
    ``H = [[-a, g], [q, a]]``. Since ``H^2 = (a^2 + g q) I`` the exponential
    is ``cosh(d t) I + sinh(d t)/d H``; dividing by the cosine term leaves
    ``tanh(d t)/d``, which stays accurate as ``d`` approaches zero.
    """
    disc = a * a + g * q
    d = math.sqrt(abs(disc))
    x = d * t
    if x == 0.0:
        w = t
    elif disc > 0:
        w = math.tanh(x) / d
    else:
        w = math.tan(x) / d
    return (p0 + w * (q + a * p0)) / (1.0 + w * (g * p0 - a))
