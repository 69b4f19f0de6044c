"""Action of the matrix exponential on a skinny block by Leja interpolation.

``exp(h K) X`` is evaluated with a Newton interpolation polynomial of the
exponential at real fast Leja points. The spectral interval of ``K`` is
estimated once by Gershgorin discs (or by a Gershgorin-type enclosure for a
pencil ``(A, M)``), mapped onto the reference interval ``[-2, 2]``, and split
into substeps so that each substep interpolates over a bounded capacity.

The operator ``K`` is whatever the caller's equation needs; for the matrix
equations in this package it is always ``A^T`` (or ``M^{-T} A^T``).
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace

import mpmath
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import backend
from .exceptions import ConfigurationError, DivergenceError, InputError

logger = logging.getLogger(__name__)

CAPACITY_CAP = 80.0
OVERSHOOT_CAP = 4.0
MAX_DEGREE = 120
MAX_RETRIES = 3


@dataclass(frozen=True)
class SpectrumBounds:
    """Rectangle ``[re_min, re_max] x [-im_radius, im_radius]`` enclosing a spectrum."""

    re_min: float
    re_max: float
    im_radius: float = 0.0

    def __post_init__(self):
        vals = (self.re_min, self.re_max, self.im_radius)
        if not all(math.isfinite(v) for v in vals):
            raise InputError("spectrum bounds must be finite")
        if self.re_min > self.re_max:
            raise InputError(f"re_min={self.re_min} > re_max={self.re_max}")
        if self.im_radius < 0:
            raise InputError("im_radius must be nonnegative")

    @property
    def width(self):
        return self.re_max - self.re_min

    def contains(self, z, slack=0.0):
        z = np.asarray(z)
        return bool(
            np.all(z.real >= self.re_min - slack)
            and np.all(z.real <= self.re_max + slack)
            and np.all(np.abs(z.imag) <= self.im_radius + slack)
        )


def _square_csr(A, name="A"):
    A = sp.csr_matrix(A, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"{name} must be square, got shape {A.shape}")
    return A


def _row_radii(A):
    absA = abs(A)
    diag = A.diagonal()
    return diag, np.asarray(absA.sum(axis=1)).ravel() - np.abs(diag)


def gershgorin_bounds(A):
    """Rectangle enclosing the union of the Gershgorin discs of ``A``."""
    A = _square_csr(A)
    if A.shape[0] == 0:
        return SpectrumBounds(0.0, 0.0, 0.0)
    c, r = _row_radii(A)
    r = np.maximum(r, 0.0)
    return SpectrumBounds(float(np.min(c - r)), float(np.max(c + r)), float(np.max(r)))


def _lambda_min_estimate(M):
    # ARPACK shift-invert estimate; only used when Gershgorin cannot
    # separate the spectrum of M from zero
    n = M.shape[0]
    if n <= 200:
        return float(np.linalg.eigvalsh(M.toarray())[0])
    val = spla.eigsh(M.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(val[0])


def pencil_bounds(A, M):
    """Enclosure of the finite eigenvalues of the pencil ``(A, M)``.

    For each row ``i`` every eigenvalue satisfies
    ``|a_ii - z m_ii| <= r_i(A) + |z| r_i(M)``. When ``M`` is strictly
    diagonally dominant this gives discs centred at ``a_ii / m_ii``. The real
    part is further intersected with the Rayleigh-quotient range
    ``x^* H x / x^* M x`` of the symmetric part ``H`` of ``A``, which is tight
    for symmetric pencils.

    If ``M`` is not strictly diagonally dominant its smallest eigenvalue is
    estimated numerically (with a safety factor), so the enclosure is then
    no longer a proof.
    """
    A = _square_csr(A)
    M = _square_csr(M, "M")
    if A.shape != M.shape:
        raise InputError(f"A {A.shape} and M {M.shape} differ in size")
    mdiag, rM = _row_radii(M)
    if np.any(mdiag <= 0):
        raise InputError("M must have a positive diagonal")
    a, rA = _row_radii(A)
    rA = np.maximum(rA, 0.0)
    rM = np.maximum(rM, 0.0)

    margin = mdiag - rM
    dominant = bool(np.all(margin > 0))
    if dominant:
        mu = float(np.min(margin))
    else:
        mu = 0.9 * _lambda_min_estimate(M)
        if mu <= 0:
            raise InputError("M does not appear to be positive definite")
    nu = float(np.max(mdiag + rM))

    H = 0.5 * (A + A.T)
    K = 0.5 * (A - A.T)
    h, rH = _row_radii(H.tocsr())
    h_lo = float(np.min(h - rH))
    h_hi = float(np.max(h + rH))
    k_rad = float(np.max(np.asarray(abs(K).sum(axis=1)).ravel()))
    rq_min = h_lo / mu if h_lo <= 0 else h_lo / nu
    rq_max = h_hi / nu if h_hi <= 0 else h_hi / mu

    if dominant:
        c = a / mdiag
        R = (np.abs(a) + rA) / margin
        rho = (rA + R * rM) / mdiag
        re_min = max(float(np.min(c - rho)), rq_min)
        re_max = min(float(np.max(c + rho)), rq_max)
        im = float(np.max(rho))
    else:
        re_min, re_max, im = rq_min, rq_max, k_rad / mu
    if re_min > re_max:  # both enclosures are valid; only rounding gets here
        re_min, re_max = min(re_min, re_max), max(re_min, re_max)
    return SpectrumBounds(re_min, re_max, im)


@functools.lru_cache(maxsize=8)
def leja_points(m):
    """First ``m`` fast Leja points on ``[-2, 2]``.

    Starts at ``2, -2, 0``; every further point is the midpoint between two
    neighbouring points that maximises the product of distances to all
    points chosen so far.
    """
    if m <= 0:
        return np.zeros(0)
    pts = [2.0, -2.0, 0.0][:m]
    while len(pts) < m:
        srt = np.sort(pts)
        cand = 0.5 * (srt[1:] + srt[:-1])
        logprod = np.log(np.abs(cand[:, None] - np.asarray(pts)[None, :])).sum(axis=1)
        pts.append(float(cand[np.argmax(logprod)]))
    out = np.array(pts)
    out.setflags(write=False)
    return out


def divided_differences(nodes, shift, scale):
    """Newton divided differences of ``xi -> exp(shift + scale * xi)``.

    The recurrence is carried out in extended precision; the cancellation
    it suffers grows with the degree, so the working precision grows with it.
    """
    m = len(nodes)
    with mpmath.workdps(40 + 2 * m):
        x = [mpmath.mpf(float(v)) for v in nodes]
        s = mpmath.mpf(float(shift))
        c = mpmath.mpf(float(scale))
        col = [mpmath.exp(s + c * xi) for xi in x]
        dd = [col[0]]
        for j in range(1, m):
            col = [(col[i + 1] - col[i]) / (x[i + j] - x[i]) for i in range(m - j)]
            dd.append(col[0])
        return np.array([float(v) for v in dd])


@dataclass(frozen=True)
class LejaParams:
    """Interpolation data for ``exp(h K)``, reused for every step of size ``h``.

    ``shift`` and ``scale`` map ``[-2, 2]`` onto ``[h re_min, h re_max]``;
    within each of the ``substeps`` substeps the interpolated function is
    ``xi -> exp((shift + scale * xi) / substeps)``, whose divided differences
    at ``points`` are stored in ``divided_differences``.
    """

    points: np.ndarray
    shift: float
    scale: float
    divided_differences: np.ndarray
    max_degree: int
    substeps: int
    tol: float
    h: float = 0.0

    def __post_init__(self):
        if self.substeps < 1:
            raise InputError("substeps must be >= 1")
        if len(self.points) != self.max_degree + 1:
            raise InputError("need max_degree + 1 interpolation points")
        if len(self.divided_differences) != self.max_degree + 1:
            raise InputError("need max_degree + 1 divided differences")
        if not np.all(np.isfinite(self.divided_differences)):
            raise InputError("divided differences are not finite")

    @property
    def interval(self):
        return (self.shift - 2 * self.scale, self.shift + 2 * self.scale)

    def with_substeps(self, substeps):
        """Same interpolation problem split into ``substeps`` substeps."""
        dd = divided_differences(self.points, self.shift / substeps, self.scale / substeps)
        return replace(self, substeps=substeps, divided_differences=dd)


def leja_params(bounds, h, block_width_hint=1, tol=1e-16, *, capacity_cap=CAPACITY_CAP,
                overshoot_cap=OVERSHOOT_CAP, max_degree=MAX_DEGREE):
    """Interpolation parameters for ``exp(h K)`` given a spectral enclosure of ``K``.

    The substep count is the smallest ``s`` with
    ``h (re_max - re_min + 2 im_radius) / s <= capacity_cap`` and
    ``h max(re_max, 0) / s <= overshoot_cap``; the second rule bounds the
    growth of the interpolated function on the right end of the interval,
    which would otherwise amplify rounding errors.

    ``block_width_hint`` does not change the parameters; it is accepted so
    callers can pass it along when they know it.
    """
    if not h > 0:
        raise InputError("h must be positive")
    if not tol > 0:
        raise InputError("tol must be positive")
    del block_width_hint
    shift = 0.5 * h * (bounds.re_min + bounds.re_max)
    scale = 0.25 * h * bounds.width
    if scale == 0.0 and bounds.im_radius == 0.0:
        # point spectrum {c}: the operator is c * I
        pts = leja_points(1)
        return LejaParams(pts, shift, 0.0, np.array([math.exp(shift)]), 0, 1, tol, h)
    extent = h * (bounds.width + 2.0 * bounds.im_radius)
    s = max(1, math.ceil(extent / capacity_cap), math.ceil(h * max(bounds.re_max, 0.0) / overshoot_cap))
    if scale == 0.0:
        # purely imaginary enclosure: interpolate on a real interval of the same size
        scale = 0.25 * h * 2.0 * bounds.im_radius
    pts = leja_points(max_degree + 1)
    dd = divided_differences(pts, shift / s, scale / s)
    return LejaParams(pts, shift, scale, dd, max_degree, s, tol, h)


class ApplyOperator:
    """Linear operator ``K`` acting on ``n x k`` blocks.

    Subclasses implement :meth:`apply`; :meth:`apply_shifted` computes
    ``alpha * K X + beta * X`` and may be overridden by a fused kernel.
    """

    n: int
    bounds: SpectrumBounds

    def apply(self, X):
        raise NotImplementedError

    def apply_shifted(self, X, alpha, beta):
        Y = self.apply(X)
        Y *= alpha
        return backend.block_add(Y, X, beta)

    def dense(self):
        """Dense matrix of ``K`` (for oracles; small ``n`` only)."""
        return self.apply(np.eye(self.n))

    def __call__(self, X):
        return self.apply(X)


class SparseOperator(ApplyOperator):
    """``K`` given explicitly as a sparse matrix; products use the parallel SpMM."""

    def __init__(self, K, bounds=None):
        self.K = backend.to_csr(_square_csr(K, "K"))
        self.n = self.K.shape[0]
        self.bounds = gershgorin_bounds(self.K) if bounds is None else bounds

    def apply(self, X):
        return backend.spmm(self.K, X)

    def apply_shifted(self, X, alpha, beta):
        return backend.spmm(self.K, X, alpha, beta)

    def dense(self):
        return self.K.toarray()

    def __repr__(self):
        return f"SparseOperator(n={self.n}, nnz={self.K.nnz})"


class MassMatrixOperator(ApplyOperator):
    """``K = M^{-T} A^T`` applied through a sparse factorization of ``M``.

    ``lu`` is a factorization object with ``solve(rhs, trans=...)`` (as
    returned by :func:`scipy.sparse.linalg.splu`); it is computed once and
    shared read-only by all calls.
    """

    def __init__(self, A, M, lu=None, bounds=None):
        A = _square_csr(A)
        M = _square_csr(M, "M")
        if A.shape != M.shape:
            raise InputError("A and M must have equal size")
        self.At = backend.to_csr(A.T)
        self.M = M
        self.lu = spla.splu(M.tocsc()) if lu is None else lu
        self.n = A.shape[0]
        self.bounds = pencil_bounds(A, M) if bounds is None else bounds

    def apply(self, X):
        Y = backend.spmm(self.At, X)
        if Y.shape[1] == 0:
            return Y
        with backend.timed("solve"):
            Z = self.lu.solve(np.asfortranarray(Y), trans="T")
        return np.ascontiguousarray(Z)

    def dense(self):
        return np.linalg.solve(self.M.toarray().T, self.At.toarray())

    def __repr__(self):
        return f"MassMatrixOperator(n={self.n})"


class ZeroOperator(ApplyOperator):
    def __init__(self, n):
        self.n = n
        self.bounds = SpectrumBounds(0.0, 0.0, 0.0)

    def apply(self, X):
        return np.zeros_like(np.asarray(X, dtype=np.float64))


def _newton_substep(op, V, params, a_coef, b_off):
    """One substep of the Newton form; returns the new block and degree used."""
    dd = params.divided_differences
    tol = params.tol
    Y = dd[0] * V
    if params.max_degree == 0:
        return Y, 0
    W = V
    prev = math.inf
    last = math.inf
    with backend.timed("newton"):
        for m in range(1, params.max_degree + 1):
            # W <- (Xi - xi_{m-1} I) W with Xi = (h K - shift) / scale
            W = op.apply_shifted(W, a_coef, b_off - params.points[m - 1])
            backend.block_add(Y, W, dd[m])
            inc = abs(dd[m]) * backend.one_norm(W)
            acc = backend.one_norm(Y)
            prev, last = last, inc
            if not math.isfinite(inc) or not math.isfinite(acc):
                raise DivergenceError("non-finite Newton iterate", residual=math.inf)
            if prev + last <= tol * acc:
                return Y, m
    residual = (prev + last) / acc if acc > 0 else math.inf
    raise DivergenceError(
        f"Newton interpolation did not reach tol={tol:g} within degree {params.max_degree}",
        residual=residual,
    )


def _exp_action_once(op, h, X, params):
    Y = np.ascontiguousarray(X, dtype=np.float64).copy()
    if params.max_degree == 0 or params.scale == 0.0:
        return Y * math.exp(h * params.shift / params.h / params.substeps) ** params.substeps
    a_coef = h / params.scale
    b_off = -params.shift / params.scale
    for _ in range(params.substeps):
        Y, _deg = _newton_substep(op, Y, params, a_coef, b_off)
    return Y


def exp_action(op, h, X, params, *, retries=MAX_RETRIES):
    """Approximate ``exp(h K) X``.

    Parameters
    ----------
    op : ApplyOperator
        Represents ``K``.
    h : float
        Step; the interval ``h * [re_min, re_max]`` must lie inside the
        interval ``params`` was built for.
    X : ndarray, shape (n, k)
    params : LejaParams

    Raises
    ------
    DivergenceError
        If the interpolation fails to converge after doubling the number of
        substeps ``retries`` times.
    """
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if X.shape[0] != op.n:
        raise InputError(f"block has {X.shape[0]} rows, operator has n={op.n}")
    if h < 0:
        raise InputError("negative steps are not supported")
    if h == 0 or X.shape[1] == 0:
        Y = X.copy()
        return Y[:, 0] if squeeze else Y
    lo, hi = params.interval
    slack = 1e-12 * max(abs(lo), abs(hi), 1.0)
    b = op.bounds
    if params.scale != 0.0 and (h * b.re_min < lo - slack or h * b.re_max > hi + slack):
        raise ConfigurationError(
            f"Leja parameters cover [{lo:g}, {hi:g}] but h*spectrum is "
            f"[{h * b.re_min:g}, {h * b.re_max:g}]"
        )
    if params.scale == 0.0 and params.h != h:
        params = leja_params(b, h, tol=params.tol)
    for attempt in range(retries + 1):
        try:
            Y = _exp_action_once(op, h, X, params)
            break
        except DivergenceError as err:
            if attempt == retries:
                raise
            logger.info("exp_action: %s; retrying with %d substeps", err, 2 * params.substeps)
            params = params.with_substeps(2 * params.substeps)
    return Y[:, 0] if squeeze else Y
