"""Test problems for differential Lyapunov and Riccati equations.

Every generator returns a :class:`ProblemSpec` for

    P' = A^T P + P A + Q [+ S P S^T] [- P B R^{-1} B^T P],   P(0) = P0,

where the operator ``op`` applies ``A^T`` to skinny blocks. Generators record
the arguments they were called with in ``ProblemSpec.recipe`` so that a
problem can be written to a run configuration and rebuilt bit for bit.

Random data come from :func:`numpy.random.default_rng` (PCG64) seeded with
the ``seed`` argument; draws happen in a fixed order so the DLE and DRE
variants of one seed share ``Q`` and ``P0``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import IngestionError, InputError
from .expleja import MassMatrixOperator, SparseOperator, pencil_bounds
from .flows import BilinearTerm, RiccatiGain
from .lowrank import LowRankFactor
from .mmio import read_matrix


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One differential matrix equation instance."""

    op: object
    Q: LowRankFactor
    P0: LowRankFactor
    T: float
    gain: RiccatiGain | None = None
    bilinear: BilinearTerm | None = None
    label: str = ""
    recipe: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.op.n
        for name in ("Q", "P0"):
            f = getattr(self, name)
            if f.n != n:
                raise InputError(f"{name} has {f.n} rows, operator has n={n}")
            if f.rank and np.linalg.eigvalsh(f.D)[0] < -1e-12 * max(1.0, np.abs(f.D).max()):
                raise InputError(f"{name} core is not positive semidefinite")
        if self.gain is not None and self.gain.n != n:
            raise InputError("B has the wrong number of rows")
        if self.bilinear is not None and self.bilinear.n != n:
            raise InputError("S has the wrong size")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InputError("horizon T must be positive")

    @property
    def n(self):
        return self.op.n

    @property
    def equation(self):
        kind = "DRE" if self.gain is not None else "DLE"
        return ("G" + kind) if self.bilinear is not None else kind


def laplacian_1d(nx, h=None):
    """``tridiag(1, -2, 1) / h^2`` (Dirichlet), ``h = 1/(nx+1)`` by default."""
    if h is None:
        h = 1.0 / (nx + 1)
    e = np.ones(nx)
    return sp.diags([e[:-1], -2.0 * e, e[:-1]], [-1, 0, 1], format="csr") / h**2


DISTRIBUTIONS = ("uniform", "normal")


def _draw(rng, shape, distribution):
    if distribution == "uniform":
        return rng.random(shape)
    return rng.standard_normal(shape)


def heat2d_model(nx, rank_q=2, rank_p0=5, m=1, seed=0, gain=True, rinv=1.0, T=0.5,
                 distribution="uniform"):
    """Heat equation on the unit square with random low-rank data.

    ``A`` is the 5-point Dirichlet Laplacian on an ``nx x nx`` interior grid
    (``n = nx**2``, spacing ``1/(nx+1)``). ``Q = L_Q L_Q^T`` and
    ``P0 = L_0 L_0^T`` with random ``L_Q`` (rank ``rank_q``) and ``L_0``
    (rank ``rank_p0``); ``B`` is a random ``n x m`` matrix and
    ``R^{-1} = rinv * I``. With ``gain=False`` the problem is a DLE.

    Entries are drawn from ``numpy.random.default_rng(seed)`` in the order
    ``L_Q``, ``L_0``, ``B``, either uniform on ``[0, 1)`` (default) or
    standard normal. Normal factors put most of ``Q`` into the stiff modes
    of ``A``, which delays the asymptotic regime of the splittings.
    """
    if nx < 2:
        raise InputError("nx must be >= 2")
    if distribution not in DISTRIBUTIONS:
        raise InputError(f"distribution must be one of {DISTRIBUTIONS}")
    recipe = dict(generator="heat2d", nx=nx, rank_q=rank_q, rank_p0=rank_p0, m=m,
                  seed=seed, gain=gain, rinv=rinv, T=T, distribution=distribution)
    T1 = laplacian_1d(nx)
    I = sp.identity(nx, format="csr")
    A = (sp.kron(I, T1) + sp.kron(T1, I)).tocsr()
    n = nx * nx
    rng = np.random.default_rng(seed)
    LQ = _draw(rng, (n, rank_q), distribution)
    L0 = _draw(rng, (n, rank_p0), distribution)
    B = _draw(rng, (n, m), distribution)
    g = RiccatiGain(B, rinv * np.eye(m)) if gain else None
    return ProblemSpec(
        op=SparseOperator(A.T),
        Q=LowRankFactor.from_columns(LQ),
        P0=LowRankFactor.from_columns(L0),
        T=T,
        gain=g,
        label=f"heat2d nx={nx} {'DRE' if gain else 'DLE'}",
        recipe=recipe,
    )


def stochastic_heat_matrices(nx, robin=0.5, robin_mean=0.5, control_scale=1.0):
    """Finite-difference matrices of the stochastic heat transfer model.

    Unknowns sit on an ``nx x nx`` grid. In ``y`` they are the interior
    points of ``(0, 1)`` (homogeneous Dirichlet at ``y = 0, 1``, spacing
    ``1/(nx+1)``). In ``x`` they are ``x_i = i dx``, ``i = 1..nx``, with
    ``dx = 1/(nx + 1/2)``: the control edge ``x = 0`` is the Dirichlet node
    ``x_0`` and the Robin edge ``x = 1`` lies midway between ``x_nx`` and a
    ghost node ``x_{nx+1}``.

    The Robin condition ``dx/dn = robin (robin_mean + dW) x`` becomes
    ``x_{nx+1} = (1 + dx g) x_nx``. Eliminating the ghost node leaves a
    Neumann row with diagonal ``-1/dx^2 + robin robin_mean / dx`` in ``A``
    and the noise coupling ``S = robin / dx`` on the Robin nodes. ``B`` holds
    the stencil weight ``control_scale / dx^2`` of the Dirichlet value
    ``x_0 = u`` on the nodes next to the control edge.

    Returns ``(A, B, S)`` with ``A``, ``S`` sparse and ``B`` dense ``n x 1``.
    Node ``(i, j)`` has index ``j * nx + i``.
    """
    dx = 1.0 / (nx + 0.5)
    dy = 1.0 / (nx + 1)
    e = np.ones(nx)
    Ty = laplacian_1d(nx, dy)
    Tx = sp.diags([e[:-1], -2.0 * e, e[:-1]], [-1, 0, 1], format="lil") / dx**2
    Tx[nx - 1, nx - 1] = -1.0 / dx**2 + robin * robin_mean / dx
    Tx = Tx.tocsr()
    I = sp.identity(nx, format="csr")
    A = (sp.kron(I, Tx) + sp.kron(Ty, I)).tocsr()
    edge = np.zeros(nx)
    edge[nx - 1] = robin / dx
    S = sp.kron(I, sp.diags(edge)).tocsr()
    S.eliminate_zeros()
    first = np.zeros(nx)
    first[0] = control_scale / dx**2
    B = np.kron(np.ones(nx), first)[:, None]
    return A, B, S


def stochastic_heat_model(nx, gain=True, rinv=1.0, control_scale=1.0, T=0.5):
    """Generalized DLE/DRE from a heat equation with a stochastic Robin edge.

    ``Q = C^T C`` with ``C = (1/n) (1, ..., 1)`` and ``P0 = 0``. Without
    ``gain`` the control edge simply becomes homogeneous Dirichlet.
    """
    if nx < 2:
        raise InputError("nx must be >= 2")
    recipe = dict(generator="stochastic_heat", nx=nx, gain=gain, rinv=rinv,
                  control_scale=control_scale, T=T)
    A, B, S = stochastic_heat_matrices(nx, control_scale=control_scale)
    n = nx * nx
    return ProblemSpec(
        op=SparseOperator(A.T),
        Q=LowRankFactor.from_columns(np.full((n, 1), 1.0 / n)),
        P0=LowRankFactor.zeros(n),
        T=T,
        gain=RiccatiGain(B, rinv * np.eye(1)) if gain else None,
        bilinear=BilinearTerm(S),
        label=f"stochastic heat nx={nx} {'GDRE' if gain else 'GDLE'}",
        recipe=recipe,
    )


def advection_matrix(n, velocity=1.0, diffusion=1e-3):
    """Periodic centred-difference ``-v d/dx + nu d^2/dx^2`` on ``[0, 1)``."""
    dx = 1.0 / n
    idx = np.arange(n)
    right = (idx + 1) % n
    left = (idx - 1) % n
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([left, idx, right])
    adv = velocity / (2.0 * dx)
    dif = diffusion / dx**2
    vals = np.concatenate([np.full(n, adv + dif), np.full(n, -2.0 * dif), np.full(n, -adv + dif)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def advection_model(n, velocity=1.0, q_rank=2, seed=0, diffusion=1e-3, p0_rank=0, T=100.0):
    """DLE ``P' = A P + P A^T + Q`` for a periodic advection-diffusion operator.

    The equation is written with ``A`` on the left, so the operator handed
    to the solvers applies ``A`` itself (it plays the role of ``A^T`` in the
    generic form). ``Q`` is a seeded low-rank PSD matrix scaled by ``1/n``.
    """
    if n < 3:
        raise InputError("n must be >= 3")
    recipe = dict(generator="advection", n=n, velocity=velocity, q_rank=q_rank, seed=seed,
                  diffusion=diffusion, p0_rank=p0_rank, T=T)
    A = advection_matrix(n, velocity, diffusion)
    rng = np.random.default_rng(seed)
    LQ = rng.standard_normal((n, q_rank)) / np.sqrt(n)
    P0 = (LowRankFactor.from_columns(rng.standard_normal((n, p0_rank)) / np.sqrt(n))
          if p0_rank else LowRankFactor.zeros(n))
    return ProblemSpec(
        op=SparseOperator(A),
        Q=LowRankFactor.from_columns(LQ),
        P0=P0,
        T=T,
        label=f"advection n={n}",
        recipe=recipe,
    )


def factorize_spd(M, path=None):
    """Sparse LU of a symmetric matrix with a symmetric ordering and no pivoting.

    Without row pivoting the diagonal of ``U`` holds the pivots of an LDL^T
    factorization, so a nonpositive entry proves ``M`` is not SPD.
    """
    M = sp.csc_matrix(M)
    try:
        lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as err:
        raise IngestionError(f"mass matrix is singular ({err})", path) from err
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise IngestionError("mass matrix required pivoting; it is not SPD", path)
    piv = lu.U.diagonal()
    if np.any(piv <= 0):
        k = int(np.argmax(piv <= 0))
        raise IngestionError(f"mass matrix is not SPD: pivot {k} is {piv[k]:.3e}", path)
    return lu


def _as_dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)


def mass_matrix_problem(A, M, B, C, T=450.0, gain=True, label="", recipe=None, paths=None):
    """DRE ``M^T P' M = A^T P M + M^T P A + C^T C - M^T P B B^T P M`` in explicit form.

    The operator is ``M^{-T} A^T`` applied through one sparse factorization of
    ``M``, ``Q = M^{-T} C^T C M^{-1}`` is stored as the factor
    ``(M^{-T} C^T, I)``, ``R^{-1} = I`` and ``P0 = 0``.
    """
    paths = paths or {}
    A = sp.csr_matrix(A, dtype=np.float64)
    M = sp.csr_matrix(M, dtype=np.float64)
    B = _as_dense(B)
    C = _as_dense(C)
    n = A.shape[0]
    if A.shape != (n, n):
        raise IngestionError(f"A must be square, got {A.shape}", paths.get("A"))
    if M.shape != (n, n):
        raise IngestionError(f"M has shape {M.shape}, expected {(n, n)}", paths.get("M"))
    if B.shape[0] != n:
        raise IngestionError(f"B has {B.shape[0]} rows, expected {n}", paths.get("B"))
    if C.ndim != 2 or C.shape[1] != n:
        raise IngestionError(f"C has shape {C.shape}, expected (p, {n})", paths.get("C"))
    if abs(M - M.T).max() > 1e-12 * max(abs(M).max(), 1e-300):
        raise IngestionError("mass matrix is not symmetric", paths.get("M"))
    lu = factorize_spd(M, paths.get("M"))
    op = MassMatrixOperator(A, M, lu=lu, bounds=pencil_bounds(A, M))
    LQ = lu.solve(np.asfortranarray(C.T), trans="T")
    m = B.shape[1]
    return ProblemSpec(
        op=op,
        Q=LowRankFactor.from_columns(LQ),
        P0=LowRankFactor.zeros(n),
        T=T,
        gain=RiccatiGain(B, np.eye(m)) if gain else None,
        label=label or f"mass-matrix n={n}",
        recipe=recipe or {},
    )


def load_mass_matrix_problem(path_A, path_M, path_B, path_C, T=450.0, gain=True):
    """Build the mass-matrix DRE from four Matrix Market files."""
    paths = dict(A=os.fspath(path_A), M=os.fspath(path_M), B=os.fspath(path_B),
                 C=os.fspath(path_C))
    mats = {k: read_matrix(p) for k, p in paths.items()}
    recipe = dict(generator="mass_matrix", path_A=paths["A"], path_M=paths["M"],
                  path_B=paths["B"], path_C=paths["C"], T=T, gain=gain)
    return mass_matrix_problem(mats["A"], mats["M"], mats["B"], mats["C"], T=T, gain=gain,
                               label=f"mass-matrix {os.path.basename(paths['A'])}",
                               recipe=recipe, paths=paths)


def fem_1d_pair(n, length=1.0):
    """Linear-element mass and stiffness matrices on ``n`` interior nodes.

    ``M = dx/6 tridiag(1, 4, 1)`` and ``A = tridiag(1, -2, 1)/dx`` (the
    negative stiffness matrix), homogeneous Dirichlet ends.
    """
    dx = length / (n + 1)
    e = np.ones(n)
    M = sp.diags([e[:-1], 4.0 * e, e[:-1]], [-1, 0, 1], format="csr") * (dx / 6.0)
    A = sp.diags([e[:-1], -2.0 * e, e[:-1]], [-1, 0, 1], format="csr") / dx
    return A, M


def fem1d_model(n, T=0.05, gain=True, control_fraction=0.5):
    """Mass-matrix DRE from linear finite elements on ``(0, 1)``.

    ``B`` holds the nodal values of the indicator of
    ``(0, control_fraction)`` and ``C = dx (1, ..., 1)`` measures the mean. See :func:`fem_1d_pair` and :func:`mass_matrix_problem`.
    """
    if n < 2:
        raise InputError("n must be >= 2")
    A, M = fem_1d_pair(n)
    dx = 1.0 / (n + 1)
    x = dx * np.arange(1, n + 1)
    B = (x < control_fraction).astype(np.float64)[:, None]
    C = np.full((1, n), dx)
    recipe = dict(generator="fem1d", n=n, T=T, gain=gain, control_fraction=control_fraction)
    return mass_matrix_problem(A, M, B, C, T=T, gain=gain, label=f"fem1d n={n}", recipe=recipe)


GENERATORS = {
    "fem1d": fem1d_model,
    "heat2d": heat2d_model,
    "stochastic_heat": stochastic_heat_model,
    "advection": advection_model,
    "mass_matrix": load_mass_matrix_problem,
}


def problem_from_recipe(recipe):
    """Rebuild a problem from the ``recipe`` dict a generator recorded."""
    recipe = dict(recipe)
    name = recipe.pop("generator", None)
    if name not in GENERATORS:
        raise InputError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[name](**recipe)
