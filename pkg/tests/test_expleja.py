import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dmesolve.exceptions import ConfigurationError, InputError
from dmesolve.expleja import (CAPACITY_CAP, MassMatrixOperator, SparseOperator, SpectrumBounds,
                              ZeroOperator, divided_differences, exp_action, gershgorin_bounds,
                              leja_params, leja_points, pencil_bounds)
from dmesolve.problems import fem_1d_pair, laplacian_1d


def laplace2d(nx):
    T = laplacian_1d(nx)
    I = sp.identity(nx)
    return (sp.kron(I, T) + sp.kron(T, I)).tocsr()


def random_sparse(rng, n, density=0.1):
    return sp.random(n, n, density=density, random_state=rng, data_rvs=rng.standard_normal).tocsr()


def act(op, h, X, tol=1e-16):
    return exp_action(op, h, X, leja_params(op.bounds, h, X.shape[1], tol))


def test_bounds_validation():
    with pytest.raises(InputError):
        SpectrumBounds(1.0, 0.0)
    with pytest.raises(InputError):
        SpectrumBounds(0.0, 1.0, -1.0)
    with pytest.raises(InputError):
        SpectrumBounds(0.0, math.inf)


def test_gershgorin_diagonal():
    assert gershgorin_bounds(sp.diags([-1.0, -4.0])) == SpectrumBounds(-4.0, -1.0, 0.0)


def test_gershgorin_laplacian():
    b = gershgorin_bounds(laplacian_1d(4, h=1.0))
    assert (b.re_min, b.re_max, b.im_radius) == (-4.0, 0.0, 2.0)


def test_gershgorin_rejects_rectangular():
    with pytest.raises(InputError):
        gershgorin_bounds(sp.random(3, 4, density=0.5))


def test_gershgorin_encloses_random_spectrum(rng):
    A = random_sparse(rng, 100)
    assert gershgorin_bounds(A).contains(np.linalg.eigvals(A.toarray()), slack=1e-10)


def test_pencil_identity_mass_reduces_to_gershgorin(rng):
    A = random_sparse(rng, 30, 0.2)
    g, p = gershgorin_bounds(A), pencil_bounds(A, sp.identity(30))
    assert p.contains(np.linalg.eigvals(A.toarray()), slack=1e-10)
    assert p.re_min >= g.re_min - 1e-12 and p.re_max <= g.re_max + 1e-12


def test_pencil_scaled_identity():
    b = pencil_bounds(sp.diags([-2.0, -6.0]), 2.0 * sp.identity(2))
    assert b.contains(np.array([-1.0, -3.0]))


def test_pencil_fem_pair():
    A, M = fem_1d_pair(50)
    lam = sla.eigvals(A.toarray(), M.toarray())
    assert pencil_bounds(A, M).contains(lam, slack=1e-8 * np.abs(lam).max())


def test_pencil_rejects_bad_mass():
    with pytest.raises(InputError):
        pencil_bounds(sp.identity(2), sp.diags([1.0, 0.0]))
    with pytest.raises(InputError):
        pencil_bounds(sp.identity(2), sp.identity(3))


@given(st.integers(0, 2**32 - 1))
def test_enclosures_are_sound(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    A = random_sparse(rng, n, 0.3)
    assert gershgorin_bounds(A).contains(np.linalg.eigvals(A.toarray()), slack=1e-9)
    G = random_sparse(rng, n, 0.3).toarray()
    M = G @ G.T + n * np.eye(n)
    lam = sla.eigvals(A.toarray(), M)
    assert pencil_bounds(A, sp.csr_matrix(M)).contains(lam, slack=1e-9)


def test_leja_points():
    pts = leja_points(30)
    np.testing.assert_array_equal(pts[:3], [2.0, -2.0, 0.0])
    assert len(set(pts)) == 30
    assert np.all(np.abs(pts) <= 2.0)


def test_divided_differences_against_newton_interpolant():
    nodes = leja_points(12)
    dd = divided_differences(nodes, -1.0, 0.5)
    x = np.linspace(-2, 2, 7)
    p = np.zeros_like(x)
    w = np.ones_like(x)
    for j in range(12):
        p += dd[j] * w
        w *= x - nodes[j]
    # degree-11 interpolant of exp(-1 + x/2): error below 1e-12 on [-2, 2]
    np.testing.assert_allclose(p, np.exp(-1.0 + 0.5 * x), rtol=1e-11)


def test_params_point_spectrum():
    p = leja_params(SpectrumBounds(0.0, 0.0, 0.0), 3.0)
    assert p.substeps == 1 and p.max_degree == 0
    np.testing.assert_array_equal(p.divided_differences, [1.0])


def test_params_first_divided_difference():
    p = leja_params(SpectrumBounds(-4.0, 0.0), 1.0, tol=1e-16)
    z0 = p.shift + p.scale * p.points[0]
    assert p.divided_differences[0] == pytest.approx(math.exp(z0 / p.substeps), rel=1e-15)


@pytest.mark.parametrize("h", [0.005, 0.05, 1.0])
def test_params_respect_capacity(h):
    p = leja_params(SpectrumBounds(-8000.0, 0.0), h)
    assert h * 8000.0 / p.substeps <= CAPACITY_CAP
    assert p.substeps == max(1, math.ceil(h * 8000.0 / CAPACITY_CAP))
    if h > 0.01:
        assert p.substeps > 1


def test_params_reject_bad_input():
    with pytest.raises(InputError):
        leja_params(SpectrumBounds(-1.0, 0.0), 0.0)
    with pytest.raises(InputError):
        leja_params(SpectrumBounds(-1.0, 0.0), 1.0, tol=0.0)


def test_zero_operator_is_identity(rng):
    X = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(act(ZeroOperator(5), 2.0, X), X)


def test_scalar_exponential():
    op = SparseOperator(sp.csr_matrix([[-2.0]]))
    y = act(op, 0.5, np.array([[3.0]]))
    assert y[0, 0] == pytest.approx(3 * math.exp(-1.0), rel=1e-14)


def test_laplacian_against_expm(rng):
    K = laplace2d(15)
    op = SparseOperator(K)
    X = rng.standard_normal((225, 5))
    ref = sla.expm(0.01 * K.toarray()) @ X
    Y = act(op, 0.01, X)
    assert np.abs(Y - ref).max() <= 1e-10 * np.abs(X).sum(axis=0).max()


def test_mass_matrix_operator_matches_dense(rng):
    A, M = fem_1d_pair(10)
    op = MassMatrixOperator(A, M)
    X = rng.standard_normal((10, 2))
    np.testing.assert_allclose(op.apply(X), np.linalg.solve(M.toarray().T, A.toarray().T @ X),
                               rtol=1e-11, atol=1e-11)


def test_operator_is_linear(rng):
    op = SparseOperator(laplace2d(6))
    X, Y = rng.standard_normal((36, 3)), rng.standard_normal((36, 3))
    lhs = op.apply(2.0 * X - 3.0 * Y)
    rhs = 2.0 * op.apply(X) - 3.0 * op.apply(Y)
    assert np.linalg.norm(lhs - rhs) <= 1e-13 * np.linalg.norm(rhs)


def test_columns_do_not_couple(rng):
    op = SparseOperator(laplace2d(7))
    X = rng.standard_normal((49, 4))
    p = leja_params(op.bounds, 0.05, 4)
    full = exp_action(op, 0.05, X, p)
    # identical degree choice is not guaranteed per column, so compare to tolerance
    parts = np.hstack([exp_action(op, 0.05, X[:, :2], p), exp_action(op, 0.05, X[:, 2:], p)])
    np.testing.assert_allclose(full, parts, rtol=0, atol=1e-13 * np.abs(X).sum(axis=0).max())


def test_rejects_wrong_rows_and_too_small_params(rng):
    op = SparseOperator(laplace2d(4))
    with pytest.raises(InputError):
        exp_action(op, 0.1, np.ones((3, 1)), leja_params(op.bounds, 0.1))
    with pytest.raises(ConfigurationError):
        exp_action(op, 1.0, np.ones((16, 1)), leja_params(op.bounds, 0.1))


@given(st.integers(0, 2**32 - 1))
def test_semigroup(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    K = random_sparse(rng, n, 0.2) - 2.0 * sp.identity(n)
    op = SparseOperator(K)
    X = rng.standard_normal((n, 2))
    h = float(rng.uniform(0.01, 0.3))
    twice = act(op, h, act(op, h, X))
    once = act(op, 2 * h, X)
    scale = max(np.abs(X).sum(axis=0).max(), np.abs(once).sum(axis=0).max())
    assert np.abs(twice - once).sum(axis=0).max() <= 1e-12 * scale


def test_halving_tol_never_hurts_much():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        K = laplace2d(8)
        op = SparseOperator(K)
        X = rng.standard_normal((64, 3))
        ref = sla.expm(0.02 * K.toarray()) @ X
        prev = None
        for tol in (1e-6, 5e-7, 1e-10, 5e-11):
            err = np.abs(act(op, 0.02, X, tol) - ref).sum(axis=0).max()
            if prev is not None:
                assert err <= 2 * prev + 1e-14
            prev = err
