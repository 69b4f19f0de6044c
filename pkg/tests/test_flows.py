import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dmesolve.exceptions import ConfigurationError, InputError
from dmesolve.expleja import SparseOperator, ZeroOperator, leja_params
from dmesolve.flows import (BilinearTerm, RiccatiGain, build_integral, flow_affine, flow_bilinear,
                            flow_constant, flow_linear, flow_riccati, gauss_legendre)
from dmesolve.lowrank import LowRankFactor, to_dense
from dmesolve.oracle import integrate_dense_matrices, lyapunov_integral
from dmesolve.problems import heat2d_model


def params(op, h):
    return leja_params(op.bounds, h)


def scalar_op(a):
    return SparseOperator(sp.csr_matrix([[a]]))


def psd_factor(rng, n, r):
    return LowRankFactor(rng.standard_normal((n, r)), np.ones(r))


def test_gain_validation():
    with pytest.raises(InputError):
        RiccatiGain(np.ones((3, 2)), np.eye(3))
    with pytest.raises(InputError):
        RiccatiGain(np.ones((3, 1)), [[-1.0]])
    with pytest.raises(InputError):
        RiccatiGain(np.ones((3, 2)), [[1.0, 2.0], [0.0, 1.0]])


def test_linear_zero_operator_keeps_factor(rng):
    P = psd_factor(rng, 4, 2)
    op = ZeroOperator(4)
    np.testing.assert_array_equal(flow_linear(op, 0.3, P, params(op, 0.3)).L, P.L)


def test_linear_scalar():
    op = scalar_op(-1.0)
    out = flow_linear(op, 1.0, LowRankFactor([[2.0]], [1.0]), params(op, 1.0))
    assert out.L[0, 0] == pytest.approx(2 * math.exp(-1), rel=1e-14)
    assert to_dense(out)[0, 0] == pytest.approx(4 * math.exp(-2), rel=1e-14)


def test_linear_heat_against_expm():
    pb = heat2d_model(10, gain=False)
    K = pb.op.dense()
    E = sla.expm(0.01 * K)
    P = LowRankFactor(pb.P0.L[:, :2], np.eye(2))
    out = to_dense(flow_linear(pb.op, 0.01, P, params(pb.op, 0.01)))
    ref = E @ to_dense(P) @ E.T
    assert np.abs(out - ref).max() <= 1e-10 * np.abs(ref).max()


def test_constant_examples(rng):
    Q = psd_factor(rng, 5, 2)
    P = psd_factor(rng, 5, 3)
    np.testing.assert_allclose(to_dense(flow_constant(0.0, P, Q)), to_dense(P), atol=1e-15)
    np.testing.assert_allclose(to_dense(flow_constant(0.1, LowRankFactor.zeros(5), Q)),
                               0.1 * to_dense(Q), atol=1e-15)
    np.testing.assert_allclose(to_dense(flow_constant(0.3, P, Q)),
                               to_dense(P) + 0.3 * to_dense(Q), atol=1e-14)


def test_riccati_scalar():
    gain = RiccatiGain([[1.0]], [[1.0]])
    out = flow_riccati(gain, 0.5, LowRankFactor([[1.0]], [2.0]))
    assert to_dense(out)[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert flow_riccati(gain, 0.0, LowRankFactor([[1.0]], [2.0])).D[0, 0] == 2.0


def test_riccati_against_dense_solve(rng):
    P = psd_factor(rng, 25, 5)
    B = rng.standard_normal((25, 2))
    Rinv = np.array([[2.0, 0.3], [0.3, 1.0]])
    out = flow_riccati(RiccatiGain(B, Rinv), 0.2, P)
    Pd = to_dense(P)
    ref = np.linalg.solve(np.eye(25) + 0.2 * Pd @ B @ Rinv @ B.T, Pd)
    assert np.abs(to_dense(out) - ref).max() <= 1e-11 * np.abs(ref).max()
    np.testing.assert_array_equal(out.L, P.L)


def test_bilinear_trivial_cases(rng):
    P = psd_factor(rng, 6, 2)
    zero = BilinearTerm(sp.csr_matrix((6, 6)))
    out = flow_bilinear(zero, 0.5, P)
    assert out.rank == P.rank
    np.testing.assert_allclose(to_dense(out), to_dense(P), atol=1e-14)
    S = BilinearTerm(sp.random(6, 6, density=0.3, random_state=1))
    assert flow_bilinear(S, 0.0, P) is P
    with pytest.raises(InputError):
        flow_bilinear(S, 0.1, P, order=3)


def test_bilinear_midpoint_formula(rng):
    S = sp.random(25, 25, density=0.1, random_state=3).tocsr()
    P = psd_factor(rng, 25, 3)
    h = 0.1
    out = to_dense(flow_bilinear(BilinearTerm(S), h, P))
    Sd, Pd = S.toarray(), to_dense(P)
    ref = Pd + h * Sd @ (Pd + 0.5 * h * Sd @ Pd @ Sd.T) @ Sd.T
    assert np.abs(out - ref).max() <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("order, expected", [(1, 4.0), (2, 8.0)])
def test_bilinear_local_order(order, expected):
    rng = np.random.default_rng(7)
    n = 10
    S = rng.standard_normal((n, n)) / 3
    P = psd_factor(rng, n, 2)
    Pd = to_dense(P)
    exact = lambda h: (sla.expm(h * np.kron(S, S)) @ Pd.ravel()).reshape(n, n)
    errs = [np.linalg.norm(to_dense(flow_bilinear(BilinearTerm(S), h, P, order)) - exact(h))
            for h in (0.02, 0.01)]
    assert errs[0] / errs[1] == pytest.approx(expected, rel=0.15)


def test_gauss_legendre_weights_sum_to_h():
    s, w = gauss_legendre(14, 0.3)
    assert w.sum() == pytest.approx(0.3, rel=1e-15)
    assert np.all((s > 0) & (s < 0.3))


def test_integral_zero_operator_is_hq(rng):
    Q = psd_factor(rng, 5, 2)
    I = build_integral(ZeroOperator(5), Q, 0.25)
    np.testing.assert_allclose(to_dense(I.factor), 0.25 * to_dense(Q), atol=1e-14)


def test_integral_scalar():
    I = build_integral(scalar_op(-1.0), LowRankFactor([[1.0]], [1.0]), 1.0)
    assert to_dense(I.factor)[0, 0] == pytest.approx((1 - math.exp(-2)) / 2, abs=1e-12)


def test_integral_heat_against_ode():
    pb = heat2d_model(10, gain=False)
    h = 0.005
    I = to_dense(build_integral(pb.op, pb.Q, h).factor)
    ref = integrate_dense_matrices(pb.op.dense(), to_dense(pb.Q), np.zeros((100, 100)), h).P
    assert np.abs(I - ref).max() <= 1e-9 * np.abs(ref).max()


def test_integral_rejects_bad_input(rng):
    Q = psd_factor(rng, 3, 1)
    with pytest.raises(InputError):
        build_integral(ZeroOperator(3), Q, 0.1, nodes=1)
    with pytest.raises(InputError):
        build_integral(ZeroOperator(3), Q, 0.0)


def test_affine_scalar():
    op = scalar_op(-1.0)
    h = 0.25
    I = build_integral(op, LowRankFactor([[1.0]], [1.0]), h)
    out = flow_affine(op, h, LowRankFactor([[1.0]], [1.0]), I, params(op, h))
    assert to_dense(out)[0, 0] == pytest.approx(math.exp(-0.5) + (1 - math.exp(-0.5)) / 2, abs=1e-12)


def test_affine_reductions(rng):
    P, Q = psd_factor(rng, 4, 2), psd_factor(rng, 4, 1)
    z = ZeroOperator(4)
    out = flow_affine(z, 0.2, P, build_integral(z, Q, 0.2), params(z, 0.2))
    np.testing.assert_allclose(to_dense(out), to_dense(flow_constant(0.2, P, Q)), atol=1e-14)
    op = SparseOperator(sp.diags([-1.0, -2.0, -3.0, -4.0]))
    none = build_integral(op, LowRankFactor.zeros(4), 0.2)
    np.testing.assert_allclose(to_dense(flow_affine(op, 0.2, P, none, params(op, 0.2))),
                               to_dense(flow_linear(op, 0.2, P, params(op, 0.2))), atol=1e-14)


def test_affine_matches_van_loan():
    pb = heat2d_model(5, gain=False)
    h = 0.01
    K = pb.op.dense()
    E = sla.expm(h * K)
    I = build_integral(pb.op, pb.Q, h)
    out = to_dense(flow_affine(pb.op, h, pb.P0, I, params(pb.op, h)))
    ref = E @ to_dense(pb.P0) @ E.T + lyapunov_integral(K, to_dense(pb.Q), h)
    assert np.linalg.norm(out - ref) <= 1e-11 * np.linalg.norm(ref)


def test_affine_rejects_step_mismatch(rng):
    z = ZeroOperator(3)
    I = build_integral(z, psd_factor(rng, 3, 1), 0.1)
    with pytest.raises(ConfigurationError):
        flow_affine(z, 0.2, psd_factor(rng, 3, 1), I, params(z, 0.2))


def _min_eig(f):
    P = to_dense(f)
    return np.linalg.eigvalsh(P)[0], np.linalg.norm(P, 2)


@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.5))
def test_flows_preserve_symmetry_and_psd(seed, h):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 30))
    P = psd_factor(rng, n, int(rng.integers(1, 5)))
    Q = psd_factor(rng, n, 2)
    K = sp.diags(-rng.uniform(0.5, 5.0, n)) + 0.1 * sp.random(n, n, density=0.2, random_state=seed)
    op = SparseOperator(K)
    gain = RiccatiGain(rng.standard_normal((n, 1)), [[1.0]])
    outs = [flow_linear(op, h, P, params(op, h)), flow_constant(h, P, Q), flow_riccati(gain, h, P),
            flow_affine(op, h, P, build_integral(op, Q, h), params(op, h))]
    for f in outs:
        D = to_dense(f)
        assert np.abs(D - D.T).max() <= 1e-12 * max(np.abs(D).max(), 1.0)
        lo, nrm = _min_eig(f)
        assert lo >= -1e-10 * nrm
    assert outs[2].trace() <= P.trace() * (1 + 1e-12)
