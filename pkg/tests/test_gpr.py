import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glfgp.errors import CapacityError, InvalidArgument
from glfgp.features import approx_kernel_matrix, build_feature_matrix, weight_diag
from glfgp.gpr import (EXACT_MAX_N, exact_gpr, likelihood_gradient, load_gpr_model,
                       log_marginal_likelihood, predict, save_gpr_model, train)
from glfgp.kernels import HyperParams, KernelSpec
from glfgp.quadrature import tensor_grid

G1 = KernelSpec("gaussian")
CASES = [
    (G1, tensor_grid([8.0], [24])),
    (KernelSpec("matern", 2, 1.5, anisotropic=True), tensor_grid([10.0, 10.0], [9, 8])),
    (KernelSpec("cauchy", 2), tensor_grid([9.0, 9.0], [7, 7])),
    (KernelSpec("reciprocal_semigroup"), tensor_grid([30.0], [20], "positive_box")),
]
IDS = ["gauss1", "matern2", "cauchy2", "semi1"]


def data(spec, n, rng):
    lo = 0.0 if spec.family == "reciprocal_semigroup" else -1.0
    X = rng.uniform(lo, 1, (n, spec.dim))
    return X, np.sin(3 * X.sum(axis=1)) + 0.2 * rng.standard_normal(n)


def theta_for(spec):
    return HyperParams(np.linspace(0.5, 0.8, spec.n_theta0), 1.3, 0.15)


def dense_reference(spec, grid, th, X, y, Xt):
    K = approx_kernel_matrix(spec, grid, th, X)
    alpha = np.linalg.solve(K, y)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    value = -0.5 * y @ alpha - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)
    Kt = approx_kernel_matrix(spec, grid, th, Xt, X) if Xt is not None else None
    return alpha, value, Kt


def test_scalar_example():
    # one point at x = 0 and one node: Z = 1, K = sf2 h + sn2
    grid = tensor_grid([2.0], [1])
    th = HyperParams([0.7], 2.0, 0.5)
    h = weight_diag(grid, G1, th).h[0]
    fm = build_feature_matrix(np.zeros((1, 1)), grid, G1, np.array([1.5]))
    k = 2.0 * h + 0.5
    assert log_marginal_likelihood(fm, th) == pytest.approx(-0.5 * 1.5**2 / k - 0.5 * math.log(2 * math.pi * k),
                                                            rel=1e-13)
    m = train(fm, th)
    assert m.w[0] == pytest.approx(1.5 / k, rel=1e-13)
    assert predict(m, [[0.0]])[0] == pytest.approx(2.0 * h * 1.5 / k, rel=1e-13)


def test_vanishing_signal_gives_noise_only_model(rng):
    X, y = data(G1, 20, rng)
    fm = build_feature_matrix(X, tensor_grid([8.0], [12]), G1, y)
    th = HyperParams([0.5], 1e-14, 0.3)
    expected = -0.5 * y @ y / 0.3 - 0.5 * 20 * math.log(2 * math.pi * 0.3)
    assert log_marginal_likelihood(fm, th) == pytest.approx(expected, rel=1e-10)
    assert np.max(np.abs(predict(train(fm, th), X))) <= 1e-12


@pytest.mark.parametrize("spec,grid", CASES, ids=IDS)
@pytest.mark.parametrize("path", ["normal_eq", "qr"])
def test_agrees_with_dense_algebra(spec, grid, path, rng):
    X, y = data(spec, 60, rng)
    Xt, _ = data(spec, 15, rng)
    th = theta_for(spec)
    fm = build_feature_matrix(X, grid, spec, y, path=path, keep_Z=True)
    alpha, value, Kt = dense_reference(spec, grid, th, X, y, Xt)
    m = train(fm, th)
    np.testing.assert_allclose(m.alpha, alpha, rtol=0, atol=1e-9 * np.max(np.abs(alpha)))
    pred = predict(m, Xt)
    ref = Kt @ alpha
    np.testing.assert_allclose(pred, ref, rtol=0, atol=1e-9 * np.max(np.abs(ref)))
    assert log_marginal_likelihood(fm, th) == pytest.approx(value, rel=1e-9)


@pytest.mark.parametrize("spec,grid", CASES, ids=IDS)
def test_gradient_matches_finite_differences(spec, grid, rng):
    X, y = data(spec, 40, rng)
    fm = build_feature_matrix(X, grid, spec, y)
    th = theta_for(spec)
    g = likelihood_gradient(fm, th).grad
    v = th.as_vector()
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = 1e-5 * v[i]
        fd = (log_marginal_likelihood(fm, HyperParams.from_vector(v + e))
              - log_marginal_likelihood(fm, HyperParams.from_vector(v - e))) / (2 * e[i])
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


@pytest.mark.parametrize("spec,grid", CASES, ids=IDS)
def test_gradient_matches_dense_trace_formula(spec, grid, rng):
    # independent route: 1/2 (alpha^T dK alpha - tr(K^-1 dK)) with dK assembled
    # from the feature matrix and the weight derivatives
    X, y = data(spec, 30, rng)
    fm = build_feature_matrix(X, grid, spec, y, keep_Z=True)
    th = theta_for(spec)
    Z = fm.Z
    wd = weight_diag(grid, spec, th)
    K = np.real(th.sf2 * (Z * wd.h) @ Z.conj().T) + th.sn2 * np.eye(30)
    Kinv = np.linalg.inv(K)
    a = Kinv @ y
    dKs = [np.real(th.sf2 * (Z * dh) @ Z.conj().T) for dh in wd.dh]
    dKs += [np.real((Z * wd.h) @ Z.conj().T), np.eye(30)]
    ref = [0.5 * (a @ dK @ a - np.sum(Kinv * dK)) for dK in dKs]
    np.testing.assert_allclose(likelihood_gradient(fm, th).grad, ref, rtol=1e-8, atol=1e-10)


def test_trace_terms_identity(rng):
    # tr(K^-1 (K - sn2 I)) / sf2 * sf2 + sn2 tr(K^-1) = n
    X, y = data(G1, 50, rng)
    fm = build_feature_matrix(X, tensor_grid([8.0], [20]), G1, y)
    th = theta_for(G1)
    r = likelihood_gradient(fm, th)
    assert th.sf2 * r.trace_terms[-2] + th.sn2 * r.trace_terms[-1] == pytest.approx(50, rel=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X, y = data(G1, 25, rng)
    grid = tensor_grid([8.0], [15])
    th = theta_for(G1)
    perm = rng.permutation(25)
    a = build_feature_matrix(X, grid, G1, y)
    b = build_feature_matrix(X[perm], grid, G1, y[perm])
    la, lb = log_marginal_likelihood(a, th), log_marginal_likelihood(b, th)
    assert abs(la - lb) <= 1e-12 * max(1.0, abs(la))
    Xt = rng.uniform(-1, 1, (5, 1))
    np.testing.assert_allclose(predict(train(a, th), Xt), predict(train(b, th), Xt), rtol=0, atol=1e-10)


@pytest.mark.parametrize("n", [50, 200])
def test_paths_agree_on_stressed_weights(n, rng):
    # wide box, many nodes, short lengthscale: weights span 1e-8 .. 1
    grid = tensor_grid([8.0], [40])
    th = HyperParams([0.9], 1.0, 0.05)
    h = weight_diag(grid, G1, th).h
    assert h.min() / h.max() < 1e-8
    X, y = data(G1, n, rng)
    ne = build_feature_matrix(X, grid, G1, y)
    qr = build_feature_matrix(X, grid, G1, y, path="qr")
    a, b = likelihood_gradient(ne, th), likelihood_gradient(qr, th)
    assert a.value == pytest.approx(b.value, rel=1e-9)
    np.testing.assert_allclose(a.grad, b.grad, rtol=1e-6, atol=1e-6)
    Xt = np.linspace(-1, 1, 9)[:, None]
    np.testing.assert_allclose(predict(train(ne, th), Xt), predict(train(qr, th), Xt), atol=1e-8)


def test_woodbury_solution_satisfies_system(rng):
    X, y = data(G1, 40, rng)
    grid = tensor_grid([8.0], [16])
    th = theta_for(G1)
    fm = build_feature_matrix(X, grid, G1, y, keep_Z=True)
    m = train(fm, th)
    K = approx_kernel_matrix(G1, grid, th, X)
    assert np.linalg.norm(K @ m.alpha - y) <= 1e-10 * np.linalg.norm(y)
    np.testing.assert_allclose(m.w, fm.Z.conj().T @ m.alpha, atol=1e-9)


def test_directional_derivative(rng):
    spec, grid = CASES[1]
    X, y = data(spec, 40, rng)
    fm = build_feature_matrix(X, grid, spec, y)
    th = theta_for(spec)
    v = th.as_vector()
    d = rng.standard_normal(v.size) * v
    g = likelihood_gradient(fm, th).grad
    t = 1e-6
    fd = (log_marginal_likelihood(fm, HyperParams.from_vector(v + t * d))
          - log_marginal_likelihood(fm, HyperParams.from_vector(v - t * d))) / (2 * t)
    assert g @ d == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_targets_can_be_supplied_later(rng):
    X, y = data(G1, 20, rng)
    grid = tensor_grid([6.0], [10])
    th = theta_for(G1)
    bare = build_feature_matrix(X, grid, G1, keep_Z=True)
    with pytest.raises(InvalidArgument):
        log_marginal_likelihood(bare, th)
    full = build_feature_matrix(X, grid, G1, y)
    assert log_marginal_likelihood(bare, th, y) == pytest.approx(log_marginal_likelihood(full, th), rel=1e-12)


# ---------------------------------------------------------------------------
# dense oracle

def test_exact_single_point():
    th = HyperParams([1.0], 2.0, 0.5)
    r = exact_gpr(G1, th, [[0.3]], [1.0], [[0.3]])
    assert r.alpha[0] == pytest.approx(1 / 2.5)
    assert r.predictions[0] == pytest.approx(2.0 / 2.5)
    assert r.value == pytest.approx(-0.5 / 2.5 - 0.5 * math.log(2 * math.pi * 2.5))
    # d/dsf2 and d/dsn2 of -y^2/(2k) - log(k)/2 with k = sf2 + sn2
    k = 2.5
    assert r.grad[1] == pytest.approx(0.5 / k**2 - 0.5 / k)
    assert r.grad[2] == pytest.approx(0.5 / k**2 - 0.5 / k)


def test_exact_gradient_matches_finite_differences(rng):
    spec = KernelSpec("matern", 2, 2.5, anisotropic=True)
    X, y = data(spec, 30, rng)
    th = theta_for(spec)
    g = exact_gpr(spec, th, X, y).grad
    v = th.as_vector()
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = 1e-6 * v[i]
        fd = (exact_gpr(spec, HyperParams.from_vector(v + e), X, y, with_grad=False).value
              - exact_gpr(spec, HyperParams.from_vector(v - e), X, y, with_grad=False).value) / (2 * e[i])
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_noise_gradient_direction():
    # data generated with sn2 = 0.25: the sn2 gradient points towards it
    from glfgp.data import synth_1d
    for seed in range(5):
        ds = synth_1d(200, seed)
        lo = exact_gpr(G1, HyperParams([0.2], 1.0, 0.05), ds.X, ds.y).grad[-1]
        hi = exact_gpr(G1, HyperParams([0.2], 1.0, 1.0), ds.X, ds.y).grad[-1]
        assert lo > 0 > hi


def test_exact_capacity_guard():
    X = np.zeros((EXACT_MAX_N + 1, 1))
    with pytest.raises(CapacityError):
        exact_gpr(G1, HyperParams([1.0], 1.0, 1.0), X, np.zeros(len(X)))


def test_model_dump_round_trip(tmp_path, rng):
    X, y = data(G1, 30, rng)
    fm = build_feature_matrix(X, tensor_grid([7.0], [14]), G1, y)
    m = train(fm, theta_for(G1))
    p = tmp_path / "m.npz"
    save_gpr_model(m, p, y_offset=0.25)
    back, off = load_gpr_model(p)
    assert off == 0.25
    Xt = rng.uniform(-1, 1, (10, 1))
    np.testing.assert_array_equal(predict(back, Xt), predict(m, Xt))


def test_bad_dump_rejected(tmp_path):
    p = tmp_path / "x.npz"
    np.savez(p, format_version=np.array(99), kind=np.array("glf_model"))
    with pytest.raises(InvalidArgument):
        load_gpr_model(p)


@pytest.mark.slow
def test_cost_is_linear_in_n(rng):
    grid = tensor_grid([8.0], [30])
    th = theta_for(G1)

    def run(n):
        X, y = data(G1, n, rng)
        t0 = time.perf_counter()
        fm = build_feature_matrix(X, grid, G1, y)
        likelihood_gradient(fm, th)
        return time.perf_counter() - t0

    run(1000)
    t1 = min(run(20000) for _ in range(3))
    t2 = min(run(80000) for _ in range(3))
    assert t2 / t1 < 8
