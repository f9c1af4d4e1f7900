"""Tests for the latent-function machinery: kernels, subspace shrinkage,
conjugate draws, and the hyperparameter random walk."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import stats
from scipy.linalg import qr

from bnpforecast.gp_core import (
    AdaptiveStep,
    GpState,
    KernelHyper,
    SingularKernelError,
    SubspaceWeight,
    chol_psd,
    gaussian_kernel_matrix,
    gp_predict,
    kernel_from_sqdist,
    projection_matrix,
    sample_f,
    sample_kernel_hyper,
    sample_tau2,
    squared_distances,
    subspace_kernel,
    tau_prior_logpdf,
)


# ---------------------------------------------------------------------------
# kernel construction


def test_kernel_diagonal_is_amplitude():
    X = np.array([[0.0, 1.0], [0.0, 1.0], [2.0, -1.0]])  # duplicate rows
    K = gaussian_kernel_matrix(X, KernelHyper(0.5, 0.3))
    assert_allclose(np.diag(K), 0.5)
    # the duplicate pair also hits the amplitude off the diagonal
    assert K[0, 1] == 0.5


def test_kernel_closed_form_entry():
    # k(x, x') = xi * exp(-phi/2 * ||x-x'||^2); at xi=0.5, phi=0.5, d^2=4
    X = np.array([[0.0], [2.0]])
    K = gaussian_kernel_matrix(X, KernelHyper(0.5, 0.5))
    assert_allclose(K[0, 1], 0.5 * np.exp(-1.0), rtol=1e-14)
    assert_allclose(K[0, 1], 0.18393972058572117, rtol=1e-14)


def test_kernel_flat_limit():
    # phi -> 0 makes every entry the amplitude
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    K = gaussian_kernel_matrix(X, KernelHyper(0.4, 1e-12))
    assert_allclose(K, 0.4, rtol=1e-9)


def test_squared_distances_cross():
    X = np.array([[0.0], [3.0]])
    Z = np.array([[1.0], [1.0], [-2.0]])
    D2 = squared_distances(X, Z)
    assert_allclose(D2, [[1.0, 1.0, 4.0], [4.0, 4.0, 25.0]])


@settings(max_examples=25, deadline=None)
@given(
    xi=st.floats(0.01, 0.99),
    phi=st.floats(0.01, 0.99),
    seed=st.integers(0, 10_000),
)
def test_kernel_symmetric_psd(xi, phi, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 4))
    K = gaussian_kernel_matrix(X, KernelHyper(xi, phi))
    assert_allclose(K, K.T, atol=1e-14)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * xi


def test_kernel_hyper_validation():
    KernelHyper(1e-6, 1.0 - 1e-6)  # interior is fine
    for bad in [(0.0, 0.5), (0.5, 0.0), (1.0, 0.5), (0.5, 1.0), (-0.1, 0.5)]:
        with pytest.raises(ValueError, match="kernel hyperparameters"):
            KernelHyper(*bad)


def test_kernel_from_sqdist_matches_matrix_off_diagonal():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((5, 2))
    h = KernelHyper(0.8, 0.6)
    K = kernel_from_sqdist(squared_distances(X), h)
    K2 = gaussian_kernel_matrix(X, h)
    off = ~np.eye(5, dtype=bool)
    assert_allclose(K[off], K2[off], rtol=1e-14)


# ---------------------------------------------------------------------------
# shrinkage weight and projector


def test_subspace_weight_omega():
    assert SubspaceWeight(1.0).omega == 0.5
    assert_allclose(SubspaceWeight(1e-8).omega, 1.0, rtol=1e-7)
    w = SubspaceWeight(2.5)
    assert_allclose((1.0 - w.omega) / w.omega, 2.5, rtol=1e-12)
    with pytest.raises(ValueError):
        SubspaceWeight(0.0)


def test_projection_onto_constant_column():
    X = np.ones((7, 1))
    proj = projection_matrix(X)
    y = np.arange(7.0)
    assert_allclose(proj.Phi0 @ y, np.full(7, y.mean()), atol=1e-12)
    assert proj.basis_rank == 1


def test_projection_orthonormal_basis():
    rng = np.random.default_rng(2)
    Q = qr(rng.standard_normal((8, 3)), mode="economic")[0]
    proj = projection_matrix(Q)
    assert_allclose(proj.Phi0, Q @ Q.T, atol=1e-12)


def test_projection_idempotent_symmetric():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((12, 4))
    P = projection_matrix(X).Phi0
    assert_allclose(P @ P, P, atol=1e-10)
    assert_allclose(P, P.T, atol=1e-12)
    assert_allclose(np.trace(P), 4.0, atol=1e-10)


def test_projection_rejects_collinear_basis():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(10)
    X = np.column_stack([x, 2.0 * x, rng.standard_normal(10)])
    with pytest.raises(ValueError, match="rank-deficient"):
        projection_matrix(X)


def test_projection_switches_to_principal_components():
    # with K >= T the basis becomes leading PC scores, capped at T-1
    rng = np.random.default_rng(5)
    X = rng.standard_normal((5, 9))
    proj = projection_matrix(X)
    assert proj.basis_rank == 4
    assert proj.basis.shape == (5, 4)
    assert_allclose(proj.Phi0 @ proj.basis, proj.basis, atol=1e-10)


def test_projection_pc_rank_cap():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((30, 40))
    assert projection_matrix(X).basis_rank == 6
    assert projection_matrix(X, pc_rank=2).basis_rank == 2


# ---------------------------------------------------------------------------
# subspace-shrunk kernel


def test_subspace_kernel_two_by_two_oracle():
    # K = I, Phi0 = diag(1,0), tau2 = 1:
    # K1 = (I + diag(0,1))^{-1} = diag(1, 1/2)
    K = np.eye(2)
    P = np.diag([1.0, 0.0])
    K1 = subspace_kernel(K, P, 1.0)
    assert_allclose(K1, np.diag([1.0, 0.5]), atol=1e-12)


def test_subspace_kernel_large_tau2_recovers_kernel():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((8, 3))
    K = gaussian_kernel_matrix(X, KernelHyper(0.7, 0.4))
    P = projection_matrix(X).Phi0
    K1 = subspace_kernel(K, P, 1e8)
    assert np.max(np.abs(K1 - K)) < 1e-4 * np.max(np.abs(K))


def test_subspace_kernel_full_projector_is_identity_map():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((6, 2))
    K = gaussian_kernel_matrix(X, KernelHyper(0.6, 0.5))
    K1 = subspace_kernel(K, np.eye(6), 0.01)
    assert_allclose(K1, K, atol=1e-10)


def test_subspace_kernel_matches_direct_inverse():
    rng = np.random.default_rng(9)
    T = 12
    X = rng.standard_normal((T, 3))
    K = gaussian_kernel_matrix(X, KernelHyper(0.75, 0.35))
    P = projection_matrix(X).Phi0
    tau2 = 0.7
    direct = np.linalg.inv(np.linalg.inv(K) + (np.eye(T) - P) / tau2)
    assert_allclose(subspace_kernel(K, P, tau2), direct, atol=1e-9)


def test_subspace_kernel_accepts_projection_object():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((7, 2))
    K = gaussian_kernel_matrix(X, KernelHyper(0.5, 0.5))
    proj = projection_matrix(X)
    assert_allclose(
        subspace_kernel(K, proj, 0.3), subspace_kernel(K, proj.Phi0, 0.3), atol=1e-12
    )
    with pytest.raises(ValueError, match="tau2"):
        subspace_kernel(K, proj, 0.0)


def test_chol_psd_failure_modes():
    with pytest.raises(SingularKernelError):
        chol_psd(np.full((3, 3), np.nan))
    with pytest.raises(SingularKernelError):
        chol_psd(-np.eye(3))
    c = chol_psd(np.eye(3))
    assert_allclose(np.tril(c[0]) @ np.tril(c[0]).T, np.eye(3), atol=1e-12)
    # rank-deficient PSD succeeds through the jitter ladder
    M = np.ones((4, 4))
    c = chol_psd(M)
    L = np.tril(c[0])
    assert np.max(np.abs(L @ L.T - M)) < 1e-3


# ---------------------------------------------------------------------------
# latent-function full conditional


def _toy_f_problem():
    X = np.array([[0.0], [2.0], [4.0]])
    K1 = gaussian_kernel_matrix(X, KernelHyper(0.9, 0.9))
    s = np.array([0.3, 0.5, 0.2])
    y = np.array([0.4, -0.2, 0.9])
    return K1, s, y


def test_sample_f_moments_match_dense_oracle():
    K1, s, y = _toy_f_problem()
    Minv = np.linalg.inv(K1 + np.diag(s))
    fbar_o = K1 @ Minv @ y
    Vbar_o = K1 - K1 @ Minv @ K1
    _, fbar, Vbar = sample_f(K1, s, y, None, np.random.default_rng(0))
    assert_allclose(fbar, fbar_o, atol=1e-10)
    assert_allclose(Vbar, Vbar_o, atol=1e-10)


def test_sample_f_mu_defaults_to_zero():
    K1, s, y = _toy_f_problem()
    d1 = sample_f(K1, s, y, None, np.random.default_rng(42))
    d2 = sample_f(K1, s, y, np.zeros(3), np.random.default_rng(42))
    assert_allclose(d1[0].f, d2[0].f, atol=0)


def test_sample_f_prior_mean_limit():
    # huge error variance pushes the conditional mean to the prior mean
    K1, s, y = _toy_f_problem()
    _, fbar, _ = sample_f(K1, np.full(3, 1e12), y, None, np.random.default_rng(1))
    assert np.max(np.abs(fbar)) < 1e-9


def test_sample_f_interpolation_limit():
    K1, s, y = _toy_f_problem()
    _, fbar, _ = sample_f(K1, np.full(3, 1e-12), y, None, np.random.default_rng(1))
    assert_allclose(fbar, y, atol=1e-5)


def test_sample_f_degenerate_covariance_returns_mean():
    # a zero prior covariance collapses the draw onto the mean without
    # touching the generator
    rng = np.random.default_rng(3)
    state, fbar, Vbar = sample_f(np.zeros((3, 3)), np.ones(3), np.ones(3), None, rng)
    assert_allclose(state.f, fbar, atol=0)
    assert_allclose(Vbar, 0.0, atol=0)
    assert rng.uniform() == np.random.default_rng(3).uniform()


def test_sample_f_draw_distribution():
    K1, s, y = _toy_f_problem()
    Minv = np.linalg.inv(K1 + np.diag(s))
    fbar = K1 @ Minv @ y
    Vbar = K1 - K1 @ Minv @ K1
    rng = np.random.default_rng(5)
    sims = np.array([sample_f(K1, s, y, None, rng)[0].f for _ in range(4000)])
    assert np.max(np.abs(sims.mean(axis=0) - fbar)) < 0.05
    assert np.max(np.abs(np.cov(sims.T) - Vbar)) < 0.05


def test_sample_f_rejects_bad_variances():
    K1, _, y = _toy_f_problem()
    with pytest.raises(ValueError, match="positive"):
        sample_f(K1, np.array([0.3, -0.1, 0.2]), y, None, np.random.default_rng(0))


def test_gp_state_requires_finite_vector():
    with pytest.raises(ValueError):
        GpState(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        GpState(np.ones((2, 2)))


# ---------------------------------------------------------------------------
# shrinkage-scale slice update


def test_tau_prior_matches_half_cauchy():
    # at d0 = d1 = 1/2 log-density differences agree with the half-Cauchy
    for t1, t2 in [(0.5, 1.0), (1.0, 2.0), (0.5, 2.0)]:
        got = tau_prior_logpdf(t1) - tau_prior_logpdf(t2)
        want = stats.halfcauchy.logpdf(t1) - stats.halfcauchy.logpdf(t2)
        assert_allclose(got, want, atol=1e-12)
    assert tau_prior_logpdf(0.0) == -np.inf
    assert tau_prior_logpdf(-1.0) == -np.inf
    # general exponents: (2 d1 - 1) log tau - (d0 + d1) log(1 + tau^2)
    assert_allclose(
        tau_prior_logpdf(2.0, d0=0.5, d1=1.0),
        np.log(2.0) - 1.5 * np.log(5.0),
        rtol=1e-12,
    )


def test_tau2_chain_stationary_distribution():
    # the slice update leaves pi(zeta) ∝ zeta^(a-1) e^(-b zeta) (1+zeta)^(-1)
    # invariant (zeta = 1/tau2); compare a long chain against the
    # quadrature CDF of that density
    rng = np.random.default_rng(31)
    T, k = 20, 3
    X = rng.standard_normal((T, k))
    proj = projection_matrix(X)
    f = rng.standard_normal(T) * 0.8
    qf = float(f @ f - f @ (proj.Phi0 @ f))
    shape = 0.5 + 0.5 * (T - k)
    rate = 0.5 * qf

    n = 100_000
    draws = np.empty(n)
    tau2 = 1.0
    r = np.random.default_rng(7)
    for i in range(n):
        tau2 = sample_tau2(f, proj, tau2, r)
        draws[i] = 1.0 / tau2

    hi = stats.gamma.ppf(1 - 1e-12, shape, scale=1.0 / rate) * 2
    grid = np.linspace(1e-12, hi, 200_001)
    logp = (shape - 1) * np.log(grid) - rate * grid - np.log1p(grid)
    p = np.exp(logp - logp.max())
    cdf = np.concatenate(
        [[0.0], np.cumsum((p[1:] + p[:-1]) * 0.5 * np.diff(grid))]
    )
    cdf /= cdf[-1]
    qs = np.linspace(0.005, 0.995, 99)
    qgrid = np.interp(qs, cdf, grid)
    ecdf = np.searchsorted(np.sort(draws), qgrid) / n
    assert np.max(np.abs(ecdf - qs)) < 0.02


def test_tau2_degenerate_quadratic_form_warns():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((10, 2))
    proj = projection_matrix(X)
    f = proj.Phi0 @ rng.standard_normal(10)  # exactly inside the subspace
    with pytest.warns(UserWarning, match="shrinkage subspace"):
        tau2 = sample_tau2(f, proj, 1.0, np.random.default_rng(0))
    assert np.isfinite(tau2) and tau2 > 0.0


def test_tau2_input_validation():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((4, 2))
    proj = projection_matrix(X)
    with pytest.raises(ValueError, match="basis_rank"):
        sample_tau2(np.ones(4), proj.Phi0, 1.0, rng)
    with pytest.raises(ValueError, match="exceed"):
        sample_tau2(np.ones(2), proj, 1.0, rng)
    # a bare projector works once the rank is supplied
    f = rng.standard_normal(4)
    t = sample_tau2(f, proj.Phi0, 1.0, np.random.default_rng(1), basis_rank=2)
    assert t > 0.0


def test_tau2_accepts_gp_state():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((8, 2))
    proj = projection_matrix(X)
    f = rng.standard_normal(8)
    t1 = sample_tau2(GpState(f), proj, 0.5, np.random.default_rng(2))
    t2 = sample_tau2(f, proj, 0.5, np.random.default_rng(2))
    assert t1 == t2


# ---------------------------------------------------------------------------
# kernel hyperparameter random walk


def test_hyper_update_reports_loglik_of_returned_state():
    rng = np.random.default_rng(20)
    ll = lambda a, b: -3.0 * (a - 0.4) ** 2 - 2.0 * (b - 0.7) ** 2
    h = KernelHyper(0.5, 0.5)
    llc = ll(h.xi, h.phi)
    seen_accept = seen_reject = False
    for _ in range(200):
        h, accepted, llc = sample_kernel_hyper(h, ll, rng, step=0.8, loglik_current=llc)
        assert_allclose(llc, ll(h.xi, h.phi), atol=1e-12)
        seen_accept |= accepted
        seen_reject |= not accepted
    assert seen_accept and seen_reject


def test_hyper_update_caching_is_transparent():
    ll = lambda a, b: 5.0 * a * b
    h = KernelHyper(0.3, 0.6)
    out1 = sample_kernel_hyper(h, ll, np.random.default_rng(9), step=0.5)
    out2 = sample_kernel_hyper(
        h, ll, np.random.default_rng(9), step=0.5, loglik_current=ll(h.xi, h.phi)
    )
    assert out1[0] == out2[0] and out1[1] == out2[1]
    assert_allclose(out1[2], out2[2], atol=0)


def test_hyper_chain_uniform_under_flat_likelihood():
    # flat log likelihood + U(0,1) priors: the chain's marginals must be
    # uniform on the unit interval
    flat = lambda a, b: 0.0
    h = KernelHyper(0.5, 0.5)
    rng = np.random.default_rng(11)
    ll = 0.0
    xs = np.empty(20_000)
    ps = np.empty(20_000)
    for i in range(20_000):
        h, _, ll = sample_kernel_hyper(h, flat, rng, step=1.5, loglik_current=ll)
        xs[i], ps[i] = h.xi, h.phi
    xs, ps = xs[1000:], ps[1000:]
    for draws in (xs, ps):
        assert abs(draws.mean() - 0.5) < 0.03
        for q in (0.25, 0.5, 0.75):
            assert abs(np.mean(draws <= q) - q) < 0.04


def test_hyper_chain_follows_likelihood_pull():
    ll = lambda a, b: 80.0 * (a + b)
    h = KernelHyper(0.5, 0.5)
    rng = np.random.default_rng(21)
    llc = ll(0.5, 0.5)
    tail = []
    for i in range(3000):
        h, _, llc = sample_kernel_hyper(h, ll, rng, step=1.0, loglik_current=llc)
        if i >= 2000:
            tail.append(h.xi)
    assert np.mean(tail) > 0.85


def test_adaptive_step_updates():
    s = AdaptiveStep(step=1.0, target=0.3, window=25)
    for _ in range(25):
        s.update(True)
    assert_allclose(s.step, np.exp(0.7), rtol=1e-12)
    for _ in range(25):
        s.update(False)
    assert_allclose(s.step, np.exp(0.7) * np.exp(-0.3), rtol=1e-12)
    s.freeze()
    frozen = s.step
    for _ in range(50):
        s.update(True)
    assert s.step == frozen


def test_adaptive_step_reaches_target_band():
    target_ll = lambda a, b: -8.0 * ((a - 0.3) ** 2 + (b - 0.6) ** 2)
    h = KernelHyper(0.5, 0.5)
    step = AdaptiveStep(step=0.3, target=0.3, window=25)
    rng = np.random.default_rng(17)
    ll = target_ll(0.5, 0.5)
    for _ in range(5000):
        h, a, ll = sample_kernel_hyper(h, target_ll, rng, step=step.step, loglik_current=ll)
        step.update(a)
    step.freeze()
    acc = 0
    for _ in range(4000):
        h, a, ll = sample_kernel_hyper(h, target_ll, rng, step=step.step, loglik_current=ll)
        acc += a
    assert 0.15 < acc / 4000 < 0.5


# ---------------------------------------------------------------------------
# prediction


def test_gp_predict_interpolates_training_point():
    rng = np.random.default_rng(22)
    X = rng.standard_normal((6, 2))
    f = rng.standard_normal(6)
    mean, var = gp_predict(X, f, KernelHyper(0.8, 0.5), None, X[2])
    assert_allclose(mean, f[2], atol=1e-7)
    assert var < 1e-7


def test_gp_predict_matches_dense_conditional():
    rng = np.random.default_rng(31)
    T = 10
    X = rng.standard_normal((T, 3))
    f = rng.standard_normal(T)
    x_new = rng.standard_normal(3)
    hyp = KernelHyper(0.7, 0.3)
    tau2 = 0.7

    Xa = np.vstack([X, x_new])
    Ka = gaussian_kernel_matrix(Xa, hyp)
    Q = qr(Xa, mode="economic")[0]
    K1a = np.linalg.inv(np.linalg.inv(Ka) + (np.eye(T + 1) - Q @ Q.T) / tau2)
    mean_o = K1a[:T, T] @ np.linalg.solve(K1a[:T, :T], f)
    var_o = K1a[T, T] - K1a[:T, T] @ np.linalg.solve(K1a[:T, :T], K1a[:T, T])

    mean, var = gp_predict(X, f, hyp, tau2, x_new)
    assert_allclose(mean, mean_o, atol=1e-10)
    assert_allclose(var, var_o, atol=1e-10)


def test_gp_predict_no_shrinkage_matches_dense_conditional():
    rng = np.random.default_rng(32)
    T = 10
    X = rng.standard_normal((T, 3))
    f = rng.standard_normal(T)
    x_new = rng.standard_normal(3)
    hyp = KernelHyper(0.6, 0.4)
    Ka = gaussian_kernel_matrix(np.vstack([X, x_new]), hyp)
    mean_o = Ka[:T, T] @ np.linalg.solve(Ka[:T, :T], f)
    var_o = Ka[T, T] - Ka[:T, T] @ np.linalg.solve(Ka[:T, :T], Ka[:T, T])
    mean, var = gp_predict(X, f, hyp, None, x_new)
    assert_allclose(mean, mean_o, atol=1e-10)
    assert_allclose(var, var_o, atol=1e-10)


def test_gp_predict_tiny_tau2_hits_regression_plane():
    # when the latent values lie in the basis span and the shrinkage scale
    # vanishes, prediction collapses onto the linear fit
    rng = np.random.default_rng(31)
    T, K = 30, 3
    X = rng.standard_normal((T, K))
    beta = np.array([1.2, -0.7, 0.4])
    x_new = rng.standard_normal(K)
    mean, var = gp_predict(X, X @ beta, KernelHyper(0.6, 0.4), 1e-8, x_new)
    assert_allclose(mean, x_new @ beta, rtol=1e-3)
    assert var < 1e-6


def test_gp_predict_large_tau2_matches_unshrunk():
    rng = np.random.default_rng(33)
    X = rng.standard_normal((8, 2))
    f = rng.standard_normal(8)
    x_new = rng.standard_normal(2)
    hyp = KernelHyper(0.5, 0.5)
    m0, v0 = gp_predict(X, f, hyp, None, x_new)
    m1, v1 = gp_predict(X, f, hyp, 1e10, x_new)
    assert_allclose(m1, m0, atol=1e-4)
    assert_allclose(v1, v0, atol=1e-4)


def test_gp_predict_accepts_state_and_custom_basis():
    rng = np.random.default_rng(34)
    X = rng.standard_normal((9, 2))
    f = rng.standard_normal(9)
    x_new = rng.standard_normal(2)
    basis = rng.standard_normal((9, 3))
    basis_new = rng.standard_normal(3)
    hyp = KernelHyper(0.7, 0.6)
    m1, v1 = gp_predict(X, GpState(f), hyp, 0.5, x_new, basis=basis, basis_new=basis_new)
    m2, v2 = gp_predict(X, f, hyp, 0.5, x_new, basis=basis, basis_new=basis_new)
    assert (m1, v1) == (m2, v2)
    # a different basis changes the shrinkage target
    m3, _ = gp_predict(X, f, hyp, 0.5, x_new)
    assert m3 != m1
