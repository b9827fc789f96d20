import math

import numpy as np
import pytest
from scipy import integrate

from ccadl.data import Dataset, Minibatch, draw_minibatch
from ccadl.models import (
    GaussianModel,
    LogisticModel,
    ModelDomainError,
    NormalGammaParams,
    QuadraticNoiseModel,
    gaussian_marginal_density,
    gaussian_minibatch_gradient,
    gaussian_posterior_params,
    logistic_minibatch_gradient,
    logistic_test_loglik,
)


def central_diff(f, x, eps=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# --- Normal-Gamma posterior -------------------------------------------------


def test_posterior_params_empty_is_prior():
    assert gaussian_posterior_params([]) == NormalGammaParams(0.0, 1.0, 1.0, 1.0)


def test_posterior_params_hand_example():
    p = gaussian_posterior_params([1.0, -1.0])
    assert (p.mu_N, p.kappa_N, p.alpha_N, p.beta_N) == (0.0, 3.0, 2.0, 2.0)


def test_posterior_params_n100():
    x = np.random.default_rng(0).standard_normal(100)
    p = gaussian_posterior_params(x)
    assert p.alpha_N == 51 and p.kappa_N == 101
    assert p.mu_N == pytest.approx(100 * x.mean() / 101, rel=1e-14)


def _joint(mu, gamma, p):
    # N(mu | mu_N, 1/(kappa_N gamma)) Gam(gamma | alpha_N, rate beta_N), written out by hand
    a, b, k = p.alpha_N, p.beta_N, p.kappa_N
    normal = math.sqrt(k * gamma / (2 * math.pi)) * math.exp(-0.5 * k * gamma * (mu - p.mu_N) ** 2)
    gam = b**a / math.gamma(a) * gamma ** (a - 1) * math.exp(-b * gamma)
    return normal * gam


def test_marginals_match_quadrature_of_joint():
    p = gaussian_posterior_params([0.3, -1.2, 0.8, 2.0, -0.4])
    worst = 0.0
    for m in np.linspace(p.mu_N - 2, p.mu_N + 2, 9):
        ref, _ = integrate.quad(lambda g: _joint(m, g, p), 0, np.inf, epsabs=1e-13, epsrel=1e-12)
        worst = max(worst, abs(gaussian_marginal_density(p, "mu", m) - ref))
    for g in np.linspace(0.1, 4.0, 9):
        ref, _ = integrate.quad(lambda m: _joint(m, g, p), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
        worst = max(worst, abs(gaussian_marginal_density(p, "gamma", g) - ref))
    assert worst < 1e-8


def test_marginals_normalised_and_gamma_mode():
    x = np.random.default_rng(1).standard_normal(100)
    p = gaussian_posterior_params(x)
    grid = np.linspace(p.mu_N - 3, p.mu_N + 3, 200001)
    assert abs(np.trapezoid(gaussian_marginal_density(p, "mu", grid), grid) - 1) < 1e-6
    grid = np.linspace(0, 5, 500001)
    dens = gaussian_marginal_density(p, "gamma", grid)
    assert abs(np.trapezoid(dens, grid) - 1) < 1e-6
    mode = (p.alpha_N - 1) / p.beta_N
    assert gaussian_marginal_density(p, "gamma", mode) >= dens.max()


def test_gamma_density_zero_off_support():
    p = gaussian_posterior_params([0.5])
    assert np.all(gaussian_marginal_density(p, "gamma", [-1.0, 0.0]) == 0.0)


# --- Gaussian model gradients -------------------------------------------------


def test_gaussian_gradient_zero_mean_batch():
    x = np.concatenate([np.full(50, 1.0), np.full(50, -1.0)])
    batch = Minibatch(np.array([0, 1, 2, 3, 4, 50, 51, 52, 53, 54]), 100)
    g, per = gaussian_minibatch_gradient(np.array([0.0, 1.0]), batch, x)
    assert g[0] == 0.0
    assert per.shape == (10, 2)


def test_gaussian_gradient_hand_value():
    x = np.zeros(100)
    batch = Minibatch(np.arange(10), 100)
    g, _ = gaussian_minibatch_gradient(np.array([0.0, 1.0]), batch, x)
    assert g[1] == pytest.approx(-49.5, abs=1e-12)


def test_gaussian_full_batch_matches_finite_differences():
    rng = np.random.default_rng(2)
    model = GaussianModel(rng.standard_normal(100), n=100)
    for _ in range(10):
        th = np.array([rng.normal(0, 0.5), rng.uniform(0.3, 3.0)])
        full = model.full_gradient(th)
        assert rel_err(full, central_diff(model.potential, th)) < 1e-5
        mb, _ = model.minibatch_gradient(th, Minibatch(np.arange(100), 100))
        assert rel_err(mb, full) < 1e-12


def test_gaussian_domain_error_and_support():
    model = GaussianModel([0.0, 1.0], n=1)
    with pytest.raises(ModelDomainError):
        model.full_gradient(np.array([0.0, 0.0]))
    assert model.potential(np.array([0.0, -1.0])) == np.inf
    assert not model.in_support(np.array([0.0, -1e-9]))
    assert model.in_support(model.initial_position())


def _unbiased(model, theta, draws=10**5, seed=3):
    rng = np.random.default_rng(seed)
    gs = np.array([model.minibatch_gradient(theta, draw_minibatch(rng, model.N, model.n))[0]
                   for _ in range(draws)])
    se = gs.std(axis=0, ddof=1) / np.sqrt(draws)
    return np.abs(gs.mean(axis=0) - model.full_gradient(theta)) / se


def test_gaussian_minibatch_gradient_unbiased():
    model = GaussianModel(np.random.default_rng(4).standard_normal(100), n=10)
    assert np.all(_unbiased(model, np.array([0.2, 0.9])) < 3)


# --- logistic regression --------------------------------------------------------


def _toy_logistic(N=8, d=3, seed=5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    y = np.where(rng.random(N) < 0.5, -1.0, 1.0)
    return Dataset(X, y)


def test_logistic_single_sample_at_zero():
    ds = Dataset(np.array([[2.0, -4.0]]), np.array([-1.0]))
    model = LogisticModel(ds, n=1)
    _, per = model.minibatch_gradient(np.zeros(2), Minibatch(np.array([0]), 1))
    np.testing.assert_allclose(per[0], [-1.0, 2.0], rtol=0, atol=1e-15)


def test_logistic_prior_term():
    model = LogisticModel(_toy_logistic(), n=8)
    w = np.array([0.3, -1.0, 2.0])
    # with the data term removed the gradient is exactly w
    g = model.full_gradient(w) + model.per_sample_gradients(w).sum(axis=0)
    np.testing.assert_allclose(g, w, atol=1e-14)
    g0 = model.full_gradient(np.zeros(3)) + model.per_sample_gradients(np.zeros(3)).sum(axis=0)
    assert np.all(g0 == 0)


def test_logistic_finite_differences_small_instance():
    model = LogisticModel(_toy_logistic(), n=8)
    rng = np.random.default_rng(6)
    for _ in range(10):
        w = rng.normal(0, 1, 3)
        g, _ = logistic_minibatch_gradient(model, w, Minibatch(np.arange(8), 8))
        assert rel_err(g, central_diff(model.potential, w)) < 1e-5
        assert rel_err(g, model.full_gradient(w)) < 1e-12


def test_logistic_potential_stable_for_large_margins():
    model = LogisticModel(Dataset(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])), n=2)
    u = model.potential(np.array([800.0]))
    assert np.isfinite(u) and u == pytest.approx(800.0 + 0.5 * 800.0**2)


def test_logistic_minibatch_gradient_unbiased():
    model = LogisticModel(_toy_logistic(N=40, d=3, seed=7), n=5)
    assert np.all(_unbiased(model, np.array([0.5, -0.2, 0.1]), draws=50000) < 3)


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError, match="-1 or \\+1"):
        LogisticModel(Dataset(np.ones((2, 1)), np.array([0.0, 1.0])), n=1)


def test_test_loglik_values():
    ds = Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]]),
                 np.array([1.0, 1.0, -1.0, 1.0]))
    assert logistic_test_loglik(np.zeros(2), ds) == pytest.approx(-math.log(2), abs=1e-15)
    # margins y w.x with w = (1, -1): 1, -1, 0, 3 -> frozen hand value
    assert logistic_test_loglik(np.array([1.0, -1.0]), ds) == pytest.approx(
        -0.5920644767925333, abs=1e-12)


def test_test_loglik_saturates_on_separable_data():
    ds = Dataset(np.array([[1.0], [-1.0]]), np.array([1.0, -1.0]))
    vals = [logistic_test_loglik(np.array([s]), ds) for s in (1.0, 10.0, 100.0)]
    assert vals[0] < vals[1] < vals[2] < 0 and vals[2] > -1e-40


# --- injected-noise harness ---------------------------------------------------------


def test_quadratic_noise_model_moments():
    model = QuadraticNoiseModel(1, precision=2.0, noise_const=4.0, noise_quad=1.0)
    rng = np.random.default_rng(8)
    theta = np.array([1.5])
    gs = np.array([model.minibatch_gradient(theta, model.draw_batch(rng))[0] for _ in range(20000)])
    assert abs(gs.mean() - 3.0) < 3 * np.sqrt(6.25 / 20000)
    assert gs.var() == pytest.approx(4.0 + 1.0 * 2.25, rel=0.05)
    np.testing.assert_allclose(model.noise_covariance(theta), [6.25])
