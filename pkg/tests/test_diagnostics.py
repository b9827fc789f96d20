import warnings

import numpy as np
import pytest
from scipy import signal, stats

from ccadl.diagnostics import (
    autocorrelation,
    batch_means_se,
    default_grid,
    iact,
    kinetic_temperature,
    marginal_rmse,
)


def ar1(rho, n, seed):
    e = np.random.default_rng(seed).standard_normal(n)
    return signal.lfilter([1.0], [1.0, -rho], e)


def test_kinetic_temperature_simple():
    assert kinetic_temperature(np.zeros(4)) == 0.0
    assert kinetic_temperature(np.ones(6)) == 1.0
    assert kinetic_temperature(np.array([2.0, 0.0]), np.array([4.0, 1.0])) == 0.5
    p = np.array([1.0, -2.0, 0.5])
    assert kinetic_temperature(3 * p) == pytest.approx(9 * kinetic_temperature(p), rel=1e-15)
    with pytest.raises(ValueError):
        kinetic_temperature(np.ones(3), np.ones(2))


def test_kinetic_temperature_chi_square_moment():
    rng = np.random.default_rng(0)
    Nd, draws = 1000, 10**4
    temps = [kinetic_temperature(rng.standard_normal(Nd)) for _ in range(draws)]
    assert abs(np.mean(temps) - 1) < 3 * np.sqrt(2 / (Nd * draws))


def test_autocorrelation_lag_zero():
    rho = autocorrelation(np.random.default_rng(1).standard_normal(500))
    assert rho[0] == pytest.approx(1.0) and rho.shape == (500,)


def test_iact_white_noise():
    assert abs(iact(np.random.default_rng(2).standard_normal(10**5)).value - 1) < 0.1


def test_iact_ar1():
    assert iact(ar1(0.9, 10**6, 3)).value == pytest.approx(19.0, rel=0.10)


def test_iact_duplication_doubles():
    x = ar1(0.9, 2 * 10**5, 4)
    ratio = iact(np.repeat(x, 2)).value / iact(x).value
    assert ratio == pytest.approx(2.0, rel=0.1)


def test_iact_affine_invariance():
    x = ar1(0.5, 10**4, 5)
    assert abs(iact(-3.0 * x + 11.0).value - iact(x).value) < 1e-10


def test_iact_constant_and_short():
    res = iact(np.full(200, 2.5))
    assert res.value == 1.0 and res.degenerate
    with pytest.raises(ValueError):
        iact(np.zeros(99))


def test_batch_means_white_noise_and_ar1():
    x = np.random.default_rng(6).standard_normal(10**5)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(10**5), rel=0.4)
    y = ar1(0.9, 10**6, 7)
    # stationary variance 1/(1 - rho^2), inflated by the IACT 19
    expect = np.sqrt(19 / (1 - 0.81) / 10**6)
    assert batch_means_se(y) == pytest.approx(expect, rel=0.4)


def test_batch_means_errors():
    with pytest.raises(ValueError):
        batch_means_se(np.ones(15), batches=20)
    with pytest.raises(ValueError):
        batch_means_se(np.ones(100), batches=5)


def test_rmse_exact_samples_small():
    d = stats.norm(1.0, 2.0)
    x = d.rvs(size=10**6, random_state=8)
    rmse = marginal_rmse(x, d.pdf, default_grid(1.0, 2.0))
    assert 0 < rmse < 0.01 * d.pdf(1.0)


def test_rmse_spike_positive_pure_and_permutation_invariant():
    d = stats.norm()
    edges = default_grid(0.0, 1.0)
    spike = marginal_rmse(np.zeros(10**4), d.pdf, edges)
    assert spike > 0.1
    x = d.rvs(size=10**4, random_state=9)
    a = marginal_rmse(x, d.pdf, edges)
    assert a == marginal_rmse(x, d.pdf, edges)
    assert a == marginal_rmse(np.random.default_rng(0).permutation(x), d.pdf, edges)


def test_rmse_flags_mass_outside_grid():
    d = stats.norm()
    x = np.concatenate([d.rvs(size=10**4, random_state=10), np.full(200, 50.0)])
    with pytest.warns(RuntimeWarning, match="outside the density grid"):
        marginal_rmse(x, d.pdf, default_grid(0.0, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        marginal_rmse(x[:10**4], d.pdf, default_grid(0.0, 1.0))


def test_default_grid():
    e = default_grid(2.0, 0.5)
    assert e.size == 101 and e[0] == -0.5 and e[-1] == 4.5
