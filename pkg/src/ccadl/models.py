"""Posterior models with full and minibatch potential gradients.

Every model exposes the negative log posterior ``potential``, its exact
gradient ``full_gradient`` and a noisy estimate ``minibatch_gradient`` that
rescales the likelihood part of the gradient by ``N / n``.  Per-sample
gradients returned alongside the noisy gradient are gradients of the
per-record log-likelihood only; the prior contributes no noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .data import Dataset, Minibatch, draw_minibatch


class ModelDomainError(ValueError):
    """Raised when a gradient is requested outside the parameter support."""


class Model:
    """Interface shared by all samplers.

    Subclasses set ``dim`` and ``N`` and implement the gradient methods.
    ``draw_batch`` produces whatever random input ``minibatch_gradient``
    consumes; for data-backed models that is a :class:`Minibatch`.
    """

    dim: int
    N: int
    n: int

    def potential(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def minibatch_gradient(self, theta, batch):
        """Return ``(grad, per_sample)`` for one batch.

        ``per_sample`` is an ``(n, dim)`` array of log-likelihood gradients,
        or ``None`` when the model has no notion of per-record terms.
        """
        raise NotImplementedError

    def draw_batch(self, rng: np.random.Generator, replace: bool = False):
        return draw_minibatch(rng, self.N, self.n, replace=replace)

    def in_support(self, theta: np.ndarray) -> bool:
        return True

    def initial_position(self) -> np.ndarray:
        return np.zeros(self.dim)

    def noise_covariance(self, theta: np.ndarray) -> np.ndarray:
        """Closed-form gradient-noise covariance, where the model knows it."""
        raise NotImplementedError(
            f"{type(self).__name__} has no closed-form noise covariance"
        )


# ---------------------------------------------------------------------------
# Normal-Gamma inference of a Gaussian mean and precision


@dataclass(frozen=True)
class NormalGammaParams:
    mu_N: float
    kappa_N: float
    alpha_N: float
    beta_N: float

    @property
    def gamma_mean(self) -> float:
        return self.alpha_N / self.beta_N

    @property
    def mu_scale(self) -> float:
        """Scale of the Student-t marginal of the mean."""
        return float(np.sqrt(self.beta_N / (self.alpha_N * self.kappa_N)))

    def mu_marginal(self):
        return stats.t(df=2.0 * self.alpha_N, loc=self.mu_N, scale=self.mu_scale)

    def gamma_marginal(self):
        return stats.gamma(a=self.alpha_N, scale=1.0 / self.beta_N)


def gaussian_posterior_params(data) -> NormalGammaParams:
    """Posterior of ``(mu, gamma)`` under the prior N(mu|0, 1/gamma) Gam(gamma|1, 1).

    With no data this returns the prior ``(0, 1, 1, 1)``.
    """
    x = np.asarray(data, dtype=float).ravel()
    N = x.size
    if N == 0:
        return NormalGammaParams(0.0, 1.0, 1.0, 1.0)
    xbar = x.mean()
    return NormalGammaParams(
        mu_N=N * xbar / (N + 1),
        kappa_N=1.0 + N,
        alpha_N=1.0 + N / 2.0,
        beta_N=1.0 + np.sum((x - xbar) ** 2) / 2.0 + N * xbar**2 / (2.0 * (1 + N)),
    )


def gaussian_marginal_density(params: NormalGammaParams, which: str, point):
    """Marginal posterior density of ``mu`` (Student-t) or ``gamma`` (Gamma).

    Vectorised over ``point``.  The ``gamma`` density is zero off its support.
    """
    point = np.asarray(point, dtype=float)
    if which == "mu":
        return params.mu_marginal().pdf(point)
    if which == "gamma":
        return np.where(point > 0, params.gamma_marginal().pdf(np.maximum(point, 0.0)), 0.0)
    raise ValueError(f"which must be 'mu' or 'gamma', got {which!r}")


class GaussianModel(Model):
    """Mean ``mu`` and precision ``gamma`` of 1-D Gaussian data.

    The parameter vector is ``theta = (mu, gamma)``.
    """

    dim = 2

    def __init__(self, data, n: int = 10):
        self.x = np.ascontiguousarray(np.asarray(data, dtype=float).ravel())
        self.N = self.x.size
        if not 1 <= n <= self.N:
            raise ValueError(f"minibatch size n={n} must lie in [1, {self.N}]")
        self.n = n
        self.posterior = gaussian_posterior_params(self.x)

    def in_support(self, theta) -> bool:
        return bool(np.all(np.isfinite(theta)) and theta[1] > 0)

    def initial_position(self) -> np.ndarray:
        # gamma = 0 is outside the support; start at the prior mean of gamma
        return np.array([0.0, 1.0])

    def _check(self, theta):
        if not theta[1] > 0:
            raise ModelDomainError(f"precision gamma={theta[1]!r} must be positive")

    def potential(self, theta) -> float:
        mu, gamma = theta
        if gamma <= 0:
            return np.inf
        N = self.N
        return float(
            -(N + 1) / 2.0 * np.log(gamma)
            + gamma * np.sum((self.x - mu) ** 2) / 2.0
            + gamma * mu**2 / 2.0
            + gamma
        )

    def per_sample_gradients(self, theta, x) -> np.ndarray:
        mu, gamma = theta
        r = x - mu
        return np.column_stack((gamma * r, 0.5 / gamma - 0.5 * r * r))

    def _prior_gradient(self, theta) -> np.ndarray:
        mu, gamma = theta
        return np.array([gamma * mu, 1.0 - 0.5 / gamma + 0.5 * mu * mu])

    def full_gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        self._check(theta)
        g = self.per_sample_gradients(theta, self.x)
        return -g.sum(axis=0) + self._prior_gradient(theta)

    def minibatch_gradient(self, theta, batch: Minibatch):
        theta = np.asarray(theta, dtype=float)
        self._check(theta)
        g = self.per_sample_gradients(theta, self.x[batch.indices])
        return -batch.scale * g.sum(axis=0) + self._prior_gradient(theta), g


def gaussian_minibatch_gradient(theta, batch: Minibatch, data):
    """Functional form of :meth:`GaussianModel.minibatch_gradient`."""
    x = np.asarray(data, dtype=float)
    return GaussianModel(x, n=batch.n).minibatch_gradient(theta, batch)


# ---------------------------------------------------------------------------
# Bayesian logistic regression with labels in {-1, +1}


class LogisticModel(Model):
    """Logistic likelihood with an isotropic standard normal prior on ``w``."""

    def __init__(self, dataset: Dataset, n: int = 100):
        if dataset.labels is None:
            raise ValueError("logistic regression needs labelled data")
        y = np.asarray(dataset.labels, dtype=float)
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be exactly -1 or +1")
        self.X = np.ascontiguousarray(dataset.features, dtype=float)
        self.y = y
        self.N, self.dim = self.X.shape
        if not 1 <= n <= self.N:
            raise ValueError(f"minibatch size n={n} must lie in [1, {self.N}]")
        self.n = n

    def potential(self, w) -> float:
        margins = self.y * (self.X @ w)
        return float(-np.sum(_log_sigmoid(margins)) + 0.5 * w @ w)

    def per_sample_gradients(self, w, idx=None) -> np.ndarray:
        X = self.X if idx is None else self.X[idx]
        y = self.y if idx is None else self.y[idx]
        # d/dw log sigmoid(y w.x) = y x sigmoid(-y w.x)
        return (y * special.expit(-y * (X @ w)))[:, None] * X

    def full_gradient(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return -self.per_sample_gradients(w).sum(axis=0) + w

    def minibatch_gradient(self, w, batch: Minibatch):
        w = np.asarray(w, dtype=float)
        g = self.per_sample_gradients(w, batch.indices)
        return -batch.scale * g.sum(axis=0) + w, g


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def logistic_minibatch_gradient(model: LogisticModel, w, batch: Minibatch):
    return model.minibatch_gradient(w, batch)


def logistic_test_loglik(weights, testset: Dataset) -> float:
    """Mean per-record predictive log-likelihood ``log sigmoid(y w.x)``."""
    X = np.asarray(testset.features, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    y = np.asarray(testset.labels, dtype=float)
    return float(np.mean(_log_sigmoid(y * (X @ np.asarray(weights, dtype=float)))))


# ---------------------------------------------------------------------------
# Harness model with gradient noise of known covariance


class QuadraticNoiseModel(Model):
    """Separable quadratic potential with injected Gaussian gradient noise.

    ``U(theta) = sum(precision * theta**2) / 2`` and each noisy gradient is
    ``grad U + sqrt(Sigma(theta) * mass) * R`` with ``R`` standard normal and
    the diagonal covariance ``Sigma(theta) = noise_const + noise_quad * theta**2``.
    A batch is the vector ``R``.
    """

    N = 1
    n = 1

    def __init__(self, dim=1, precision=1.0, noise_const=0.0, noise_quad=0.0, mass=1.0):
        self.dim = int(dim)
        shape = (self.dim,)
        self.precision = np.broadcast_to(np.asarray(precision, float), shape).copy()
        self.noise_const = np.broadcast_to(np.asarray(noise_const, float), shape).copy()
        self.noise_quad = np.broadcast_to(np.asarray(noise_quad, float), shape).copy()
        self.mass = np.broadcast_to(np.asarray(mass, float), shape).copy()
        if np.any(self.noise_const < 0) or np.any(self.noise_quad < 0):
            raise ValueError("noise covariance coefficients must be nonnegative")

    def potential(self, theta) -> float:
        return float(0.5 * np.sum(self.precision * np.asarray(theta) ** 2))

    def full_gradient(self, theta) -> np.ndarray:
        return self.precision * np.asarray(theta, dtype=float)

    def noise_covariance(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.noise_const + self.noise_quad * theta * theta

    def draw_batch(self, rng, replace=False):
        return rng.standard_normal(self.dim)

    def minibatch_gradient(self, theta, batch):
        theta = np.asarray(theta, dtype=float)
        noise = np.sqrt(self.noise_covariance(theta) * self.mass) * batch
        return self.precision * theta + noise, None
