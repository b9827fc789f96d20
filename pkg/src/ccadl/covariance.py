"""Running estimate of the per-sample gradient covariance.

Each step contributes the empirical covariance of the minibatch's per-sample
log-likelihood gradients; the estimate is their weighted running average,
and the covariance of the noisy potential gradient follows by scaling with
``N**2 / n``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

MODES = ("full", "diagonal")


def empirical_covariance(per_sample_grads, mode: str = "full") -> np.ndarray:
    """Unbiased (``n - 1``) covariance of the rows of ``per_sample_grads``."""
    g = np.asarray(per_sample_grads, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    n = g.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 per-sample gradients, got {n}")
    r = g - g.mean(axis=0)
    if mode == "diagonal":
        return np.einsum("ij,ij->j", r, r) / (n - 1)
    if mode == "full":
        return r.T @ r / (n - 1)
    raise ValueError(f"unknown covariance mode {mode!r}")


def harmonic(t: int) -> float:
    return 1.0 / t


class CovarianceEstimator:
    """Moving-average estimate ``I_t = (1 - k_t) I_{t-1} + k_t V_t``.

    ``schedule`` maps the 1-based update count to the weight ``k_t``; the
    default ``1/t`` makes the estimate the plain mean of all ``V`` seen.
    """

    def __init__(self, dim: int, mode: str = "diagonal",
                 schedule: Callable[[int], float] = harmonic):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.dim = dim
        self.mode = mode
        self.schedule = schedule
        self.t = 0
        self.clamped = 0
        shape = (dim, dim) if mode == "full" else (dim,)
        self.estimate = np.zeros(shape)

    def update(self, V) -> "CovarianceEstimator":
        V = np.asarray(V, dtype=float)
        if V.shape != self.estimate.shape:
            raise ValueError(
                f"{self.mode} estimator expects shape {self.estimate.shape}, got {V.shape}"
            )
        self.t += 1
        k = self.schedule(self.t)
        est = (1.0 - k) * self.estimate + k * V
        if self.mode == "full":
            est = 0.5 * (est + est.T)
        else:
            neg = est < 0
            if neg.any():
                self.clamped += int(neg.sum())
                est[neg] = 0.0
        self.estimate = est
        return self

    def observe(self, per_sample_grads) -> "CovarianceEstimator":
        return self.update(empirical_covariance(per_sample_grads, self.mode))

    def sigma_hat(self, N: int, n: int) -> np.ndarray:
        """Estimated covariance of the noisy potential gradient, ``N**2 I / n``."""
        if self.t == 0:
            raise RuntimeError("covariance estimator has not been updated yet")
        return (N * N / n) * self.estimate


def update(estimator: CovarianceEstimator, V) -> CovarianceEstimator:
    return estimator.update(V)


def sigma_hat(estimator: CovarianceEstimator, N: int, n: int) -> np.ndarray:
    return estimator.sigma_hat(N, n)
