"""Experiment drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, synth_gaussian, synth_two_class
from .diagnostics import batch_means_se, default_grid, summarize
from .models import GaussianModel, LogisticModel, QuadraticNoiseModel, logistic_test_loglik
from .samplers import ChainAbort, SamplerConfig, hmc_reference, make_streams, run_chain

GAUSSIAN_NAMES = ("mu", "gamma")


def gaussian_data(seed: int, N: int = 100) -> np.ndarray:
    return synth_gaussian(make_streams(seed).data, N).features.ravel()


def gaussian_run(method: str, config: SamplerConfig, steps: int, burnin: int, thin: int,
                 seed: int, n: int = 10, data=None):
    """Run one chain on Normal-Gamma inference; return ``(model, log, report)``."""
    x = gaussian_data(seed) if data is None else np.asarray(data, dtype=float).ravel()
    model = GaussianModel(x, n=n)
    log = run_chain(method, model, config, steps, burnin, thin, make_streams(seed))
    post = model.posterior
    mu_d, g_d = post.mu_marginal(), post.gamma_marginal()
    densities = {"mu": mu_d.pdf, "gamma": g_d.pdf}
    grids = {"mu": default_grid(mu_d.mean(), mu_d.std()), "gamma": default_grid(g_d.mean(), g_d.std())}
    report = summarize(log, GAUSSIAN_NAMES, densities, grids)
    return model, log, report


# ---------------------------------------------------------------------------
# logistic regression


class TestLogLikTracker:
    """Running posterior mean of ``w`` and its test log-likelihood.

    Called after every step; every ``every`` steps it scores the running
    mean of all positions so far on the test set.
    """

    __test__ = False

    def __init__(self, testset: Dataset, N: int, n: int, every: int):
        self.testset = testset
        self.N, self.n, self.every = N, n, every
        self.total = None
        self.count = 0
        self.steps, self.loglik = [], []

    def __call__(self, t, state):
        self.total = state.theta.copy() if self.total is None else self.total + state.theta
        self.count += 1
        if t % self.every == 0:
            self.steps.append(t)
            self.loglik.append(logistic_test_loglik(self.total / self.count, self.testset))

    @property
    def passes(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=float) * self.n / self.N

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.count


def two_class_split(seed: int, N: int = 2000, d: int = 10, separation: float = 2.0,
                    N_test: int = 1000, scales=None):
    rng = make_streams(seed).data
    train = synth_two_class(rng, N, d, separation, scales)
    test = synth_two_class(rng, N_test, d, separation, scales)
    return train, test


@dataclass
class LogregResult:
    method: str
    h: float
    A: float
    passes: np.ndarray
    loglik: np.ndarray
    diverged: bool
    mean: np.ndarray | None
    log: object = field(default=None, repr=False)

    def passes_to_reach(self, target: float, tol: float = 0.01) -> float:
        """First pass count at which the test log-likelihood is within ``tol`` of ``target``."""
        hit = np.flatnonzero(np.abs(self.loglik - target) <= tol)
        return float(self.passes[hit[0]]) if hit.size else np.inf


def logreg_run(method: str, train: Dataset, test: Dataset, config: SamplerConfig, steps: int,
               seed: int, n: int = 100, every: int | None = None, burnin: int = 0,
               thin: int = 1) -> LogregResult:
    model = LogisticModel(train, n=n)
    every = every or max(1, model.N // n)
    tracker = TestLogLikTracker(test, model.N, n, every)
    diverged = False
    try:
        log = run_chain(method, model, config, steps, burnin, thin, make_streams(seed), sinks=[tracker])
    except ChainAbort as exc:
        log, diverged = exc.log, True
    ll = np.asarray(tracker.loglik, dtype=float)
    if diverged or not np.all(np.isfinite(ll)):
        diverged = True
    return LogregResult(method, config.h, config.A, tracker.passes, ll, diverged,
                        None if tracker.total is None else tracker.mean, log)


def logreg_reference(train: Dataset, test: Dataset, seed: int, samples: int = 2000,
                     burnin: int = 500, L: int = 20, eps: float | None = None):
    """Posterior mean from full-gradient HMC and its test log-likelihood."""
    model = LogisticModel(train, n=train.N)
    if eps is None:
        # leapfrog stable well inside 2/sqrt(max curvature); curvature <= lambda_max(X^T X)/4 + 1
        lam = np.linalg.eigvalsh(model.X.T @ model.X / 4.0).max() + 1.0
        eps = 0.5 / np.sqrt(lam)
    log = hmc_reference(model, L, eps, make_streams(seed).noise, samples, burnin=burnin)
    mean = log.samples.mean(axis=0)
    return mean, logistic_test_loglik(mean, test), log


# ---------------------------------------------------------------------------
# stationary-moment self checks with injected noise


@dataclass
class Check:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: measured {self.measured:.6g}, "
                f"expected {self.expected:.6g} +- {self.tolerance:.3g}")


def moment_checks(steps: int = 10**6, seed: int = 1, h: float = 0.01, A: float = 1.0,
                  sigma2: float = 4.0, c: float = 25.0, se_mult: float = 3.0,
                  temp_rtol: float = 0.05, var_rtol: float = 0.05,
                  ccadl_covariance: str = "exact") -> list[Check]:
    """Thermostat moments on 1-D quadratic potentials with injected noise.

    * SGNHT, constant noise ``sigma2``: mean ``xi`` equals ``A + h sigma2 / 2``.
    * CCAdL, noise ``c (1 + theta^2)`` given exactly: mean ``xi`` equals ``A``,
      mean kinetic temperature and ``Var(theta)`` equal 1, and the kinetic
      temperature is uncorrelated with ``theta^2``.

    The thermostat pins the mean kinetic temperature whether or not the
    damping term is present; without it the extra noise heats the tails,
    which shows up in ``xi`` and in the temperature/position covariance.
    ``ccadl_covariance='none'`` strips the damping term (fault injection).
    """
    checks = []
    cfg = SamplerConfig(h=h, A=A, covariance="exact")
    log = run_chain("sgnht", QuadraticNoiseModel(1, noise_const=sigma2), cfg, steps, 0, 1, seed)
    target = A + h * sigma2 / 2.0
    se = batch_means_se(log.xi)
    checks.append(Check("SGNHT mean xi (constant noise)", log.xi.mean(), target, se_mult * se,
                        abs(log.xi.mean() - target) <= se_mult * se))

    quad = QuadraticNoiseModel(1, noise_const=c, noise_quad=c)
    log = run_chain("ccadl", quad, SamplerConfig(h=h, A=A, covariance=ccadl_covariance),
                    steps, 0, 1, seed)
    se = batch_means_se(log.xi)
    checks.append(Check("CCAdL mean xi (theta-dependent noise)", log.xi.mean(), A, se_mult * se,
                        abs(log.xi.mean() - A) <= se_mult * se))
    temp = log.temperature.mean()
    checks.append(Check("CCAdL mean kinetic temperature", temp, 1.0, temp_rtol,
                        abs(temp - 1.0) <= temp_rtol))
    q = log.theta[:, 0] ** 2
    z = (log.temperature - temp) * (q - q.mean())
    se = batch_means_se(z)
    checks.append(Check("CCAdL cov(kinetic temperature, theta^2)", z.mean(), 0.0, se_mult * se,
                        abs(z.mean()) <= se_mult * se))
    var = log.theta[:, 0].var()
    checks.append(Check("CCAdL configurational variance", var, 1.0, var_rtol,
                        abs(var - 1.0) <= var_rtol))
    return checks
