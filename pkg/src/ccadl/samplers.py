"""Stochastic-gradient samplers and the chain driver.

All second-order methods share one splitting per step: move positions with
the old momenta, evaluate the noisy gradient at the new positions, update
momenta (friction and damping act on the old momenta), then, for the
thermostatted methods, update ``xi`` with the new kinetic energy.
"""

from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .covariance import CovarianceEstimator
from .models import Model

logger = logging.getLogger(__name__)

METHODS = ("sgld", "sghmc", "sgnht", "ccadl", "hmc")
COVARIANCE_MODES = ("none", "diagonal", "full", "exact")


class ChainAbort(RuntimeError):
    """A chain could not continue; ``log`` holds whatever was recorded."""

    log: "ChainLog | None" = None


class ChainDiverged(ChainAbort):
    pass


@dataclass
class ThermostatState:
    theta: np.ndarray
    p: np.ndarray
    xi: float

    def copy(self) -> "ThermostatState":
        return ThermostatState(self.theta.copy(), self.p.copy(), float(self.xi))


@dataclass(frozen=True)
class SamplerConfig:
    """Stepsize, friction and the thermostat/mass parameters.

    ``mu`` defaults to the parameter dimension and ``M_diag`` to ones; call
    :meth:`resolve` with the dimension to fill them in.  ``covariance`` picks
    the source of the noise covariance used by CCAdL and SGHMC: ``none`` (zero),
    ``diagonal``/``full`` (running estimate) or ``exact`` (the model's closed
    form, for harness models only).
    """

    method: str = "ccadl"
    h: float = 0.01
    A: float = 1.0
    beta: float = 1.0
    mu: float | None = None
    M_diag: tuple | None = None
    covariance: str = "diagonal"
    replace: bool = False
    random_init: bool = False
    max_support_retries: int = 100

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.covariance not in COVARIANCE_MODES:
            raise ValueError(f"unknown covariance mode {self.covariance!r}")
        if not self.h > 0:
            raise ValueError("stepsize h must be positive")
        if not self.A >= 0:
            raise ValueError("friction A must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("thermal mass mu must be positive")
        if self.M_diag is not None:
            object.__setattr__(self, "M_diag", tuple(float(m) for m in np.ravel(self.M_diag)))
            if min(self.M_diag) <= 0:
                raise ValueError("masses must be positive")

    def resolve(self, dim: int) -> "SamplerConfig":
        mu = float(dim) if self.mu is None else self.mu
        M = (1.0,) * dim if self.M_diag is None else self.M_diag
        if len(M) == 1 and dim > 1:
            M = M * dim
        if len(M) != dim:
            raise ValueError(f"M_diag has length {len(M)}, expected {dim}")
        return replace(self, mu=mu, M_diag=M)

    @property
    def mass(self) -> np.ndarray:
        return np.asarray(self.M_diag, dtype=float)


# ---------------------------------------------------------------------------
# step kernels


def _mass(config, dim):
    return np.ones(dim) if config.M_diag is None else np.asarray(config.M_diag, dtype=float)


def _mu(config, dim):
    return float(dim) if config.mu is None else config.mu


def noise_covariance_estimate(config, model, theta, per_sample, estimator):
    """Covariance of the noisy gradient at ``theta`` as used by CCAdL/SGHMC.

    Returns a vector (diagonal) or matrix, or ``None`` when the mode is ``none``.
    """
    mode = config.covariance
    if mode == "none":
        return None
    if mode == "exact":
        return model.noise_covariance(theta)
    if estimator is None:
        raise ValueError(f"covariance mode {mode!r} needs a CovarianceEstimator")
    if estimator.mode != mode:
        raise ValueError(f"estimator mode {estimator.mode!r} does not match config {mode!r}")
    if per_sample is None:
        raise ValueError(f"{type(model).__name__} gives no per-sample gradients to estimate from")
    estimator.observe(per_sample)
    return estimator.sigma_hat(model.N, per_sample.shape[0])


def _apply(sigma, v):
    return sigma * v if sigma.ndim == 1 else sigma @ v


def _momentum_with_retries(model, theta, propose, rng, minv, h, config, stats):
    """Draw noise and accept the first momentum whose next position is in support."""
    dim = theta.shape[0]
    for attempt in range(config.max_support_retries):
        p_new = propose(rng.standard_normal(dim))
        if model.in_support(theta + minv * p_new * h):
            if attempt and stats is not None:
                stats["support_retries"] += attempt
            return p_new
    raise ChainAbort(
        f"{config.max_support_retries} consecutive noise draws left the model support"
    )


def _thermostat(xi, p, minv, config, dim):
    return xi + (p @ (minv * p) - dim / config.beta) * config.h / _mu(config, dim)


def ccadl_step(state: ThermostatState, model: Model, batch, estimator: CovarianceEstimator | None,
               config: SamplerConfig, rng: np.random.Generator, stats: Counter | None = None
               ) -> ThermostatState:
    """One step of covariance-controlled adaptive Langevin."""
    return _thermostat_step(state, model, batch, estimator, config, rng, stats, damping=True)


def sgnht_step(state: ThermostatState, model: Model, batch, config: SamplerConfig,
               rng: np.random.Generator, stats: Counter | None = None) -> ThermostatState:
    """One step of the stochastic-gradient Nose-Hoover thermostat."""
    return _thermostat_step(state, model, batch, None, config, rng, stats, damping=False)


def _thermostat_step(state, model, batch, estimator, config, rng, stats, damping):
    h, dim = config.h, state.theta.shape[0]
    M = _mass(config, dim)
    minv, sqrtm = 1.0 / M, np.sqrt(M)
    theta = state.theta + minv * state.p * h
    grad, per_sample = model.minibatch_gradient(theta, batch)
    sigma = noise_covariance_estimate(config, model, theta, per_sample, estimator) if damping else None

    p, xi = state.p, state.xi
    drift = p - grad * h - xi * p * h
    if sigma is not None:
        drift = drift - 0.5 * h * config.beta * _apply(sigma, p) * h
    amp = np.sqrt(2.0 * config.A * h / config.beta) * sqrtm
    p_new = _momentum_with_retries(model, theta, lambda r: drift + amp * r, rng, minv, h, config, stats)
    return ThermostatState(theta, p_new, _thermostat(xi, p_new, minv, config, dim))


def sghmc_noise_factor(A: float, h: float, sigma, stats: Counter | None = None):
    """Square root of ``A I - h Sigma / 2`` with negative parts clamped to zero.

    ``sigma`` may be a vector (diagonal), a matrix or ``None``.  Each clamped
    eigenvalue or diagonal entry bumps ``stats['friction_deficit']``.
    """
    if sigma is None:
        return np.sqrt(A)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        b = A - 0.5 * h * sigma
        neg = b < 0
        if neg.any() and stats is not None:
            stats["friction_deficit"] += int(neg.sum())
        return np.sqrt(np.where(neg, 0.0, b))
    w, Q = np.linalg.eigh(A * np.eye(sigma.shape[0]) - 0.5 * h * sigma)
    neg = w < 0
    if neg.any() and stats is not None:
        stats["friction_deficit"] += int(neg.sum())
    return (Q * np.sqrt(np.where(neg, 0.0, w))) @ Q.T


def sghmc_step(state: ThermostatState, model: Model, batch, estimator: CovarianceEstimator | None,
               config: SamplerConfig, rng: np.random.Generator, stats: Counter | None = None
               ) -> ThermostatState:
    """One step of stochastic-gradient HMC; ``xi`` is carried along untouched."""
    h, dim = config.h, state.theta.shape[0]
    M = _mass(config, dim)
    minv, sqrtm = 1.0 / M, np.sqrt(M)
    theta = state.theta + minv * state.p * h
    grad, per_sample = model.minibatch_gradient(theta, batch)
    sigma = noise_covariance_estimate(config, model, theta, per_sample, estimator)
    root = sghmc_noise_factor(config.A, h, sigma, stats)

    p = state.p
    drift = p - grad * h - config.A * p * h
    c = np.sqrt(2.0 * h / config.beta)
    if np.ndim(root) == 2:
        propose = lambda r: drift + c * (root @ (sqrtm * r))  # noqa: E731
    else:
        propose = lambda r: drift + c * root * sqrtm * r  # noqa: E731
    p_new = _momentum_with_retries(model, theta, propose, rng, minv, h, config, stats)
    return ThermostatState(theta, p_new, state.xi)


def sgld_step(state: ThermostatState, model: Model, batch, config: SamplerConfig,
              rng: np.random.Generator, stats: Counter | None = None,
              noise: bool = True) -> ThermostatState:
    """Fixed-stepsize SGLD; momenta and ``xi`` are unused."""
    h = config.h
    grad, _ = model.minibatch_gradient(state.theta, batch)
    drift = state.theta - grad * h
    if not noise:
        return ThermostatState(drift, state.p, state.xi)
    c = np.sqrt(2.0 * h / config.beta)
    for attempt in range(config.max_support_retries):
        theta = drift + c * rng.standard_normal(drift.shape[0])
        if model.in_support(theta):
            if attempt and stats is not None:
                stats["support_retries"] += attempt
            return ThermostatState(theta, state.p, state.xi)
    raise ChainAbort(
        f"{config.max_support_retries} consecutive noise draws left the model support"
    )


# ---------------------------------------------------------------------------
# chain driver


class Streams(NamedTuple):
    """Independent generators for each source of randomness in a run."""

    data: np.random.Generator
    init: np.random.Generator
    minibatch: np.random.Generator
    noise: np.random.Generator


STREAM_NAMES = Streams._fields


def make_streams(seed: int) -> Streams:
    return Streams(*(np.random.default_rng([seed, i]) for i in range(len(STREAM_NAMES))))


@dataclass
class ChainLog:
    method: str
    config: dict
    seed: int | None
    steps: int
    burnin: int
    thin: int
    step_index: np.ndarray
    theta: np.ndarray
    xi: np.ndarray
    temperature: np.ndarray
    counters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    completed: int = 0
    acceptance_rate: float | None = None
    energy_error: np.ndarray | None = None

    @property
    def samples(self) -> np.ndarray:
        """Thinned positions recorded after burn-in."""
        return self.theta[self.step_index > self.burnin]

    @property
    def post_burnin(self) -> np.ndarray:
        return self.step_index > self.burnin


def initial_state(model: Model, config: SamplerConfig, rng: np.random.Generator,
                  theta0=None) -> ThermostatState:
    """``xi = A``, ``p ~ N(0, M / beta)`` and ``theta`` from ``theta0`` or the model."""
    dim = model.dim
    theta = model.initial_position() if theta0 is None else np.array(theta0, dtype=float)
    if config.random_init:
        theta = theta + rng.standard_normal(dim)
        if not model.in_support(theta):
            raise ValueError("randomised initial position is outside the model support")
    M = _mass(config, dim)
    for _ in range(config.max_support_retries):
        p = np.sqrt(M / config.beta) * rng.standard_normal(dim)
        if config.method in ("sgld", "hmc") or model.in_support(theta + p / M * config.h):
            return ThermostatState(theta, p, float(config.A))
    raise ChainAbort("could not draw an initial momentum keeping the chain in support")


def kinetic_temperature_of(p, minv) -> float:
    return float(p @ (minv * p)) / p.shape[0]


def run_chain(method: str, model: Model, config: SamplerConfig, steps: int, burnin: int = 0,
              thin: int = 1, rng: Streams | int = 0, sinks: Sequence[Callable] = (),
              theta0=None, engine: str = "auto") -> ChainLog:
    """Run ``steps`` transitions, recording every ``thin``-th state.

    ``rng`` is a seed or a :class:`Streams`; minibatches and injected noise
    come from separate streams, so the ``reference`` and compiled ``fast``
    engines produce the same chain.  ``sinks`` are called as
    ``sink(t, state)`` after every step (reference engine only).
    """
    if method == "hmc":
        raise ValueError("use hmc_reference for full-gradient HMC")
    if not steps > burnin >= 0 or thin < 1:
        raise ValueError("need steps > burnin >= 0 and thin >= 1")
    config = replace(config, method=method).resolve(model.dim)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    streams = make_streams(int(rng)) if seed is not None else rng

    state = initial_state(model, config, streams.init, theta0)
    estimator = None
    if method in ("ccadl", "sghmc") and config.covariance in ("diagonal", "full"):
        estimator = CovarianceEstimator(model.dim, config.covariance)

    from . import _fast

    use_fast = engine == "fast" or (engine == "auto" and not sinks and _fast.supports(model, config))
    if engine == "fast" and not _fast.supports(model, config):
        raise ValueError(f"no compiled kernel for {type(model).__name__} with this config")

    n_rec = steps // thin
    log = ChainLog(
        method=method, config=asdict(config), seed=seed, steps=steps, burnin=burnin, thin=thin,
        step_index=np.arange(1, n_rec + 1) * thin,
        theta=np.full((n_rec, model.dim), np.nan), xi=np.full(n_rec, np.nan),
        temperature=np.full(n_rec, np.nan),
    )
    if use_fast:
        return _fast.run(model, config, state, estimator, streams, steps, thin, log)

    stats: Counter = Counter()
    minv = 1.0 / config.mass
    rec = 0
    try:
        for t in range(1, steps + 1):
            batch = model.draw_batch(streams.minibatch, replace=config.replace)
            if method == "ccadl":
                state = ccadl_step(state, model, batch, estimator, config, streams.noise, stats)
            elif method == "sgnht":
                state = sgnht_step(state, model, batch, config, streams.noise, stats)
            elif method == "sghmc":
                state = sghmc_step(state, model, batch, estimator, config, streams.noise, stats)
            else:
                state = sgld_step(state, model, batch, config, streams.noise, stats)
            if not (np.all(np.isfinite(state.theta)) and np.all(np.isfinite(state.p))):
                raise ChainDiverged(f"{method} state became non-finite at step {t}")
            for sink in sinks:
                sink(t, state)
            if t % thin == 0:
                log.theta[rec] = state.theta
                log.xi[rec] = state.xi
                if method != "sgld":
                    log.temperature[rec] = kinetic_temperature_of(state.p, minv)
                rec += 1
            log.completed = t
    except ChainAbort as exc:
        log.counters = dict(stats)
        exc.log = log
        raise
    log.counters = dict(stats)
    if estimator is not None:
        log.counters["clamped_variances"] = estimator.clamped
    return log


# ---------------------------------------------------------------------------
# full-gradient reference sampler


def leapfrog(model: Model, theta, p, eps: float, L: int, minv):
    """``L`` velocity-Verlet steps; returns ``None`` if the path leaves the support."""
    theta = np.array(theta, dtype=float)
    p = p - 0.5 * eps * model.full_gradient(theta)
    for i in range(L):
        theta = theta + eps * minv * p
        if not model.in_support(theta):
            return None
        g = model.full_gradient(theta)
        p = p - (eps if i < L - 1 else 0.5 * eps) * g
    return theta, p


def hamiltonian(model: Model, theta, p, minv) -> float:
    return model.potential(theta) + 0.5 * float(p @ (minv * p))


def hmc_reference(model: Model, L: int, eps: float, rng: np.random.Generator, n_samples: int,
                  theta0=None, beta: float = 1.0, mass=None, burnin: int = 0,
                  window: int = 100) -> ChainLog:
    """Leapfrog HMC with a Metropolis correction on the full dataset."""
    dim = model.dim
    M = np.ones(dim) if mass is None else np.broadcast_to(np.asarray(mass, float), (dim,))
    minv = 1.0 / M
    theta = model.initial_position() if theta0 is None else np.array(theta0, dtype=float)
    total = n_samples + burnin
    out = np.empty((n_samples, dim))
    dH = np.full(total, np.inf)
    accepted = np.zeros(total, dtype=bool)
    for i in range(total):
        p0 = np.sqrt(M / beta) * rng.standard_normal(dim)
        prop = leapfrog(model, theta, p0, eps, L, minv)
        u = rng.random()
        if prop is not None:
            dH[i] = hamiltonian(model, *prop, minv) - hamiltonian(model, theta, p0, minv)
            if np.isfinite(dH[i]) and np.log(u) < -beta * dH[i]:
                theta = prop[0]
                accepted[i] = True
        if (i + 1) % window == 0 and accepted[i + 1 - window:i + 1].mean() < 0.01:
            warnings.warn(f"HMC acceptance below 1% over iterations {i + 2 - window}-{i + 1}",
                          RuntimeWarning, stacklevel=2)
        if i >= burnin:
            out[i - burnin] = theta
    log = ChainLog(
        method="hmc", config={"L": L, "eps": eps, "beta": beta, "M_diag": M.tolist()},
        seed=None, steps=total, burnin=burnin, thin=1,
        step_index=np.arange(burnin + 1, total + 1), theta=out,
        xi=np.full(n_samples, np.nan), temperature=np.full(n_samples, np.nan),
        completed=total, acceptance_rate=float(accepted.mean()), energy_error=dH,
    )
    return log
