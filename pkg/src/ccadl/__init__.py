"""Covariance-controlled adaptive Langevin and stochastic-gradient baselines."""

from .covariance import CovarianceEstimator, empirical_covariance
from .data import Dataset, Minibatch, draw_minibatch
from .models import (
    GaussianModel,
    LogisticModel,
    NormalGammaParams,
    QuadraticNoiseModel,
    gaussian_marginal_density,
    gaussian_posterior_params,
    logistic_test_loglik,
)
from .samplers import (
    ChainAbort,
    ChainDiverged,
    ChainLog,
    SamplerConfig,
    ThermostatState,
    ccadl_step,
    hmc_reference,
    make_streams,
    run_chain,
    sghmc_step,
    sgld_step,
    sgnht_step,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceEstimator", "empirical_covariance",
    "Dataset", "Minibatch", "draw_minibatch",
    "GaussianModel", "LogisticModel", "NormalGammaParams", "QuadraticNoiseModel",
    "gaussian_marginal_density", "gaussian_posterior_params", "logistic_test_loglik",
    "ChainAbort", "ChainDiverged", "ChainLog", "SamplerConfig", "ThermostatState",
    "ccadl_step", "hmc_reference", "make_streams", "run_chain",
    "sghmc_step", "sgld_step", "sgnht_step",
]
