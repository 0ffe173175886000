"""Bayesian and frequentist interrater and intrarater reliability for binary ratings."""

from .agreement import (
    KappaEstimate,
    cohen_kappa,
    conger_kappa,
    fleiss_kappa,
    interrater_kappa,
    intrarater_kappa,
    scotts_pi,
)
from .data import RatingsTable, load_csv, validate, write_csv
from .diagnostics import diagnostics
from .loo import LooResult, pointwise_loglik, psis_loo, select_model
from .model import Hyperparameters, ModelSpec, ParamVector, PriorConfig
from .posterior import marginal_correlations, posterior_predictive_kappa, summarize
from .sampler import PosteriorDraws, SamplerConfig, sample
from .sim import ScenarioConfig, run_study, simulate_dataset, true_kappa

__version__ = "0.1.0"

__all__ = [
    "Hyperparameters",
    "KappaEstimate",
    "LooResult",
    "ModelSpec",
    "ParamVector",
    "PosteriorDraws",
    "PriorConfig",
    "RatingsTable",
    "SamplerConfig",
    "ScenarioConfig",
    "cohen_kappa",
    "conger_kappa",
    "diagnostics",
    "fleiss_kappa",
    "interrater_kappa",
    "intrarater_kappa",
    "load_csv",
    "marginal_correlations",
    "pointwise_loglik",
    "posterior_predictive_kappa",
    "psis_loo",
    "run_study",
    "sample",
    "scotts_pi",
    "select_model",
    "simulate_dataset",
    "summarize",
    "true_kappa",
    "validate",
    "write_csv",
]
