"""Sequential Bayesian averaging of epidemic models for count time series.

Fits a self-exciting renewal model and stochastic compartmental models to
case counts with nested sequential Monte Carlo, weights them online by
predictive evidence, and produces blended incidence and reproduction-number
estimates plus calibrated forecasts.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .config import (
    DEFAULT_SEED,
    DataSettings,
    ForecastSettings,
    ModelSpec,
    RunConfig,
    load_config,
    preset_config,
    save_config,
)
from .distributions import (
    Fixed,
    Normal,
    Prior,
    TruncatedNormal,
    Uniform,
    UniformDiscrete,
    negbin_log_pmf,
    prior_from_dict,
    prior_to_dict,
)
from .errors import ConfigurationError, DataError
from .estimator import EpidemicEnsemble, validate_series
from .forecasting import ForecastResult
from .metrics import ScoreReport, coverage, crps_particles, crps_sample, rmse
from .rng import RngStream
from .scenarios import ScenarioData, ScenarioSpec, scenario, simulate_scenario
from .smc2 import EngineSettings, ModelEnsemble, posterior_model_probs

__all__ = [
    "DEFAULT_SEED",
    "ConfigurationError",
    "DataError",
    "DataSettings",
    "EngineSettings",
    "EpidemicEnsemble",
    "Fixed",
    "ForecastResult",
    "ForecastSettings",
    "ModelEnsemble",
    "ModelSpec",
    "Normal",
    "Prior",
    "RngStream",
    "RunConfig",
    "ScenarioData",
    "ScenarioSpec",
    "ScoreReport",
    "TruncatedNormal",
    "Uniform",
    "UniformDiscrete",
    "__version__",
    "coverage",
    "crps_particles",
    "crps_sample",
    "load_config",
    "negbin_log_pmf",
    "posterior_model_probs",
    "preset_config",
    "prior_from_dict",
    "prior_to_dict",
    "rmse",
    "save_config",
    "scenario",
    "simulate_scenario",
    "validate_series",
]
