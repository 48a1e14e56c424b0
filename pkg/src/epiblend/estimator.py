"""Scikit-learn style front end for the sequential multi-model engine.

``EpidemicEnsemble`` assimilates a count series step by step, maintains
one parameter-particle ensemble per configured model, dynamically blends
their incidence and reproduction-number estimates by posterior model
probability, and produces observation-free forecasts from the fitted
state.  Construction stores settings untouched (so ``get_params`` /
``set_params`` round-trip); all validation happens in :meth:`fit`.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .averaging import mixture_summary, pooled_summary
from .config import DEFAULT_SEED, as_model_spec
from .errors import ConfigurationError, DataError
from .forecasting import ForecastResult, forecast
from .rng import RngStream
from .smc2 import EngineSettings, ModelEnsemble, posterior_model_probs

__all__ = ["EpidemicEnsemble", "validate_series"]

_FIT_STREAM = 0
_FORECAST_STREAM = 1


def validate_series(y) -> np.ndarray:
    """Coerce a count series to floats with NaN marking missing entries.

    Accepts any 1-D sequence of numbers where ``None`` or NaN means the
    count for that step was never observed.  Counts must be finite and
    non-negative.
    """
    if y is None:
        raise DataError("an observation series is required")
    try:
        values = [math.nan if v is None else float(v) for v in np.asarray(y, dtype=object)]
    except (TypeError, ValueError) as exc:
        raise DataError(f"observation series must contain numbers or missing markers: {exc}")
    series = np.asarray(values, dtype=float)
    if series.ndim != 1 or series.size == 0:
        raise DataError("observation series must be a non-empty 1-D sequence")
    if np.any(np.isinf(series)):
        raise DataError(f"counts must be finite; found infinity at position {int(np.flatnonzero(np.isinf(series))[0])}")
    negative = np.flatnonzero(series < 0)
    if negative.size:
        pos = int(negative[0])
        raise DataError(f"counts must be non-negative; found {series[pos]} at position {pos}")
    return series


class EpidemicEnsemble(BaseEstimator):
    """Sequential Bayesian inference over competing epidemic models.

    Parameters
    ----------
    models : sequence of ModelSpec or dict
        The models to fit and blend; each entry names a family
        ("dthp", "seir", "seirs") and gives one prior (or fixed value)
        per model parameter.
    population : float
        Population size shared by all models, unless a model spec
        carries its own.
    n_theta, n_x : int
        Parameter particles per model, and state particles per
        parameter particle.
    mh_moves : int
        Metropolis-Hastings refresh moves per particle at each
        rejuvenation.
    resample_threshold : float
        Rejuvenate when the parameter effective sample size drops below
        this fraction of ``n_theta``.
    evidence_window : int
        Number of recent steps whose predictive terms make up the model
        evidence (1 = latest step only; large = full running evidence).
    proposal_scale : float
        Multiplier on the weighted particle covariance used as the
        rejuvenation proposal covariance.
    seed : int
        Root seed; every random draw in fit and predict derives from it.
    threads : int
        Worker threads used to advance parameter particles; results are
        identical for any value.
    """

    def __init__(
        self,
        models: Sequence = (),
        population: float = 1e6,
        n_theta: int = 400,
        n_x: int = 200,
        mh_moves: int = 5,
        resample_threshold: float = 0.5,
        evidence_window: int = 1,
        proposal_scale: float = 0.5,
        seed: int = DEFAULT_SEED,
        threads: int = 1,
    ) -> None:
        self.models = models
        self.population = population
        self.n_theta = n_theta
        self.n_x = n_x
        self.mh_moves = mh_moves
        self.resample_threshold = resample_threshold
        self.evidence_window = evidence_window
        self.proposal_scale = proposal_scale
        self.seed = seed
        self.threads = threads

    # -- fitting ---------------------------------------------------------

    def fit(self, y) -> "EpidemicEnsemble":
        """Assimilate the whole series, one observation at a time."""
        series = validate_series(y)
        specs = tuple(as_model_spec(m) for m in self.models)
        if not specs:
            raise ConfigurationError("at least one model specification is required")
        labels = [spec.label for spec in specs]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"model labels must be unique, got {labels}")
        settings = EngineSettings(
            n_theta=int(self.n_theta),
            n_x=int(self.n_x),
            mh_moves=int(self.mh_moves),
            resample_threshold=float(self.resample_threshold),
            evidence_window=int(self.evidence_window),
            proposal_scale=float(self.proposal_scale),
        )
        threads = int(self.threads)
        if threads < 1:
            raise ConfigurationError(f"thread count must be at least 1, got {self.threads}")

        stream = RngStream(int(self.seed)).child(_FIT_STREAM)
        ensembles = []
        for slot, spec in enumerate(specs):
            population = float(spec.population if spec.population is not None else self.population)
            if population <= 0:
                raise ConfigurationError(f"population must be positive, got {population}")
            ensembles.append(
                ModelEnsemble(
                    label=spec.label, family=spec.family, population=population,
                    priors=spec.priors, settings=settings, stream=stream, slot=slot,
                )
            )

        history: list[dict] = []
        parameters: list[dict] = []
        probs = np.full(len(ensembles), 1.0 / len(ensembles))
        for t in range(1, series.size + 1):
            observed = series[t - 1]
            for ens in ensembles:
                ens.step(t, observed, threads=threads)
            probs = posterior_model_probs([ens.log_evidence() for ens in ensembles])
            history.append(self._history_row(t, observed, ensembles, probs))
            for ens in ensembles:
                for name, stats in ens.parameter_summary().items():
                    parameters.append(
                        {"time": t, "model": ens.label, "parameter": name, **stats}
                    )

        self.labels_ = tuple(labels)
        self.ensembles_ = ensembles
        self.model_probs_ = probs
        self.history_ = history
        self.parameters_ = parameters
        self.observations_ = series
        self.n_steps_ = int(series.size)
        self.settings_ = settings
        return self

    @staticmethod
    def _history_row(t: int, observed: float, ensembles, probs) -> dict:
        observed = float(observed)
        if math.isfinite(observed) and observed.is_integer():
            observed = int(observed)
        row = {"time": t, "phase": "fit", "observed": observed}
        inc_pairs, rt_pairs = [], []
        for ens, prob in zip(ensembles, probs):
            inc = ens.pooled_target("incidence")
            rt = ens.pooled_target("rt")
            inc_pairs.append(inc)
            rt_pairs.append(rt)
            row[f"{ens.label}.prob"] = float(prob)
            row[f"{ens.label}.ess"] = float(ens.ess_trace[-1])
            row[f"{ens.label}.log_evidence"] = float(ens.log_evidence())
            for key, val in pooled_summary(*inc).items():
                row[f"{ens.label}.incidence.{key}"] = val
            for key, val in pooled_summary(*rt).items():
                row[f"{ens.label}.rt.{key}"] = val
        for key, val in mixture_summary(inc_pairs, probs).items():
            row[f"ensemble.incidence.{key}"] = val
        for key, val in mixture_summary(rt_pairs, probs).items():
            row[f"ensemble.rt.{key}"] = val
        return row

    # -- forecasting -------------------------------------------------------

    def predict(
        self,
        horizon: int = 14,
        theta_mode: str = "ensemble",
        n_samples: int = 400,
        keep_states: bool = False,
    ) -> ForecastResult:
        """Propagate the fitted state ``horizon`` steps with frozen model weights."""
        self._require_fitted()
        stream = RngStream(int(self.seed)).child(_FORECAST_STREAM)
        return forecast(
            self.ensembles_, self.model_probs_, int(horizon), stream,
            theta_mode=theta_mode, n_samples=int(n_samples),
            threads=int(self.threads), keep_states=keep_states,
        )

    def _require_fitted(self) -> None:
        if not hasattr(self, "ensembles_"):
            raise NotFittedError(
                "this EpidemicEnsemble instance is not fitted yet; call fit(y) first"
            )
