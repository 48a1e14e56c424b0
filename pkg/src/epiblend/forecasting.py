"""Forward propagation of fitted ensembles with frozen model weights.

From the last assimilated step, every state particle is pushed through
its model's transition kernel for each lead time with no reweighting and
no resampling: predictive uncertainty comes from the transition noise,
the particle spread, and (in ensemble mode) the parameter particles.
Model probabilities stay at their final fitted values for every lead.

The renewal model is observation-driven, so unobserved future counts are
drawn per particle from the count distribution at the particle's own
intensity and fed back into the excitation recursion.

Two parameter treatments are supported: ``ensemble`` keeps every
parameter particle with its posterior weight; ``point`` condenses each
model to its posterior-mean parameter, refilters the observed series
once under it, and propagates that single filter forward.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .averaging import mixture_quantiles, mixture_summary, pooled_summary, weighted_quantiles
from .errors import ConfigurationError
from .filtering import StateCloud, run_bpf
from .rng import RngStream
from .smc2 import ModelEnsemble, _map

__all__ = ["ForecastResult", "forecast"]

_PROPAGATE = 0
_REFIT = 1

THETA_MODES = ("ensemble", "point")


@dataclass(frozen=True)
class ForecastResult:
    """Per-lead predictive summaries plus equal-mass sample paths.

    ``rows`` mirror the fit-history rows (per-model and blended means and
    quantiles) with ``phase`` set to "forecast".  ``incidence_samples``
    and ``rt_samples`` hold, per lead, an equal-mass systematic sample of
    the blended predictive distribution (inverse CDF at midpoints of a
    uniform grid), suitable for probabilistic scoring.
    """

    horizon: int
    theta_mode: str
    labels: tuple[str, ...]
    model_probs: np.ndarray
    rows: list[dict]
    incidence_samples: np.ndarray
    rt_samples: np.ndarray
    model_incidence_samples: dict[str, np.ndarray] | None = None
    model_rt_samples: dict[str, np.ndarray] | None = None
    states: dict[str, list[list[StateCloud]]] | None = None


def _pooled(dynamics, clouds, theta_weights, target):
    values = np.concatenate(
        [getattr(dyn, target)(cloud.states) for dyn, cloud in zip(dynamics, clouds)]
    )
    masses = np.concatenate(
        [w * cloud.norm_weights for w, cloud in zip(theta_weights, clouds)]
    )
    return values, masses


def forecast(
    ensembles: Sequence[ModelEnsemble],
    model_probs: Sequence[float],
    horizon: int,
    stream: RngStream,
    *,
    theta_mode: str = "ensemble",
    n_samples: int = 400,
    threads: int = 1,
    keep_states: bool = False,
) -> ForecastResult:
    """Propagate every model ``horizon`` steps past the fitted window."""
    if horizon < 0:
        raise ConfigurationError(f"forecast horizon must be non-negative, got {horizon}")
    if theta_mode not in THETA_MODES:
        raise ConfigurationError(f"theta mode must be one of {THETA_MODES}, got {theta_mode!r}")
    if n_samples < 1:
        raise ConfigurationError(f"need at least one sample path, got {n_samples}")
    probs = np.asarray(model_probs, dtype=float)
    if probs.shape != (len(ensembles),) or len(ensembles) == 0:
        raise ConfigurationError("need one model probability per fitted ensemble")
    times = {ens.time_index for ens in ensembles}
    if len(times) != 1:
        raise ConfigurationError(f"ensembles are at different times: {sorted(times)}")
    fitted_t = times.pop()

    # Working copies: the fitted ensembles are never mutated.
    dynamics: list[list] = []
    clouds: list[list[StateCloud]] = []
    theta_weights: list[np.ndarray] = []
    for k, ens in enumerate(ensembles):
        if theta_mode == "point":
            dyn = ens.point_dynamics()
            refit = run_bpf(
                np.asarray(ens.history, dtype=float), dyn, ens.init_priors,
                ens.settings.n_x, stream.child(_REFIT, k), ens.settings.log_floor,
            )
            dynamics.append([dyn])
            clouds.append([refit.final_cloud])
            theta_weights.append(np.array([1.0]))
        else:
            dynamics.append(list(ens.dynamics))
            clouds.append(list(ens.clouds))
            theta_weights.append(np.exp(ens.log_weights))

    labels = tuple(ens.label for ens in ensembles)
    grid = (np.arange(n_samples) + 0.5) / n_samples
    rows: list[dict] = []
    incidence_samples = np.empty((horizon, n_samples))
    rt_samples = np.empty((horizon, n_samples))
    model_incidence_samples = {label: np.empty((horizon, n_samples)) for label in labels}
    model_rt_samples = {label: np.empty((horizon, n_samples)) for label in labels}
    kept: dict[str, list[list[StateCloud]]] | None = (
        {label: [] for label in labels} if keep_states else None
    )

    for lead in range(1, horizon + 1):
        for k in range(len(ensembles)):
            dyns_k, clouds_k = dynamics[k], clouds[k]

            def advance(m: int) -> StateCloud:
                gen = stream.child(_PROPAGATE, k, lead, m).generator()
                states = dyns_k[m].propagate(clouds_k[m].states, gen)
                states = dyns_k[m].ingest(states, None, gen)
                return replace(
                    clouds_k[m], states=states, time_index=clouds_k[m].time_index + 1
                )

            clouds[k] = _map(advance, range(len(clouds_k)), threads)
            if kept is not None:
                kept[labels[k]].append(clouds[k])

        inc_pairs = [
            _pooled(dynamics[k], clouds[k], theta_weights[k], "incidence")
            for k in range(len(ensembles))
        ]
        rt_pairs = [
            _pooled(dynamics[k], clouds[k], theta_weights[k], "rt")
            for k in range(len(ensembles))
        ]
        row = {"time": fitted_t + lead, "lead": lead, "phase": "forecast"}
        for k, label in enumerate(labels):
            row[f"{label}.prob"] = float(probs[k])
            for key, val in pooled_summary(*inc_pairs[k]).items():
                row[f"{label}.incidence.{key}"] = val
            for key, val in pooled_summary(*rt_pairs[k]).items():
                row[f"{label}.rt.{key}"] = val
        for key, val in mixture_summary(inc_pairs, probs).items():
            row[f"ensemble.incidence.{key}"] = val
        for key, val in mixture_summary(rt_pairs, probs).items():
            row[f"ensemble.rt.{key}"] = val
        rows.append(row)
        incidence_samples[lead - 1] = mixture_quantiles(inc_pairs, probs, grid)
        rt_samples[lead - 1] = mixture_quantiles(rt_pairs, probs, grid)
        for k, label in enumerate(labels):
            model_incidence_samples[label][lead - 1] = weighted_quantiles(
                *inc_pairs[k], grid
            )
            model_rt_samples[label][lead - 1] = weighted_quantiles(*rt_pairs[k], grid)

    return ForecastResult(
        horizon=horizon,
        theta_mode=theta_mode,
        labels=labels,
        model_probs=probs.copy(),
        rows=rows,
        incidence_samples=incidence_samples,
        rt_samples=rt_samples,
        model_incidence_samples=model_incidence_samples,
        model_rt_samples=model_rt_samples,
        states=kept,
    )
