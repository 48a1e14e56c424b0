"""Bootstrap particle filter over the epidemic transition kernels.

Each step resamples ancestors from the previous normalized weights,
propagates them through the model kernel, and reweights against the
observed count.  The average of the new unnormalized weights is an
unbiased estimate of the one-step predictive likelihood; their running
log-sum is the log marginal likelihood of the series.  Steps with no
observation carry unit weights and contribute nothing to the likelihood.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.special import logsumexp

from .distributions import Prior
from .models import observation_log_likelihood
from .rng import RngStream

__all__ = [
    "LOG_FLOOR",
    "FilterResult",
    "StateCloud",
    "StepOutcome",
    "bpf_step",
    "ess",
    "run_bpf",
    "stratified_resample",
    "uniform_cloud",
]

logger = logging.getLogger("epiblend")

# Weight floor applied when every particle scores an observation at zero
# probability; the step is logged and the run continues on flat weights.
LOG_FLOOR = math.log(1e-300)


def stratified_resample(
    weights: np.ndarray, gen: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw ancestor indices with one uniform per equal-probability stratum.

    Copy counts are unbiased (the expected count of index i is size times
    its normalized weight) and the returned indices are non-decreasing.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero; caller must handle degeneracy")
    n = w.size if size is None else int(size)
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    u = (np.arange(n) + gen.uniform(size=n)) / n
    return np.minimum(np.searchsorted(cdf, u, side="right"), w.size - 1)


def ess(weights: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2; scale invariant."""
    w = np.asarray(weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    return float(total**2 / np.sum(w**2))


@dataclass(frozen=True)
class StateCloud:
    """A weighted particle cloud synchronized to one time index."""

    states: Any
    log_weights: np.ndarray
    norm_weights: np.ndarray
    time_index: int

    @property
    def n_particles(self) -> int:
        return self.norm_weights.size


def uniform_cloud(states: Any, n: int, time_index: int = 0) -> StateCloud:
    """Wrap freshly initialized states with flat weights."""
    return StateCloud(
        states=states,
        log_weights=np.zeros(n),
        norm_weights=np.full(n, 1.0 / n),
        time_index=time_index,
    )


@dataclass(frozen=True)
class StepOutcome:
    cloud: StateCloud
    log_increment: float
    degenerate: bool


def bpf_step(
    cloud: StateCloud,
    count: float | None,
    dynamics,
    gen: np.random.Generator,
    log_floor: float = LOG_FLOOR,
) -> StepOutcome:
    """Advance a cloud one step and estimate the predictive likelihood.

    ``count`` of None marks a missing observation: particles propagate,
    weights stay flat, and the log-likelihood increment is zero.
    """
    n = cloud.n_particles
    ancestors = stratified_resample(cloud.norm_weights, gen)
    states = dynamics.take(cloud.states, ancestors)
    states = dynamics.propagate(states, gen)

    degenerate = False
    if count is None:
        log_w = np.zeros(n)
        log_inc = 0.0
    else:
        log_w = observation_log_likelihood(dynamics, states, count)
        if np.all(np.isneginf(log_w)):
            logger.warning(
                "all %d particles scored count %s at zero probability at step %d; "
                "weights reset to uniform", n, count, cloud.time_index + 1,
            )
            log_w = np.zeros(n)
            log_inc = log_floor
            degenerate = True
        else:
            log_inc = float(logsumexp(log_w)) - math.log(n)

    states = dynamics.ingest(states, count, gen)
    norm = np.exp(log_w - logsumexp(log_w))
    new_cloud = StateCloud(
        states=states, log_weights=log_w, norm_weights=norm,
        time_index=cloud.time_index + 1,
    )
    return StepOutcome(cloud=new_cloud, log_increment=log_inc, degenerate=degenerate)


@dataclass(frozen=True)
class FilterResult:
    """Per-step likelihood increments and the final cloud of a full pass."""

    log_increments: np.ndarray
    log_marginal: float
    final_cloud: StateCloud
    degenerate_steps: list[int]


def run_bpf(
    counts: np.ndarray,
    dynamics,
    init_priors: Mapping[str, Prior],
    n_particles: int,
    stream: RngStream,
    log_floor: float = LOG_FLOOR,
) -> FilterResult:
    """Filter a whole series; NaN entries are treated as missing.

    The stream is split per step, so estimates depend only on the stream
    identity, never on scheduling.
    """
    counts = np.asarray(counts, dtype=float)
    states = dynamics.sample_initial(n_particles, init_priors, stream.child(0).generator())
    cloud = uniform_cloud(states, n_particles)

    increments = np.zeros(counts.size)
    degenerate: list[int] = []
    for t, value in enumerate(counts, start=1):
        observed = None if math.isnan(value) else float(value)
        outcome = bpf_step(cloud, observed, dynamics, stream.child(t).generator(), log_floor)
        cloud = outcome.cloud
        increments[t - 1] = outcome.log_increment
        if outcome.degenerate:
            degenerate.append(t)

    return FilterResult(
        log_increments=increments,
        log_marginal=float(increments.sum()),
        final_cloud=cloud,
        degenerate_steps=degenerate,
    )
