"""Blending per-model particle estimates by posterior model probability.

Point estimates combine linearly.  Interval estimates come from the
mixture distribution itself: every particle enters a pooled empirical CDF
with mass (model probability) x (its weight within the model), and
quantiles invert that CDF left-continuously, so a requested level returns
the smallest particle value whose cumulative mass reaches it.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "QUANTILE_PROBS",
    "average_point",
    "mixture_quantiles",
    "mixture_summary",
    "pooled_summary",
    "weighted_quantiles",
]

# Summary grid reported for incidence and reproduction-number estimates.
QUANTILE_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


def weighted_quantiles(
    values: np.ndarray, weights: np.ndarray, probs: Sequence[float]
) -> np.ndarray:
    """Left-continuous inverse of the weighted empirical CDF."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if values.size == 0 or values.shape != weights.shape:
        raise ValueError("values and weights must be equal-length non-empty vectors")
    if np.any(weights < 0) or np.any(~np.isfinite(weights)):
        raise ValueError("weights must be finite and non-negative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("quantile levels must lie in [0, 1]")

    mass = weights > 0  # zero-mass values must not appear in the support
    values, weights = values[mass], weights[mass]
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    cdf = np.cumsum(weights[order]) / total
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, probs, side="left")
    return sorted_values[np.minimum(idx, values.size - 1)]


def average_point(estimates: Sequence[float], model_probs: Sequence[float]) -> float:
    """Probability-weighted combination of per-model point estimates."""
    estimates = np.asarray(estimates, dtype=float)
    probs = np.asarray(model_probs, dtype=float)
    if estimates.shape != probs.shape or estimates.size == 0:
        raise ValueError("need one probability per estimate")
    return float(estimates @ probs)


def mixture_quantiles(
    clouds: Sequence[tuple[np.ndarray, np.ndarray]],
    model_probs: Sequence[float],
    probs: Sequence[float],
) -> np.ndarray:
    """Quantiles of the probability-weighted mixture of particle clouds.

    Each cloud is a (values, weights) pair; weights are normalized within
    the cloud before scaling by its model probability.
    """
    if len(clouds) == 0 or len(clouds) != len(model_probs):
        raise ValueError("need one model probability per cloud")
    pooled_values = []
    pooled_weights = []
    for (values, weights), pi in zip(clouds, model_probs):
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            raise ValueError("cloud weights sum to zero")
        pooled_values.append(np.asarray(values, dtype=float))
        pooled_weights.append(weights * (float(pi) / total))
    return weighted_quantiles(
        np.concatenate(pooled_values), np.concatenate(pooled_weights), probs
    )


def _quantile_key(p: float) -> str:
    return f"q{100 * p:g}"


def pooled_summary(values: np.ndarray, weights: np.ndarray) -> dict[str, float]:
    """Mean and standard quantile grid of one weighted particle cloud."""
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    total = weights.sum()
    stats = {"mean": float((weights / total) @ values)}
    quantiles = weighted_quantiles(values, weights, QUANTILE_PROBS)
    stats.update(zip(map(_quantile_key, QUANTILE_PROBS), map(float, quantiles)))
    return stats


def mixture_summary(
    clouds: Sequence[tuple[np.ndarray, np.ndarray]], model_probs: Sequence[float]
) -> dict[str, float]:
    """Mean and standard quantile grid of the model-probability mixture."""
    means = [pooled_summary(values, weights)["mean"] for values, weights in clouds]
    stats = {"mean": average_point(means, model_probs)}
    quantiles = mixture_quantiles(clouds, model_probs, QUANTILE_PROBS)
    stats.update(zip(map(_quantile_key, QUANTILE_PROBS), map(float, quantiles)))
    return stats
