"""Point, interval, and distributional forecast scores.

The particle CRPS is the standard ensemble form: mean absolute error of
the members minus half the mean absolute pairwise spread.  It is computed
in O(N log N) from sorted prefix sums; the tests pin it against the
quadratic double loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["ScoreReport", "coverage", "crps_particles", "crps_sample", "rmse"]


def _aligned(truth: np.ndarray, *others: np.ndarray) -> tuple[np.ndarray, ...]:
    truth = np.asarray(truth, dtype=float)
    rest = [np.asarray(o, dtype=float) for o in others]
    for o in rest:
        if o.shape != truth.shape:
            raise ValueError("series must share one length")
    keep = ~np.isnan(truth)
    if not np.any(keep):
        raise ValueError("no scored entries: truth is empty or all missing")
    return (truth[keep], *[o[keep] for o in rest])


def rmse(truth: np.ndarray, predictions: np.ndarray) -> float:
    """Root mean squared error over entries where truth is known."""
    z, pred = _aligned(truth, predictions)
    return float(np.sqrt(np.mean((z - pred) ** 2)))


def coverage(truth: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """Share of known truth values inside the closed interval [lower, upper]."""
    z, lo, hi = _aligned(truth, lower, upper)
    return float(np.mean((z >= lo) & (z <= hi)))


def crps_sample(z: float, members: np.ndarray) -> float:
    """CRPS of one observation against an unweighted ensemble."""
    x = np.sort(np.asarray(members, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("ensemble is empty")
    first = float(np.mean(np.abs(z - x)))
    # mean pairwise spread: sum |x_i - x_j| over all pairs = 2 ranks.x
    ranks = 2.0 * np.arange(n) - n + 1.0
    half_mean_spread = float(ranks @ x) / (n * n)
    return first - half_mean_spread


def crps_particles(truth: np.ndarray, sample_sets: Sequence[np.ndarray]) -> float:
    """Mean CRPS across times with a known truth value."""
    truth = np.asarray(truth, dtype=float)
    if truth.size != len(sample_sets):
        raise ValueError("need one ensemble per truth entry")
    scores = [
        crps_sample(float(z), xs)
        for z, xs in zip(truth, sample_sets)
        if not np.isnan(z)
    ]
    if not scores:
        raise ValueError("no scored entries: truth is empty or all missing")
    return float(np.mean(scores))


@dataclass(frozen=True)
class ScoreReport:
    """Scores of one estimate series against one truth series."""

    rmse: float
    coverage95: float
    crps: float
    n_scored: int
