"""Seedable, splittable random streams.

Every stochastic component of a run draws from a generator keyed by an
explicit integer path under one master seed.  Work scheduled across any
number of threads therefore produces identical draws: each unit of work
owns a stream addressed by *what* it is (model, particle, time step,
purpose), never by *when* it runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream"]


@dataclass(frozen=True)
class RngStream:
    """Value-like handle for a deterministic random stream.

    Equal (seed, path) pairs yield identical draw sequences; distinct
    paths yield statistically independent ones.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *tags: int) -> "RngStream":
        """Address the sub-stream obtained by appending ``tags`` to the path."""
        return RngStream(self.seed, self.path + tags)

    def generator(self) -> np.random.Generator:
        """Materialize a fresh generator positioned at the stream origin."""
        return np.random.default_rng(np.random.SeedSequence((self.seed, *self.path)))
