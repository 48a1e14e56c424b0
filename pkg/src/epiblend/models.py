"""Discrete-time epidemic transition kernels.

Two model families over daily (or weekly) case counts:

* a self-exciting renewal process whose intensity is a geometrically
  decaying sum of past counts scaled by a random-walk reproduction number
  and damped by susceptible depletion, and
* chain-binomial compartment models (SEIR, and SEIRS with waning immunity
  plus population turnover) driven by a random-walk transmission rate.

States are small bundles of aligned arrays, one entry per particle, so a
whole particle cloud advances in a few vector operations.  Each propagate
call must receive a dedicated generator: the caller keys generators by
(model, particle block, time step), which keeps runs reproducible under
any thread scheduling.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .distributions import Prior, negbin_log_pmf, sample_binomial, sample_negbin
from .errors import ConfigurationError

__all__ = [
    "DthpDynamics",
    "HawkesState",
    "SeirDynamics",
    "SeirsDynamics",
    "SeirState",
    "model_family",
    "observation_log_likelihood",
]


def _take_fields(state, idx: np.ndarray):
    """Reindex every array field of a state by ancestor indices."""
    return dataclasses.replace(
        state, **{f.name: getattr(state, f.name)[idx] for f in dataclasses.fields(state)}
    )


def _draw(prior: Prior, n: int, gen: np.random.Generator) -> np.ndarray:
    return np.asarray(prior.sample(gen, size=n), dtype=float)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


# ---------------------------------------------------------------------------
# self-exciting renewal model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HawkesState:
    """Per-particle state of the renewal model.

    ``excitation`` is the geometric-kernel sum of all past counts, updated
    recursively; ``cum_cases`` drives susceptible depletion; ``feed`` is the
    count that the next propagate call folds into the excitation (the last
    observation, or a sampled stand-in when none exists).
    """

    intensity: np.ndarray
    repro: np.ndarray
    excitation: np.ndarray
    cum_cases: np.ndarray
    feed: np.ndarray


@dataclass(frozen=True)
class DthpDynamics:
    """Renewal-process kernel with geometric infectivity weights."""

    population: float
    mu: float
    omega: float
    nu: float
    phi: float

    family = "dthp"
    param_names = ("mu", "omega", "nu", "phi")
    init_names = ("lambda0", "r0")

    def __post_init__(self) -> None:
        _require(self.population > 0, f"population must be positive, got {self.population}")
        _require(self.mu >= 0, f"background import rate must be non-negative, got {self.mu}")
        _require(0.0 <= self.omega <= 1.0, f"kernel weight must lie in [0, 1], got {self.omega}")
        _require(self.nu >= 0, f"random-walk scale must be non-negative, got {self.nu}")
        _require(self.phi >= 0, f"overdispersion must be non-negative, got {self.phi}")

    def sample_initial(
        self, n: int, priors: Mapping[str, Prior], gen: np.random.Generator
    ) -> HawkesState:
        seeds = _draw(priors["lambda0"], n, gen)
        repro = _draw(priors["r0"], n, gen)
        if np.any(seeds < 0):
            raise ConfigurationError("initial intensity draws must be non-negative")
        if np.any(repro <= 0):
            raise ConfigurationError(
                "initial reproduction-number draws must be positive; "
                "use a prior supported on (0, inf)"
            )
        zeros = np.zeros(n)
        return HawkesState(
            intensity=seeds.copy(), repro=repro, excitation=zeros, cum_cases=zeros.copy(),
            feed=seeds,
        )

    def propagate(self, state: HawkesState, gen: np.random.Generator) -> HawkesState:
        noise = gen.normal(0.0, self.nu, size=state.repro.shape)
        repro = state.repro * np.exp(noise)
        excitation = (1.0 - self.omega) * state.excitation + state.feed
        cum_cases = state.cum_cases + state.feed
        depletion = np.clip(1.0 - cum_cases / self.population, 0.0, 1.0)
        intensity = depletion * (self.mu + repro * self.omega * excitation)
        return HawkesState(
            intensity=intensity, repro=repro, excitation=excitation, cum_cases=cum_cases,
            feed=state.feed,
        )

    def ingest(
        self, state: HawkesState, count: float | None, gen: np.random.Generator
    ) -> HawkesState:
        """Set the count driving the next step; sample it when unobserved."""
        if count is None:
            feed = sample_negbin(state.intensity, self.phi, gen).astype(float)
        else:
            feed = np.full(state.feed.shape, float(count))
        return dataclasses.replace(state, feed=feed)

    def incidence(self, state: HawkesState) -> np.ndarray:
        return state.intensity

    def rt(self, state: HawkesState) -> np.ndarray:
        return state.repro

    def take(self, state: HawkesState, idx: np.ndarray) -> HawkesState:
        return _take_fields(state, idx)


# ---------------------------------------------------------------------------
# chain-binomial compartment models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeirState:
    """Per-particle compartment counts plus the latest incident flow."""

    s: np.ndarray
    e: np.ndarray
    i: np.ndarray
    r: np.ndarray
    new_cases: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class SeirDynamics:
    """Stochastic SEIR with binomial transitions and random-walk transmission."""

    population: int
    sigma: float
    gamma: float
    nu: float
    phi: float

    family = "seir"
    param_names = ("sigma", "gamma", "nu", "phi")
    init_names = ("beta0", "e0", "i0")

    def __post_init__(self) -> None:
        _require(self.population > 0, f"population must be positive, got {self.population}")
        _require(
            float(self.population).is_integer(),
            f"compartment models need a whole-number population, got {self.population}",
        )
        _require(self.sigma >= 0, f"incubation rate must be non-negative, got {self.sigma}")
        _require(self.gamma > 0, f"recovery rate must be positive, got {self.gamma}")
        _require(self.nu >= 0, f"random-walk scale must be non-negative, got {self.nu}")
        _require(self.phi >= 0, f"overdispersion must be non-negative, got {self.phi}")

    def sample_initial(
        self, n: int, priors: Mapping[str, Prior], gen: np.random.Generator
    ) -> SeirState:
        beta = _draw(priors["beta0"], n, gen)
        e0 = _draw(priors["e0"], n, gen)
        i0 = _draw(priors["i0"], n, gen)
        if np.any(beta <= 0):
            raise ConfigurationError("initial transmission-rate draws must be positive")
        for name, arr in (("e0", e0), ("i0", i0)):
            if np.any(arr < 0) or np.any(arr != np.floor(arr)):
                raise ConfigurationError(f"{name} draws must be non-negative integers")
        e = e0.astype(np.int64)
        i = i0.astype(np.int64)
        s = int(self.population) - e - i
        if np.any(s < 0):
            raise ConfigurationError("initial exposed plus infectious exceed the population")
        zeros = np.zeros(n, dtype=np.int64)
        return SeirState(s=s, e=e, i=i, r=zeros, new_cases=zeros.copy(), beta=beta)

    def propagate(self, state: SeirState, gen: np.random.Generator) -> SeirState:
        # The walk step is drawn first but applied after the flows, so the
        # flows below use the transmission rate carried in the current state.
        noise = gen.normal(0.0, self.nu, size=state.beta.shape)
        p_inf = -np.expm1(-state.beta * state.i / self.population)
        new_exposed = sample_binomial(state.s, p_inf, gen)
        new_cases = sample_binomial(state.e, -math.expm1(-self.sigma), gen)
        recovered = sample_binomial(state.i, -math.expm1(-self.gamma), gen)
        return SeirState(
            s=state.s - new_exposed,
            e=state.e + new_exposed - new_cases,
            i=state.i + new_cases - recovered,
            r=state.r + recovered,
            new_cases=new_cases,
            beta=state.beta * np.exp(noise),
        )

    def ingest(self, state: SeirState, count, gen: np.random.Generator) -> SeirState:
        return state  # compartment models do not feed on observations

    def incidence(self, state: SeirState) -> np.ndarray:
        return state.new_cases.astype(float)

    def rt(self, state: SeirState) -> np.ndarray:
        return state.beta / self.gamma

    def take(self, state: SeirState, idx: np.ndarray) -> SeirState:
        return _take_fields(state, idx)


@dataclass(frozen=True)
class SeirsDynamics(SeirDynamics):
    """SEIR plus waning immunity and population turnover.

    Deaths are drawn among the members of each compartment that did not
    take an epidemiological transition this step, and every death is
    replaced by a susceptible recruit, so the population is conserved
    exactly along every path.
    """

    alpha: float = 0.0
    mu_demo: float = 0.0

    family = "seirs"
    param_names = ("sigma", "gamma", "nu", "phi", "alpha", "mu_demo")

    def __post_init__(self) -> None:
        super().__post_init__()
        _require(self.alpha >= 0, f"waning rate must be non-negative, got {self.alpha}")
        _require(self.mu_demo >= 0, f"turnover rate must be non-negative, got {self.mu_demo}")

    def propagate(self, state: SeirState, gen: np.random.Generator) -> SeirState:
        # Draw order matches SeirDynamics for the shared flows so that
        # alpha = mu_demo = 0 reproduces the SEIR paths draw for draw.
        noise = gen.normal(0.0, self.nu, size=state.beta.shape)
        p_inf = -np.expm1(-state.beta * state.i / self.population)
        new_exposed = sample_binomial(state.s, p_inf, gen)
        new_cases = sample_binomial(state.e, -math.expm1(-self.sigma), gen)
        recovered = sample_binomial(state.i, -math.expm1(-self.gamma), gen)
        waned = sample_binomial(state.r, -math.expm1(-self.alpha), gen)
        p_death = -math.expm1(-self.mu_demo)
        dead_e = sample_binomial(state.e - new_cases, p_death, gen)
        dead_i = sample_binomial(state.i - recovered, p_death, gen)
        dead_r = sample_binomial(state.r - waned, p_death, gen)
        recruits = dead_e + dead_i + dead_r
        return SeirState(
            s=state.s + recruits - new_exposed + waned,
            e=state.e + new_exposed - new_cases - dead_e,
            i=state.i + new_cases - recovered - dead_i,
            r=state.r + recovered - waned - dead_r,
            new_cases=new_cases,
            beta=state.beta * np.exp(noise),
        )


# ---------------------------------------------------------------------------
# observation model and family registry
# ---------------------------------------------------------------------------


def observation_log_likelihood(dynamics, state, count) -> np.ndarray:
    """Per-particle log likelihood of an observed count."""
    return negbin_log_pmf(count, dynamics.incidence(state), dynamics.phi)


_FAMILIES = {cls.family: cls for cls in (DthpDynamics, SeirDynamics, SeirsDynamics)}


def model_family(name: str):
    """Resolve a model family name to its dynamics class."""
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model family {name!r}; expected one of {sorted(_FAMILIES)}"
        ) from None
