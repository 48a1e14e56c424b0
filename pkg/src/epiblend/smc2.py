"""Sequential inference over model parameters with nested particle filters.

One :class:`ModelEnsemble` carries a population of parameter particles for
a single model family.  Each parameter particle owns a bootstrap filter
over the latent epidemic state; the filter's one-step predictive
likelihood reweights the parameter particles as observations arrive, and
the weighted average of those predictive likelihoods (taken before the
reweighting) is the model's per-step evidence term.

When the parameter weights degenerate (effective sample size below a set
fraction), the ensemble rejuvenates: particles are resampled, then each
is refreshed by a few particle-marginal Metropolis-Hastings moves using
an independence proposal fitted to the weighted particle population.  A
proposed parameter is scored by rerunning its filter over the full
history, so the chain targets the exact parameter posterior up to the
Monte Carlo noise of the likelihood estimates.

Every random draw comes from a generator keyed by (purpose, step,
particle, move), which makes results a pure function of the seed and
input series regardless of thread count.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .distributions import Fixed, Prior, mvn_log_density, sample_mvn
from .errors import ConfigurationError
from .filtering import LOG_FLOOR, StateCloud, bpf_step, ess, run_bpf, stratified_resample, uniform_cloud
from .models import model_family
from .rng import RngStream

__all__ = [
    "EngineSettings",
    "ModelEnsemble",
    "RejuvenationEvent",
    "posterior_model_probs",
    "proposal_moments",
    "weighted_predictive_term",
]

logger = logging.getLogger("epiblend")

# Stream-path purposes; every generator is keyed by one of these plus the
# indices that identify the draw site, never by execution order.
_INIT = 0
_STEP = 1
_REJ_RESAMPLE = 2
_PROPOSAL = 3
_REPLAY = 4


@dataclass(frozen=True)
class EngineSettings:
    """Tuning knobs shared by every model ensemble in a run."""

    n_theta: int = 400
    n_x: int = 200
    mh_moves: int = 5
    resample_threshold: float = 0.5
    evidence_window: int = 1
    proposal_scale: float = 0.5
    log_floor: float = LOG_FLOOR

    def __post_init__(self) -> None:
        if self.n_theta < 2:
            raise ConfigurationError(f"need at least two parameter particles, got {self.n_theta}")
        if self.n_x < 1:
            raise ConfigurationError(f"need at least one state particle, got {self.n_x}")
        if self.mh_moves < 0:
            raise ConfigurationError(f"rejuvenation moves must be non-negative, got {self.mh_moves}")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ConfigurationError(
                f"resample threshold must lie in [0, 1], got {self.resample_threshold}"
            )
        if self.evidence_window < 1:
            raise ConfigurationError(f"evidence window must be positive, got {self.evidence_window}")
        if self.proposal_scale <= 0:
            raise ConfigurationError(f"proposal scale must be positive, got {self.proposal_scale}")


@dataclass(frozen=True)
class RejuvenationEvent:
    """Diagnostics for one resample-and-move pass."""

    time_index: int
    pre_ess: float
    post_ess: float
    proposals: int
    accepted: int
    off_support: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def weighted_predictive_term(log_weights: np.ndarray, log_increments: np.ndarray) -> float:
    """One-step evidence: predictive likelihoods averaged under the weights.

    ``log_weights`` must be normalized; on a missing observation every
    increment is zero and the term collapses to exactly zero.
    """
    return float(logsumexp(np.asarray(log_weights) + np.asarray(log_increments)))


def proposal_moments(thetas: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance of the parameter particles."""
    thetas = np.asarray(thetas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if thetas.ndim != 2 or weights.shape != (thetas.shape[0],):
        raise ValueError("need one weight per parameter row")
    total = weights.sum()
    if total <= 0 or np.any(weights < 0) or np.any(~np.isfinite(weights)):
        raise ValueError("weights must be non-negative with positive sum")
    w = weights / total
    mean = w @ thetas
    centered = thetas - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, cov


def posterior_model_probs(log_evidences: Iterable[float], floor: float = LOG_FLOOR) -> np.ndarray:
    """Normalize model evidences into probabilities under equal model priors.

    Evidences are floored before normalization so a model whose every
    particle scored an observation at zero probability keeps a defined
    (vanishingly small) share instead of producing 0/0.
    """
    values = np.asarray(list(log_evidences), dtype=float)
    if values.size == 0:
        raise ValueError("need at least one evidence value")
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise ValueError(f"evidences must be real or -inf, got {values}")
    values = np.maximum(values, floor)
    values = values - values.max()
    probs = np.exp(values)
    return probs / probs.sum()


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map, threaded when asked; results never depend on scheduling."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class _ParticleUpdate:
    """Result of one particle's rejuvenation move chain."""

    theta: np.ndarray
    dynamics: object
    cloud: StateCloud
    log_ml: float
    accepted: int
    off_support: int


class ModelEnsemble:
    """Parameter particles, nested filters, and evidence for one model."""

    def __init__(
        self,
        label: str,
        family: str,
        population: float,
        priors: Mapping[str, Prior],
        settings: EngineSettings,
        stream: RngStream,
        slot: int,
    ) -> None:
        self.label = str(label)
        self.family = str(family)
        self.population = population
        self.settings = settings
        self.stream = stream.child(int(slot))

        cls = model_family(self.family)
        expected = set(cls.param_names) | set(cls.init_names)
        missing = sorted(expected - set(priors))
        if missing:
            raise ConfigurationError(
                f"model {self.label!r} ({self.family}) is missing priors for {missing}"
            )
        unknown = sorted(set(priors) - expected)
        if unknown:
            raise ConfigurationError(
                f"model {self.label!r} ({self.family}) got priors for unknown names {unknown}; "
                f"expected {sorted(expected)}"
            )
        self._family_cls = cls
        self.param_priors = {name: priors[name] for name in cls.param_names}
        self.init_priors = {name: priors[name] for name in cls.init_names}
        self.free_names = tuple(
            name for name in cls.param_names if not isinstance(priors[name], Fixed)
        )
        self._fixed_values = {
            name: priors[name].value
            for name in cls.param_names
            if isinstance(priors[name], Fixed)
        }

        n = settings.n_theta
        thetas = np.empty((n, len(self.free_names)))
        self.dynamics: list = [None] * n
        self.clouds: list[StateCloud] = [None] * n
        for m in range(n):
            gen = self.stream.child(_INIT, m).generator()
            thetas[m] = [self.param_priors[name].sample(gen) for name in self.free_names]
            dyn = self._build_dynamics(thetas[m])
            states = dyn.sample_initial(settings.n_x, self.init_priors, gen)
            self.dynamics[m] = dyn
            self.clouds[m] = uniform_cloud(states, settings.n_x)
        self.thetas = thetas
        self.log_weights = np.full(n, -math.log(n))
        self.log_ml = np.zeros(n)

        self.time_index = 0
        self.history: list[float] = []
        self.evidence_buffer: deque[float] = deque(maxlen=settings.evidence_window)
        self.evidence_terms: list[float] = []
        self.ess_trace: list[float] = []
        self.rejuvenations: list[RejuvenationEvent] = []
        self.degenerate_steps = 0

    # -- construction helpers ------------------------------------------------

    def _build_dynamics(self, theta: np.ndarray):
        kwargs = dict(self._fixed_values)
        kwargs.update(zip(self.free_names, (float(v) for v in theta)))
        return self._family_cls(population=self.population, **kwargs)

    def _log_prior(self, theta: np.ndarray) -> float:
        return sum(
            self.param_priors[name].log_density(float(value))
            for name, value in zip(self.free_names, theta)
        )

    # -- sequential updates --------------------------------------------------

    def step(self, t: int, observation: float | None, threads: int = 1) -> None:
        """Assimilate the count at step ``t`` (None or NaN marks it missing)."""
        if t != self.time_index + 1:
            raise ValueError(
                f"steps must be consecutive: ensemble is at {self.time_index}, got {t}"
            )
        count: float | None = None
        if observation is not None:
            value = float(observation)
            if not math.isnan(value):
                count = value
        self.history.append(math.nan if count is None else count)

        def advance(m: int):
            gen = self.stream.child(_STEP, t, m).generator()
            return bpf_step(self.clouds[m], count, self.dynamics[m], gen, self.settings.log_floor)

        outcomes = _map(advance, range(self.settings.n_theta), threads)
        self.clouds = [outcome.cloud for outcome in outcomes]
        self.degenerate_steps += sum(outcome.degenerate for outcome in outcomes)
        log_incs = np.array([outcome.log_increment for outcome in outcomes])

        # The evidence term uses the weights from before this observation:
        # it is the model's predictive score for the new count.
        term = weighted_predictive_term(self.log_weights, log_incs)
        self.evidence_buffer.append(term)
        self.evidence_terms.append(term)

        updated = self.log_weights + log_incs
        norm = float(logsumexp(updated))
        if not math.isfinite(norm):
            logger.warning(
                "model %s: parameter weights degenerated at step %d; reset to uniform",
                self.label, t,
            )
            updated = np.zeros_like(updated)
            norm = float(logsumexp(updated))
        self.log_weights = updated - norm
        self.log_ml += log_incs
        self.time_index = t

        current_ess = ess(np.exp(self.log_weights))
        self.ess_trace.append(current_ess)
        if current_ess < self.settings.resample_threshold * self.settings.n_theta:
            self._rejuvenate(t, threads)

    def _rejuvenate(self, t: int, threads: int) -> None:
        settings = self.settings
        n = settings.n_theta
        weights = np.exp(self.log_weights)
        pre_ess = ess(weights)

        # Fit the independence proposal to the weighted population before
        # resampling flattens it.
        if self.free_names:
            mean, cov = proposal_moments(self.thetas, weights)
            cov = settings.proposal_scale * cov

        gen = self.stream.child(_REJ_RESAMPLE, t).generator()
        ancestors = stratified_resample(weights, gen)
        self.thetas = self.thetas[ancestors]
        self.dynamics = [self.dynamics[i] for i in ancestors]
        self.clouds = [self.clouds[i] for i in ancestors]
        self.log_ml = self.log_ml[ancestors]
        self.log_weights = np.full(n, -math.log(n))

        accepted = off_support = proposals = 0
        if self.free_names and settings.mh_moves:
            history = np.asarray(self.history, dtype=float)

            def move(m: int) -> _ParticleUpdate:
                return self._move_particle(m, t, mean, cov, history)

            updates = _map(move, range(n), threads)
            for m, update in enumerate(updates):
                self.thetas[m] = update.theta
                self.dynamics[m] = update.dynamics
                self.clouds[m] = update.cloud
                self.log_ml[m] = update.log_ml
                accepted += update.accepted
                off_support += update.off_support
            proposals = n * settings.mh_moves

        event = RejuvenationEvent(
            time_index=t, pre_ess=pre_ess, post_ess=float(n),
            proposals=proposals, accepted=accepted, off_support=off_support,
        )
        self.rejuvenations.append(event)
        logger.info(
            "model %s: rejuvenated at step %d (ess %.1f -> %d, accepted %d/%d)",
            self.label, t, pre_ess, n, accepted, max(proposals, 1),
        )

    def _move_particle(
        self, m: int, t: int, mean: np.ndarray, cov: np.ndarray, history: np.ndarray
    ) -> _ParticleUpdate:
        """Run this particle's Metropolis-Hastings chain after resampling."""
        settings = self.settings
        theta = self.thetas[m].copy()
        dynamics = self.dynamics[m]
        cloud = self.clouds[m]
        log_ml = float(self.log_ml[m])
        log_prior = self._log_prior(theta)
        accepted = off_support = 0

        for j in range(settings.mh_moves):
            gen = self.stream.child(_PROPOSAL, t, m, j).generator()
            proposal = sample_mvn(mean, cov, gen)
            prior_star = self._log_prior(proposal)
            if not math.isfinite(prior_star):
                off_support += 1
                continue
            try:
                dyn_star = self._build_dynamics(proposal)
            except ConfigurationError:
                # Inside the prior yet outside the model's parameter space
                # (for example a boundary value); posterior mass there is zero.
                off_support += 1
                continue
            replay = run_bpf(
                history, dyn_star, self.init_priors, settings.n_x,
                self.stream.child(_REPLAY, t, m, j), settings.log_floor,
            )
            forward = mvn_log_density(proposal, mean, cov)
            backward = mvn_log_density(theta, mean, cov)
            log_alpha = (replay.log_marginal + prior_star + backward) - (
                log_ml + log_prior + forward
            )
            if math.log(gen.uniform()) < log_alpha:
                theta = proposal
                dynamics = dyn_star
                cloud = replay.final_cloud
                log_ml = replay.log_marginal
                log_prior = prior_star
                accepted += 1

        return _ParticleUpdate(
            theta=theta, dynamics=dynamics, cloud=cloud, log_ml=log_ml,
            accepted=accepted, off_support=off_support,
        )

    def point_dynamics(self):
        """Dynamics at the weighted posterior-mean parameter vector."""
        theta_bar = np.exp(self.log_weights) @ self.thetas
        return self._build_dynamics(theta_bar)

    # -- summaries -----------------------------------------------------------

    def log_evidence(self) -> float:
        """Sum of the buffered per-step evidence terms (the sliding window)."""
        return float(sum(self.evidence_buffer))

    def pooled_target(self, target: str) -> tuple[np.ndarray, np.ndarray]:
        """All state particles of a target quantity with their pooled masses.

        Mass of one state particle is (its parameter particle's weight)
        times (its weight within that filter); masses sum to one.
        """
        if target not in ("incidence", "rt"):
            raise ValueError(f"unknown target {target!r}; expected 'incidence' or 'rt'")
        theta_w = np.exp(self.log_weights)
        values = np.concatenate(
            [getattr(dyn, target)(cloud.states) for dyn, cloud in zip(self.dynamics, self.clouds)]
        )
        masses = np.concatenate(
            [w * cloud.norm_weights for w, cloud in zip(theta_w, self.clouds)]
        )
        return values, masses

    def parameter_summary(self) -> dict[str, dict[str, float]]:
        """Weighted posterior summaries for each free model parameter."""
        from .averaging import QUANTILE_PROBS, weighted_quantiles

        weights = np.exp(self.log_weights)
        summary: dict[str, dict[str, float]] = {}
        for k, name in enumerate(self.free_names):
            column = self.thetas[:, k]
            mean = float(weights @ column)
            sd = math.sqrt(max(float(weights @ (column - mean) ** 2), 0.0))
            stats = {"mean": mean, "sd": sd}
            quantiles = weighted_quantiles(column, weights, QUANTILE_PROBS)
            for p, q in zip(QUANTILE_PROBS, quantiles):
                stats[f"q{100 * p:g}"] = float(q)
            summary[name] = stats
        return summary
