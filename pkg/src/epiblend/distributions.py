"""Priors and sampling distributions shared by the epidemic models.

The observation model for daily counts is a negative binomial with mean
``lam`` and variance ``lam + phi * lam**2``; ``phi`` below a small switch
point degrades gracefully to Poisson.  Parameter priors are value-like
spec objects that know how to sample themselves and score a point, so the
same object serves initialization, Metropolis-Hastings prior ratios, and
configuration round trips.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, ndtr

from .errors import ConfigurationError

__all__ = [
    "POISSON_SWITCH",
    "Fixed",
    "Normal",
    "Prior",
    "TruncatedNormal",
    "Uniform",
    "UniformDiscrete",
    "mvn_log_density",
    "negbin_log_pmf",
    "prior_from_dict",
    "prior_to_dict",
    "sample_binomial",
    "sample_mvn",
    "sample_negbin",
]

# Below this overdispersion the negative binomial is numerically Poisson.
POISSON_SWITCH = 1e-8

# Rejection sampling rounds for truncated normals; any window keeping more
# than ~0.1% of the parent mass finishes in a handful of rounds.
_MAX_REJECTION_ROUNDS = 1000

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# prior specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normal:
    """Gaussian prior on the real line."""

    mean: float
    sd: float
    kind: ClassVar[str] = "normal"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)) or self.sd <= 0:
            raise ConfigurationError(f"normal prior needs finite mean and sd > 0, got {self}")

    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def sample(self, gen: np.random.Generator, size: int | None = None):
        return gen.normal(self.mean, self.sd, size=size)

    def log_density(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return -0.5 * _LOG_2PI - math.log(self.sd) - 0.5 * z * z


@dataclass(frozen=True)
class TruncatedNormal:
    """Gaussian restricted to [lo, hi]; mean and sd describe the parent."""

    lo: float
    hi: float
    mean: float
    sd: float
    kind: ClassVar[str] = "trunc_normal"

    def __post_init__(self) -> None:
        ok = (
            math.isfinite(self.lo)
            and math.isfinite(self.hi)
            and self.lo < self.hi
            and math.isfinite(self.mean)
            and self.sd > 0
        )
        if not ok:
            raise ConfigurationError(f"invalid truncated normal window: {self}")

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def _log_window_mass(self) -> float:
        mass = ndtr((self.hi - self.mean) / self.sd) - ndtr((self.lo - self.mean) / self.sd)
        if mass <= 0.0:
            raise ConfigurationError(
                f"truncated normal window [{self.lo}, {self.hi}] retains no mass"
            )
        return math.log(mass)

    def sample(self, gen: np.random.Generator, size: int | None = None):
        n = 1 if size is None else int(size)
        out = np.empty(n)
        pending = np.arange(n)
        for _ in range(_MAX_REJECTION_ROUNDS):
            draws = gen.normal(self.mean, self.sd, size=pending.size)
            keep = (draws >= self.lo) & (draws <= self.hi)
            out[pending[keep]] = draws[keep]
            pending = pending[~keep]
            if pending.size == 0:
                return float(out[0]) if size is None else out
        raise ConfigurationError(
            f"truncated normal rejection sampling exceeded the iteration cap for {self}"
        )

    def log_density(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return -math.inf
        z = (x - self.mean) / self.sd
        parent = -0.5 * _LOG_2PI - math.log(self.sd) - 0.5 * z * z
        return parent - self._log_window_mass()


@dataclass(frozen=True)
class Uniform:
    """Continuous uniform on [lo, hi]."""

    lo: float
    hi: float
    kind: ClassVar[str] = "uniform"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise ConfigurationError(f"uniform prior needs lo < hi, got {self}")

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def sample(self, gen: np.random.Generator, size: int | None = None):
        return gen.uniform(self.lo, self.hi, size=size)

    def log_density(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)


@dataclass(frozen=True)
class UniformDiscrete:
    """Uniform over an explicit finite value set (initial-count priors)."""

    values: tuple[float, ...]
    kind: ClassVar[str] = "uniform_discrete"

    def __post_init__(self) -> None:
        if len(self.values) == 0 or len(set(self.values)) != len(self.values):
            raise ConfigurationError(
                f"discrete uniform prior needs a non-empty set of distinct values, got {self}"
            )
        object.__setattr__(self, "values", tuple(self.values))

    def support(self) -> tuple[float, float]:
        return (min(self.values), max(self.values))

    def sample(self, gen: np.random.Generator, size: int | None = None):
        draws = gen.choice(np.asarray(self.values), size=size)
        return draws if size is not None else float(draws)

    def log_density(self, x: float) -> float:
        if any(abs(x - v) < 1e-9 for v in self.values):
            return -math.log(len(self.values))
        return -math.inf


@dataclass(frozen=True)
class Fixed:
    """Degenerate prior pinning a parameter to one value."""

    value: float
    kind: ClassVar[str] = "fixed"

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ConfigurationError(f"fixed prior needs a finite value, got {self}")

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def sample(self, gen: np.random.Generator, size: int | None = None):
        return self.value if size is None else np.full(int(size), self.value)

    def log_density(self, x: float) -> float:
        return 0.0 if x == self.value else -math.inf


Prior = Union[Normal, TruncatedNormal, Uniform, UniformDiscrete, Fixed]

_PRIOR_KINDS: dict[str, type] = {
    cls.kind: cls for cls in (Normal, TruncatedNormal, Uniform, UniformDiscrete, Fixed)
}


def prior_from_dict(spec: dict) -> Prior:
    """Build a prior from its serialized form, validating the shape."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError(f"prior spec must be a mapping with a 'kind' key, got {spec!r}")
    kind = spec["kind"]
    cls = _PRIOR_KINDS.get(kind)
    if cls is None:
        raise ConfigurationError(
            f"unknown prior kind {kind!r}; expected one of {sorted(_PRIOR_KINDS)}"
        )
    fields = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "uniform_discrete":
        if "values" in fields:
            values = tuple(fields.pop("values"))
        elif {"lo", "hi"} <= fields.keys():
            lo, hi = int(fields.pop("lo")), int(fields.pop("hi"))
            values = tuple(range(lo, hi + 1))
        else:
            raise ConfigurationError(
                "uniform_discrete prior needs 'values' or an integer 'lo'/'hi' range"
            )
        fields["values"] = values
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ConfigurationError(f"bad fields for prior kind {kind!r}: {exc}") from exc


def prior_to_dict(prior: Prior) -> dict:
    """Serialize a prior to the mapping accepted by :func:`prior_from_dict`."""
    if isinstance(prior, Normal):
        return {"kind": prior.kind, "mean": prior.mean, "sd": prior.sd}
    if isinstance(prior, TruncatedNormal):
        return {
            "kind": prior.kind,
            "lo": prior.lo,
            "hi": prior.hi,
            "mean": prior.mean,
            "sd": prior.sd,
        }
    if isinstance(prior, Uniform):
        return {"kind": prior.kind, "lo": prior.lo, "hi": prior.hi}
    if isinstance(prior, UniformDiscrete):
        return {"kind": prior.kind, "values": list(prior.values)}
    if isinstance(prior, Fixed):
        return {"kind": prior.kind, "value": prior.value}
    raise ConfigurationError(f"not a prior: {prior!r}")


# ---------------------------------------------------------------------------
# count distributions
# ---------------------------------------------------------------------------


def sample_binomial(n, p, gen: np.random.Generator):
    """Binomial transition draws; callers pass probabilities already in [0, 1]."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError(f"binomial probability outside [0, 1]: {p!r}")
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ValueError("binomial trial count must be non-negative")
    return gen.binomial(n_arr, p_arr)


def negbin_log_pmf(y, lam, phi: float):
    """Log pmf of the mean/overdispersion negative binomial.

    Mean ``lam``, variance ``lam + phi * lam**2``.  ``phi`` below the
    Poisson switch point evaluates the Poisson log pmf instead.  A zero
    ``lam`` is a point mass at zero.
    """
    if phi < 0:
        raise ValueError("overdispersion must be non-negative")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or np.any(y_arr != np.floor(y_arr)):
        raise ValueError("observed counts must be non-negative integers")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or np.any(~np.isfinite(lam_arr)):
        raise ValueError("negative binomial mean must be finite and non-negative")

    y_b, lam_b = np.broadcast_arrays(y_arr, lam_arr)
    out = np.full(y_b.shape, -np.inf)
    zero_mean = lam_b == 0.0
    out[zero_mean & (y_b == 0)] = 0.0

    live = ~zero_mean
    if np.any(live):
        yl, ll = y_b[live], lam_b[live]
        if phi < POISSON_SWITCH:
            vals = yl * np.log(ll) - ll - gammaln(yl + 1.0)
        else:
            r = 1.0 / phi
            log1p_term = np.log1p(phi * ll)
            vals = (
                gammaln(yl + r)
                - gammaln(yl + 1.0)
                - gammaln(r)
                - r * log1p_term
                + yl * (math.log(phi) + np.log(ll) - log1p_term)
            )
        out[live] = vals

    if np.isscalar(y) and np.isscalar(lam):
        return float(out)
    return out


def sample_negbin(lam, phi: float, gen: np.random.Generator):
    """Draw counts from the same family scored by :func:`negbin_log_pmf`."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ValueError("negative binomial mean must be non-negative")
    if phi < POISSON_SWITCH:
        return gen.poisson(lam_arr)
    p = 1.0 / (1.0 + phi * lam_arr)
    return gen.negative_binomial(1.0 / phi, p)


# ---------------------------------------------------------------------------
# multivariate normal proposals
# ---------------------------------------------------------------------------


def _stabilized_cholesky(cov: np.ndarray) -> np.ndarray | None:
    """Cholesky factor after trace-scaled diagonal jitter; None for zero trace."""
    cov = np.asarray(cov, dtype=float)
    dim = cov.shape[0]
    trace = float(np.trace(cov))
    if trace < 0:
        raise ValueError("covariance has negative trace")
    if trace == 0.0:
        if np.any(cov != 0.0):
            raise ValueError("covariance with zero trace must be the zero matrix")
        return None
    jitter = 1e-10 * trace / dim
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(dim))
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive semidefinite") from exc


def sample_mvn(mean: np.ndarray, cov: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, cov); a zero covariance returns the mean exactly."""
    mean = np.asarray(mean, dtype=float)
    factor = _stabilized_cholesky(cov)
    if factor is None:
        return mean.copy()
    return mean + factor @ gen.normal(size=mean.size)


def mvn_log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Gaussian log density with the same stabilizing jitter as sampling."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    factor = _stabilized_cholesky(cov)
    if factor is None:
        return 0.0 if np.allclose(x, mean) else -math.inf
    z = solve_triangular(factor, x - mean, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    return -0.5 * (mean.size * _LOG_2PI + log_det + float(z @ z))
