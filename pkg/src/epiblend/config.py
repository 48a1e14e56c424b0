"""Run configuration: model specifications, engine settings, presets.

A run is fully described by one JSON document: the models to compare
(each with a complete prior map), the engine tuning, the data source
(a CSV path or a built-in scenario), the forecast settings, and the
output directory.  Fixed parameter values are expressed as degenerate
("fixed") priors so that every model parameter is configured by exactly
one entry.  Preset documents for the synthetic scenarios and for weekly
and daily surveillance settings ship with the package and can be regenerated from :func:`preset_config`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .distributions import Prior, prior_from_dict, prior_to_dict
from .errors import ConfigurationError
from .models import model_family
from .smc2 import EngineSettings

__all__ = [
    "DEFAULT_SEED",
    "DataSettings",
    "ForecastSettings",
    "ModelSpec",
    "RunConfig",
    "load_config",
    "preset_config",
    "preset_names",
    "save_config",
]

# Seed used by every entry point when none is given, so casual runs are
# reproducible by default.
DEFAULT_SEED = 1

_THETA_MODES = ("ensemble", "point")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


@dataclass(frozen=True)
class ModelSpec:
    """One model entry: a label, a family, and a complete prior map."""

    label: str
    family: str
    priors: Mapping[str, Prior]
    population: float | None = None

    def __post_init__(self) -> None:
        _require(bool(self.label) and isinstance(self.label, str), "model label must be a non-empty string")
        _require(
            "." not in self.label and "," not in self.label,
            f"model label {self.label!r} must not contain '.' or ',' "
            "(labels become CSV column prefixes)",
        )
        _require(
            self.label != "ensemble",
            "model label 'ensemble' is reserved for the blended estimates",
        )
        cls = model_family(self.family)
        expected = set(cls.param_names) | set(cls.init_names)
        missing = sorted(expected - set(self.priors))
        _require(
            not missing,
            f"model {self.label!r} ({self.family}) is missing a prior or fixed value "
            f"for parameter(s) {missing}",
        )
        unknown = sorted(set(self.priors) - expected)
        _require(
            not unknown,
            f"model {self.label!r} ({self.family}) configures unknown parameter(s) "
            f"{unknown}; expected {sorted(expected)}",
        )
        if self.population is not None:
            _require(self.population > 0, f"model {self.label!r} population must be positive")

    @classmethod
    def from_dict(cls, spec: Mapping) -> "ModelSpec":
        if not isinstance(spec, Mapping):
            raise ConfigurationError(f"model entry must be a mapping, got {spec!r}")
        unknown = set(spec) - {"label", "family", "priors", "population"}
        _require(not unknown, f"model entry has unknown keys {sorted(unknown)}")
        _require("family" in spec, f"model entry needs a 'family' key: {dict(spec)!r}")
        priors_spec = spec.get("priors")
        _require(isinstance(priors_spec, Mapping), "model entry needs a 'priors' mapping")
        priors = {}
        for name, value in priors_spec.items():
            try:
                priors[name] = value if not isinstance(value, Mapping) else prior_from_dict(value)
            except ConfigurationError as exc:
                raise ConfigurationError(f"prior for parameter {name!r}: {exc}") from exc
        return cls(
            label=spec.get("label", spec["family"]),
            family=spec["family"],
            priors=priors,
            population=spec.get("population"),
        )

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "family": self.family,
            "priors": {name: prior_to_dict(p) for name, p in self.priors.items()},
        }
        if self.population is not None:
            out["population"] = self.population
        return out


def as_model_spec(value) -> ModelSpec:
    """Accept a ModelSpec or its dict form."""
    if isinstance(value, ModelSpec):
        return value
    if isinstance(value, Mapping):
        return ModelSpec.from_dict(value)
    raise ConfigurationError(f"cannot interpret {value!r} as a model specification")


@dataclass(frozen=True)
class DataSettings:
    """Where observations come from: a CSV file or a built-in scenario."""

    path: str | None = None
    scenario: str | None = None
    unit: str = "step"

    def __post_init__(self) -> None:
        has_path, has_scenario = self.path is not None, self.scenario is not None
        _require(
            has_path != has_scenario,
            "data settings need exactly one of 'path' or 'scenario'",
        )


@dataclass(frozen=True)
class ForecastSettings:
    horizon: int = 14
    theta_mode: str = "ensemble"

    def __post_init__(self) -> None:
        _require(self.horizon >= 0, f"forecast horizon must be non-negative, got {self.horizon}")
        _require(
            self.theta_mode in _THETA_MODES,
            f"theta mode must be one of {_THETA_MODES}, got {self.theta_mode!r}",
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run, serializable to one JSON file."""

    models: tuple[ModelSpec, ...]
    population: float
    data: DataSettings
    engine: EngineSettings = field(default_factory=EngineSettings)
    seed: int = DEFAULT_SEED
    threads: int = 1
    forecast: ForecastSettings = field(default_factory=ForecastSettings)
    output: str = "run"

    def __post_init__(self) -> None:
        _require(len(self.models) >= 1, "configuration needs at least one model")
        labels = [m.label for m in self.models]
        _require(len(set(labels)) == len(labels), f"model labels must be unique, got {labels}")
        _require(self.population > 0, f"population must be positive, got {self.population}")
        _require(self.threads >= 1, f"thread count must be at least 1, got {self.threads}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RunConfig":
        if not isinstance(doc, Mapping):
            raise ConfigurationError("configuration must be a mapping")
        known = {"models", "population", "data", "engine", "forecast", "output"}
        unknown = set(doc) - known
        _require(not unknown, f"configuration has unknown keys {sorted(unknown)}")
        for key in ("models", "population", "data"):
            _require(key in doc, f"configuration is missing required key {key!r}")

        models = tuple(as_model_spec(entry) for entry in doc["models"])

        engine_doc = dict(doc.get("engine", {}))
        seed = int(engine_doc.pop("seed", DEFAULT_SEED))
        threads = int(engine_doc.pop("threads", 1))
        engine_keys = {
            "n_theta", "n_x", "mh_moves", "resample_threshold",
            "evidence_window", "proposal_scale",
        }
        unknown = set(engine_doc) - engine_keys
        _require(not unknown, f"engine settings have unknown keys {sorted(unknown)}")
        engine = EngineSettings(**engine_doc)

        data_doc = dict(doc["data"])
        unknown = set(data_doc) - {"path", "scenario", "unit"}
        _require(not unknown, f"data settings have unknown keys {sorted(unknown)}")
        data = DataSettings(**data_doc)

        forecast_doc = dict(doc.get("forecast", {}))
        unknown = set(forecast_doc) - {"horizon", "theta_mode"}
        _require(not unknown, f"forecast settings have unknown keys {sorted(unknown)}")
        forecast = ForecastSettings(**forecast_doc)

        return cls(
            models=models,
            population=float(doc["population"]),
            data=data,
            engine=engine,
            seed=seed,
            threads=threads,
            forecast=forecast,
            output=str(doc.get("output", "run")),
        )

    def to_dict(self) -> dict:
        data = {"unit": self.data.unit}
        if self.data.path is not None:
            data["path"] = self.data.path
        if self.data.scenario is not None:
            data["scenario"] = self.data.scenario
        return {
            "models": [m.to_dict() for m in self.models],
            "population": self.population,
            "data": data,
            "engine": {
                "n_theta": self.engine.n_theta,
                "n_x": self.engine.n_x,
                "mh_moves": self.engine.mh_moves,
                "resample_threshold": self.engine.resample_threshold,
                "evidence_window": self.engine.evidence_window,
                "proposal_scale": self.engine.proposal_scale,
                "seed": self.seed,
                "threads": self.threads,
            },
            "forecast": {
                "horizon": self.forecast.horizon,
                "theta_mode": self.forecast.theta_mode,
            },
            "output": self.output,
        }


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"configuration file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"configuration file {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# preset configurations
# ---------------------------------------------------------------------------


def _normal(mean: float, sd: float) -> dict:
    return {"kind": "normal", "mean": mean, "sd": sd}


def _truncnormal(lo: float, hi: float, mean: float, sd: float) -> dict:
    return {"kind": "trunc_normal", "lo": lo, "hi": hi, "mean": mean, "sd": sd}


def _uniform(lo: float, hi: float) -> dict:
    return {"kind": "uniform", "lo": lo, "hi": hi}


def _choice(lo: int, hi: int) -> dict:
    return {"kind": "uniform_discrete", "lo": lo, "hi": hi}


def _fixed(value: float) -> dict:
    return {"kind": "fixed", "value": value}


def _scenario_doc(name: str) -> dict:
    """Benchmark setup: renewal model vs SEIR on one synthetic scenario."""
    r0_mean = {"A": 1.8, "B": 2.0, "C": 4.25}[name]
    beta0_mean = {"A": 0.32, "B": 0.33, "C": 0.725}[name]
    gamma = (
        _truncnormal(0.0, 0.2, 0.16, 0.1) if name == "C"
        else _truncnormal(0.0, 1.0, 0.16, 0.05)
    )
    walk_scale = _truncnormal(0.05, 0.2, 0.1, 0.01)
    overdispersion = _uniform(0.0, 0.1)
    return {
        "population": 50000,
        "data": {"scenario": name, "unit": "day"},
        "engine": {
            "n_theta": 400, "n_x": 200, "mh_moves": 5, "resample_threshold": 0.5,
            "evidence_window": 1, "proposal_scale": 0.5, "seed": DEFAULT_SEED, "threads": 1,
        },
        "forecast": {"horizon": 14, "theta_mode": "ensemble"},
        "output": f"runs/scenario_{name.lower()}",
        "models": [
            {
                "label": "dthp", "family": "dthp",
                "priors": {
                    "mu": _fixed(0.0),
                    "omega": _truncnormal(0.0, 1.0, 0.16, 0.05),
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "lambda0": _choice(0, 3),
                    "r0": _normal(r0_mean, 0.05),
                },
            },
            {
                "label": "seir", "family": "seir",
                "priors": {
                    "sigma": _truncnormal(0.2, 0.7, 0.5, 0.05),
                    "gamma": gamma,
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "beta0": _normal(beta0_mean, 0.01),
                    "e0": _choice(0, 5),
                    "i0": _choice(0, 15),
                },
            },
        ],
    }


def _influenza_doc() -> dict:
    """Weekly influenza setup: renewal model vs SEIRS with waning and turnover."""
    walk_scale = _uniform(0.0, 0.16)
    overdispersion = _uniform(0.0, 0.2)
    return {
        "population": 5.16e6,
        "data": {"path": "influenza.csv", "unit": "week"},
        "engine": {
            "n_theta": 400, "n_x": 200, "mh_moves": 5, "resample_threshold": 0.5,
            "evidence_window": 1, "proposal_scale": 0.5, "seed": DEFAULT_SEED, "threads": 1,
        },
        "forecast": {"horizon": 4, "theta_mode": "ensemble"},
        "output": "runs/influenza",
        "models": [
            {
                "label": "dthp", "family": "dthp",
                "priors": {
                    "mu": _fixed(0.0),
                    "omega": _uniform(0.0, 1.0),
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "lambda0": _choice(0, 15),
                    "r0": _normal(0.5, 0.05),
                },
            },
            {
                "label": "seirs", "family": "seirs",
                "priors": {
                    "sigma": _truncnormal(7 / 3, 7.0, 7 / 1.5, 0.1),
                    "gamma": _truncnormal(1.0, 7 / 5, 7 / 6, 0.1),
                    "alpha": _uniform(1 / 48, 1 / 24),
                    "mu_demo": _fixed(1 / (80 * 52)),
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "beta0": _truncnormal(0.0, 1.0, 0.4, 0.05),
                    "e0": _choice(0, 5),
                    "i0": _choice(0, 15),
                },
            },
        ],
    }


def _covid_doc() -> dict:
    """Daily COVID setup: renewal model vs SEIR with a seeded exposed case."""
    walk_scale = _truncnormal(0.05, 0.2, 0.1, 0.01)
    overdispersion = _uniform(0.0, 0.2)
    return {
        "population": 5.16e6,
        "data": {"path": "covid.csv", "unit": "day"},
        "engine": {
            "n_theta": 400, "n_x": 200, "mh_moves": 5, "resample_threshold": 0.5,
            "evidence_window": 1, "proposal_scale": 0.5, "seed": DEFAULT_SEED, "threads": 1,
        },
        "forecast": {"horizon": 14, "theta_mode": "ensemble"},
        "output": "runs/covid",
        "models": [
            {
                "label": "dthp", "family": "dthp",
                "priors": {
                    "mu": _fixed(0.0),
                    "omega": _uniform(0.0, 1.0),
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "lambda0": _choice(0, 20),
                    "r0": _normal(3.2, 0.05),
                },
            },
            {
                "label": "seir", "family": "seir",
                "priors": {
                    "sigma": _truncnormal(1 / 5, 1 / 3, 1 / 4, 0.1),
                    "gamma": _truncnormal(1 / 7.5, 1 / 4.5, 1 / 6, 0.2),
                    "nu": walk_scale,
                    "phi": overdispersion,
                    "beta0": _normal(0.5, 0.05),
                    "e0": _fixed(1),
                    "i0": _choice(0, 20),
                },
            },
        ],
    }


_PRESETS = {
    "scenario_a": lambda: _scenario_doc("A"),
    "scenario_b": lambda: _scenario_doc("B"),
    "scenario_c": lambda: _scenario_doc("C"),
    "influenza": _influenza_doc,
    "covid": _covid_doc,
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def preset_config(name: str) -> RunConfig:
    """Built-in configuration by name (also shipped as JSON under configs/)."""
    key = name.lower().replace("-", "_")
    if key in ("a", "b", "c"):
        key = f"scenario_{key}"
    if key not in _PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available presets: {', '.join(preset_names())}"
        )
    return RunConfig.from_dict(_PRESETS[key]())


def preset_document(name: str) -> dict:
    """The raw JSON document for a preset (what the shipped files contain)."""
    key = name.lower().replace("-", "_")
    if key not in _PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available presets: {', '.join(preset_names())}"
        )
    return _PRESETS[key]()


def packaged_config_text(name: str) -> str:
    """Contents of a shipped configs/<name>.json file."""
    return resources.files("epiblend").joinpath(f"configs/{name}.json").read_text()
