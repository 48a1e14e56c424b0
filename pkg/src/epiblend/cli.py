"""Command-line surface: simulate, fit, forecast, evaluate.

Exit codes: 0 success, 1 configuration problem (including bad flags),
2 data problem.  Every command takes or derives a seed (default 1) and
produces deterministic artifacts: rerunning with the same inputs yields
byte-identical files, whatever the thread count.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    ingest_csv,
    load_state,
    read_dated_table,
    read_rows,
    read_run_json,
    save_state,
    write_rows,
    write_run_json,
    write_scores,
    write_series,
)
from .config import (
    DEFAULT_SEED,
    DataSettings,
    RunConfig,
    load_config,
    preset_config,
)
from .errors import ConfigurationError, DataError
from .estimator import EpidemicEnsemble
from .metrics import coverage, crps_particles, rmse
from .rng import RngStream
from .scenarios import scenario, simulate_scenario

__all__ = ["main"]

# Environment variable overriding the configured worker-thread count.
THREADS_ENV_VAR = "EPIBLEND_THREADS"

# Stream purpose for generating scenario data inside `fit`; the estimator
# itself uses purposes 0 (fit) and 1 (forecast) under the same root seed.
_DATA_STREAM = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="epiblend",
        description=(
            "Sequential multi-model inference for epidemic case counts: "
            "fits competing transmission models by nested particle filtering, "
            "blends their estimates by predictive performance, and forecasts."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sim = sub.add_parser(
        "simulate", help="generate a synthetic outbreak (observations + truth)"
    )
    sim.add_argument("--scenario", required=True, type=str.upper, choices=("A", "B", "C"),
                     help="built-in transmission scenario")
    sim.add_argument("--seed", type=int, default=DEFAULT_SEED,
                     help=f"random seed (default {DEFAULT_SEED})")
    sim.add_argument("--out", default=None,
                     help="output directory (default scenario_<x>)")
    sim.add_argument("--population", type=float, default=None, help="population override")
    sim.add_argument("--horizon", type=int, default=None, help="number of steps override")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="fit configured models to a series and blend them")
    fit.add_argument("--config", default=None, help="JSON run configuration")
    fit.add_argument("--scenario", type=str.upper, choices=("A", "B", "C"), default=None,
                     help="use the built-in preset for this scenario")
    fit.add_argument("--data", default=None, help="CSV observations (header date,count)")
    fit.add_argument("--out", default=None, help="output directory (default from config)")
    fit.add_argument("--seed", type=int, default=None, help="seed override")
    fit.add_argument("--threads", type=int, default=None,
                     help=f"worker threads (or set {THREADS_ENV_VAR}); results do not depend on it")
    fit.add_argument("--limit", type=int, default=None,
                     help="fit only the first LIMIT observations")
    fit.set_defaults(func=_cmd_fit)

    fc = sub.add_parser("forecast", help="forecast from a fitted run with frozen model weights")
    fc.add_argument("--config", required=True, help="JSON run configuration of the fitted run")
    fc.add_argument("--horizon", type=int, default=None, help="lead steps (default from config)")
    fc.add_argument("--theta-mode", choices=("ensemble", "point"), default=None,
                    help="parameter treatment (default from config)")
    fc.add_argument("--samples", type=int, default=400,
                    help="equal-mass sample paths per lead (default 400)")
    fc.add_argument("--out", default=None, help="run directory (default from config)")
    fc.set_defaults(func=_cmd_forecast)

    ev = sub.add_parser("evaluate", help="score a run's estimates and forecasts against truth")
    ev.add_argument("--run", required=True, help="run directory written by fit/forecast")
    ev.add_argument("--truth", required=True,
                    help="truth CSV (date,count[,rt]); count scores incidence, rt scores R_t")
    ev.add_argument("--out", default=None, help="directory for score files (default run dir)")
    ev.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_data(name: str, seed: int, population=None, horizon=None):
    spec = scenario(name)
    overrides = {}
    if population is not None:
        if population <= 0 or not float(population).is_integer():
            raise ConfigurationError(
                f"--population must be a positive whole number, got {population}"
            )
        overrides["population"] = int(population)
    if horizon is not None:
        if horizon < 1:
            raise ConfigurationError(f"--horizon must be at least 1, got {horizon}")
        overrides["horizon"] = horizon
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return simulate_scenario(spec, RngStream(int(seed)).child(_DATA_STREAM))


def _write_scenario_files(out: Path, data) -> None:
    write_series(out / "observations.csv", data.observations.astype(float))
    write_series(
        out / "truth.csv",
        data.observations.astype(float),
        extra={"rt": data.true_rt, "beta": data.true_beta},
    )


def _cmd_simulate(args) -> int:
    out = Path(args.out if args.out is not None else f"scenario_{args.scenario.lower()}")
    out.mkdir(parents=True, exist_ok=True)
    data = _simulate_data(args.scenario, args.seed, args.population, args.horizon)
    _write_scenario_files(out, data)
    print(
        f"wrote {data.observations.size}-step scenario {args.scenario} series to "
        f"{out / 'observations.csv'} (truth in truth.csv)"
    )
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _resolve_config(args) -> RunConfig:
    if args.config is not None:
        config = load_config(args.config)
        if getattr(args, "scenario", None):
            config = dataclasses.replace(
                config, data=DataSettings(scenario=args.scenario, unit=config.data.unit)
            )
    elif getattr(args, "scenario", None):
        config = preset_config(f"scenario_{args.scenario.lower()}")
    else:
        raise ConfigurationError("fit needs --config FILE or --scenario {A,B,C}")

    if getattr(args, "data", None):
        config = dataclasses.replace(
            config, data=DataSettings(path=args.data, unit=config.data.unit)
        )
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=int(args.seed))
    threads = getattr(args, "threads", None)
    if threads is None and os.environ.get(THREADS_ENV_VAR):
        try:
            threads = int(os.environ[THREADS_ENV_VAR])
        except ValueError:
            raise ConfigurationError(
                f"{THREADS_ENV_VAR} must be an integer, got {os.environ[THREADS_ENV_VAR]!r}"
            ) from None
    if threads is not None:
        config = dataclasses.replace(config, threads=int(threads))
    if getattr(args, "out", None):
        config = dataclasses.replace(config, output=args.out)
    return config


def _config_document(config: RunConfig) -> dict:
    # The thread count is an execution detail, not part of the run
    # identity, so it is kept out of persisted metadata (artifacts must
    # be byte-identical across thread counts).
    document = config.to_dict()
    document["engine"].pop("threads", None)
    return document


def _estimator_from_config(config: RunConfig) -> EpidemicEnsemble:
    return EpidemicEnsemble(
        models=list(config.models),
        population=config.population,
        n_theta=config.engine.n_theta,
        n_x=config.engine.n_x,
        mh_moves=config.engine.mh_moves,
        resample_threshold=config.engine.resample_threshold,
        evidence_window=config.engine.evidence_window,
        proposal_scale=config.engine.proposal_scale,
        seed=config.seed,
        threads=config.threads,
    )


def _rejuvenation_rows(estimator: EpidemicEnsemble) -> list[dict]:
    rows = []
    for ens in estimator.ensembles_:
        for event in ens.rejuvenations:
            rows.append({
                "model": ens.label,
                "time": event.time_index,
                "pre_ess": event.pre_ess,
                "post_ess": event.post_ess,
                "proposals": event.proposals,
                "accepted": event.accepted,
                "off_support": event.off_support,
                "acceptance_rate": event.acceptance_rate,
            })
    rows.sort(key=lambda row: (row["time"], row["model"]))
    return rows


def _run_document(config: RunConfig, estimator: EpidemicEnsemble) -> dict:
    observed = int(np.sum(~np.isnan(estimator.observations_)))
    return {
        "package": "epiblend",
        "version": __version__,
        "config": _config_document(config),
        "data": {"n_steps": estimator.n_steps_, "observed_steps": observed},
        "results": {
            "model_probs": {
                label: float(p)
                for label, p in zip(estimator.labels_, estimator.model_probs_)
            },
            "log_evidence": {
                ens.label: float(ens.log_evidence()) for ens in estimator.ensembles_
            },
            "rejuvenations": {
                ens.label: len(ens.rejuvenations) for ens in estimator.ensembles_
            },
        },
    }


def _cmd_fit(args) -> int:
    config = _resolve_config(args)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)

    if config.data.scenario is not None:
        data = _simulate_data(config.data.scenario, config.seed)
        _write_scenario_files(out, data)
        series = data.observations.astype(float)
    else:
        series = ingest_csv(config.data.path)

    if args.limit is not None:
        if not 1 <= args.limit <= series.size:
            raise ConfigurationError(
                f"--limit must be between 1 and the series length {series.size}, got {args.limit}"
            )
        series = series[: args.limit]

    estimator = _estimator_from_config(config).fit(series)

    write_rows(out / "estimates.csv", estimator.history_)
    write_rows(out / "params.csv", estimator.parameters_)
    write_rows(
        out / "rejuvenations.csv",
        _rejuvenation_rows(estimator),
        columns=("model", "time", "pre_ess", "post_ess", "proposals",
                 "accepted", "off_support", "acceptance_rate"),
    )
    write_run_json(out / "run.json", _run_document(config, estimator))
    save_state(out / "state.pkl", estimator)

    shares = ", ".join(
        f"{label}={float(p):.3f}"
        for label, p in zip(estimator.labels_, estimator.model_probs_)
    )
    print(f"fitted {estimator.n_steps_} steps; final model probabilities: {shares}")
    print(f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------


def _sample_rows(result) -> list[dict]:
    rows = []
    blocks = [("ensemble", result.incidence_samples, result.rt_samples)]
    blocks += [
        (label, result.model_incidence_samples[label], result.model_rt_samples[label])
        for label in result.labels
    ]
    for model, inc, rt in blocks:
        for target, samples in (("incidence", inc), ("rt", rt)):
            for lead in range(samples.shape[0]):
                for index in range(samples.shape[1]):
                    rows.append({
                        "model": model, "target": target, "lead": lead + 1,
                        "sample": index, "value": samples[lead, index],
                    })
    return rows


def _cmd_forecast(args) -> int:
    config = _resolve_config(args)
    out = Path(config.output)
    estimator = load_state(out / "state.pkl")

    horizon = args.horizon if args.horizon is not None else config.forecast.horizon
    theta_mode = args.theta_mode if args.theta_mode is not None else config.forecast.theta_mode
    result = estimator.predict(horizon=horizon, theta_mode=theta_mode, n_samples=args.samples)

    write_rows(out / "estimates.csv", [*estimator.history_, *result.rows])
    write_rows(
        out / "forecast_samples.csv",
        _sample_rows(result),
        columns=("model", "target", "lead", "sample", "value"),
    )
    document = read_run_json(out / "run.json")
    document["forecast"] = {
        "horizon": int(result.horizon),
        "theta_mode": result.theta_mode,
        "n_samples": int(args.samples),
    }
    write_run_json(out / "run.json", document)

    print(
        f"forecast {result.horizon} steps ({result.theta_mode} parameters); "
        f"rows appended to {out / 'estimates.csv'}"
    )
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _float_or_nan(cell: str | None) -> float:
    return float(cell) if cell not in (None, "") else math.nan


def _load_samples(path: Path) -> dict[tuple[str, str], dict[int, list[float]]]:
    if not path.exists():
        return {}
    samples: dict[tuple[str, str], dict[int, list[float]]] = {}
    for row in read_rows(path):
        key = (row["model"], row["target"])
        samples.setdefault(key, {}).setdefault(int(row["lead"]), []).append(float(row["value"]))
    return samples


def _score_rows(estimate_rows, truth, labels, samples) -> list[dict]:
    targets = [("incidence", "count")]
    if "rt" in truth:
        targets.append(("rt", "rt"))
    phases = [
        phase for phase in ("fit", "forecast")
        if any(row.get("phase") == phase for row in estimate_rows)
    ]
    horizon = truth["count"].size
    scores = []
    for phase in phases:
        rows = [
            row for row in estimate_rows
            if row.get("phase") == phase and 1 <= int(row["time"]) <= horizon
        ]
        if not rows:
            raise DataError(f"no {phase} rows overlap the truth series (length {horizon})")
        times = np.array([int(row["time"]) for row in rows])
        for model in [*labels, "ensemble"]:
            for target, truth_key in targets:
                truth_vec = truth[truth_key][times - 1]
                mean = np.array([_float_or_nan(row.get(f"{model}.{target}.mean")) for row in rows])
                lo = np.array([_float_or_nan(row.get(f"{model}.{target}.q2.5")) for row in rows])
                hi = np.array([_float_or_nan(row.get(f"{model}.{target}.q97.5")) for row in rows])
                if np.all(np.isnan(mean)):
                    raise DataError(
                        f"estimates lack {model}.{target} columns needed for scoring"
                    )
                crps = math.nan
                if phase == "forecast" and (model, target) in samples:
                    by_lead = samples[(model, target)]
                    sets = []
                    kept = []
                    for row, t in zip(rows, times):
                        lead = int(row["lead"])
                        if lead in by_lead:
                            sets.append(np.asarray(by_lead[lead]))
                            kept.append(t)
                    if sets:
                        crps = crps_particles(truth[truth_key][np.array(kept) - 1], sets)
                scored = int(np.sum(~np.isnan(truth_vec)))
                scores.append({
                    "phase": phase, "model": model, "target": target,
                    "rmse": rmse(truth_vec, mean),
                    "coverage95": coverage(truth_vec, lo, hi),
                    "crps": crps,
                    "n_scored": scored,
                })
    return scores


def _cmd_evaluate(args) -> int:
    run_dir = Path(args.run)
    estimate_rows = read_rows(run_dir / "estimates.csv")
    if not estimate_rows:
        raise DataError(f"{run_dir / 'estimates.csv'} has no rows")
    document = read_run_json(run_dir / "run.json")
    labels = [model["label"] for model in document["config"]["models"]]
    truth = read_dated_table(args.truth)
    samples = _load_samples(run_dir / "forecast_samples.csv")

    scores = _score_rows(estimate_rows, truth, labels, samples)
    out = Path(args.out) if args.out is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_scores(out, scores)

    for row in scores:
        crps = "" if math.isnan(row["crps"]) else f"  crps={row['crps']:.4g}"
        print(
            f"{row['phase']:<9} {row['model']:<12} {row['target']:<10} "
            f"rmse={row['rmse']:.4g}  coverage95={row['coverage95']:.3f}{crps}"
        )
    print(f"scores written to {out / 'scores.csv'}, scores_table.csv and scores.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
