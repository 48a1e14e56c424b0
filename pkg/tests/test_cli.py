"""End-to-end tests for the command-line interface.

Commands run in-process through ``main(argv)`` so exit codes and stdout
are asserted directly; runs use a deliberately tiny engine so the whole
module stays fast.
"""
import json

import numpy as np
import pytest

from epiblend.artifacts import read_rows, write_rows, write_run_json, write_series
from epiblend.cli import main
from epiblend.config import preset_document


@pytest.fixture
def small_config(tmp_path):
    """A scenario-A configuration downsized for test speed."""
    doc = preset_document("scenario_a")
    doc["engine"].update(n_theta=8, n_x=8, mh_moves=1)
    doc["forecast"]["horizon"] = 3
    doc["output"] = str(tmp_path / "run")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def _fit(small_config, *extra) -> int:
    return main(["fit", "--config", str(small_config), "--limit", "6", *extra])


def test_unknown_flag_exits_1_with_usage(capsys):
    with pytest.raises(SystemExit) as err:
        main(["fit", "--bogus"])
    assert err.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand_exits_1():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 1


def test_simulate_writes_observations_and_truth(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "a", "--seed", "5",
                 "--horizon", "12", "--out", str(out)]) == 0
    assert "12-step scenario A" in capsys.readouterr().out
    obs = read_rows(out / "observations.csv")
    truth = read_rows(out / "truth.csv")
    assert len(obs) == len(truth) == 12
    assert list(obs[0]) == ["date", "count"]
    assert list(truth[0]) == ["date", "count", "rt", "beta"]
    assert obs[0]["date"] == "2020-01-01"


def test_simulate_is_reproducible_and_seed_sensitive(tmp_path):
    for seed, name in (("9", "x"), ("9", "y"), ("4", "z")):
        main(["simulate", "--scenario", "B", "--seed", seed,
              "--horizon", "30", "--out", str(tmp_path / name)])
    x = (tmp_path / "x" / "observations.csv").read_bytes()
    y = (tmp_path / "y" / "observations.csv").read_bytes()
    z = (tmp_path / "z" / "observations.csv").read_bytes()
    assert x == y
    assert x != z


@pytest.mark.parametrize("argv", [
    ["simulate", "--scenario", "A", "--population", "10.5"],
    ["simulate", "--scenario", "A", "--horizon", "0"],
    ["fit"],
])
def test_configuration_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "configuration error" in capsys.readouterr().err


def test_fit_writes_all_artifacts(small_config, tmp_path, capsys):
    assert _fit(small_config) == 0
    out = capsys.readouterr().out
    assert "fitted 6 steps" in out and "model probabilities" in out
    run = tmp_path / "run"
    for name in ("observations.csv", "truth.csv", "estimates.csv", "params.csv",
                 "rejuvenations.csv", "run.json", "state.pkl"):
        assert (run / name).exists(), name
    estimates = read_rows(run / "estimates.csv")
    assert len(estimates) == 6
    assert {row["phase"] for row in estimates} == {"fit"}
    document = json.loads((run / "run.json").read_text())
    assert document["data"]["n_steps"] == 6
    assert "threads" not in document["config"]["engine"]
    assert set(document["results"]["model_probs"]) == {"dthp", "seir"}
    probs = document["results"]["model_probs"].values()
    assert abs(sum(probs) - 1.0) < 1e-12


def test_fit_seed_override_changes_results(small_config, tmp_path):
    _fit(small_config, "--out", str(tmp_path / "a"), "--seed", "1")
    _fit(small_config, "--out", str(tmp_path / "b"), "--seed", "2")
    a = (tmp_path / "a" / "estimates.csv").read_bytes()
    b = (tmp_path / "b" / "estimates.csv").read_bytes()
    assert a != b


def test_fit_artifacts_do_not_depend_on_thread_count(small_config, tmp_path, monkeypatch):
    _fit(small_config, "--out", str(tmp_path / "a"), "--threads", "1")
    monkeypatch.setenv("EPIBLEND_THREADS", "3")
    _fit(small_config, "--out", str(tmp_path / "b"))
    for name in ("estimates.csv", "params.csv", "rejuvenations.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fit_rejects_bad_threads_env(small_config, monkeypatch, capsys):
    monkeypatch.setenv("EPIBLEND_THREADS", "lots")
    assert _fit(small_config) == 1
    assert "EPIBLEND_THREADS" in capsys.readouterr().err


def test_fit_limit_must_fit_series(small_config, capsys):
    assert main(["fit", "--config", str(small_config), "--limit", "1000"]) == 1
    assert "--limit" in capsys.readouterr().err


def test_fit_from_data_file(small_config, tmp_path, capsys):
    data = tmp_path / "cases.csv"
    write_series(data, np.array([0.0, 1.0, 3.0, 2.0, np.nan, 4.0]))
    assert main(["fit", "--config", str(small_config), "--data", str(data)]) == 0
    estimates = read_rows(tmp_path / "run" / "estimates.csv")
    assert len(estimates) == 6
    assert estimates[4]["observed"] == ""
    assert estimates[3]["observed"] == "2"


def test_fit_missing_data_file_exits_2(small_config, capsys):
    assert main(["fit", "--config", str(small_config), "--data", "no-such.csv"]) == 2
    assert "data error" in capsys.readouterr().err


def test_forecast_requires_fitted_state(small_config, capsys):
    assert main(["forecast", "--config", str(small_config)]) == 1
    assert "epiblend fit" in capsys.readouterr().err


def test_forecast_appends_rows_and_samples(small_config, tmp_path):
    _fit(small_config)
    assert main(["forecast", "--config", str(small_config), "--samples", "25"]) == 0
    run = tmp_path / "run"
    rows = read_rows(run / "estimates.csv")
    fit_rows = [row for row in rows if row["phase"] == "fit"]
    fc_rows = [row for row in rows if row["phase"] == "forecast"]
    assert len(fit_rows) == 6 and len(fc_rows) == 3
    assert [int(row["time"]) for row in fc_rows] == [7, 8, 9]
    assert [int(row["lead"]) for row in fc_rows] == [1, 2, 3]
    samples = read_rows(run / "forecast_samples.csv")
    assert {row["model"] for row in samples} == {"ensemble", "dthp", "seir"}
    assert {row["target"] for row in samples} == {"incidence", "rt"}
    assert len(samples) == 3 * 2 * 3 * 25
    document = json.loads((run / "run.json").read_text())
    assert document["forecast"] == {"horizon": 3, "theta_mode": "ensemble", "n_samples": 25}


def test_forecast_horizon_and_mode_flags(small_config, tmp_path):
    _fit(small_config)
    assert main(["forecast", "--config", str(small_config),
                 "--horizon", "2", "--theta-mode", "point", "--samples", "10"]) == 0
    document = json.loads((tmp_path / "run" / "run.json").read_text())
    assert document["forecast"]["theta_mode"] == "point"
    assert document["forecast"]["horizon"] == 2


def test_evaluate_scores_fit_and_forecast(small_config, tmp_path, capsys):
    _fit(small_config)
    main(["forecast", "--config", str(small_config), "--samples", "25"])
    run = tmp_path / "run"
    assert main(["evaluate", "--run", str(run), "--truth", str(run / "truth.csv")]) == 0
    out = capsys.readouterr().out
    assert "scores written" in out
    scores = read_rows(run / "scores.csv")
    assert {row["phase"] for row in scores} == {"fit", "forecast"}
    assert {row["model"] for row in scores} == {"dthp", "seir", "ensemble"}
    assert {row["target"] for row in scores} == {"incidence", "rt"}
    assert len(scores) == 2 * 3 * 2
    for row in scores:
        assert 0.0 <= float(row["coverage95"]) <= 1.0
        assert float(row["rmse"]) >= 0.0
        if row["phase"] == "forecast":
            assert float(row["crps"]) >= 0.0
        else:
            assert row["crps"] == ""
    payload = json.loads((run / "scores.json").read_text())
    assert len(payload) == len(scores)


def test_evaluate_perfect_estimates_score_zero_rmse_full_coverage(tmp_path, capsys):
    run = tmp_path / "run"
    run.mkdir()
    truth_counts = np.array([2.0, 5.0, 3.0, 8.0])
    write_series(tmp_path / "truth.csv", truth_counts)
    rows = []
    for t, value in enumerate(truth_counts, start=1):
        rows.append({
            "time": t, "phase": "fit", "observed": value,
            "m.incidence.mean": value, "m.incidence.q2.5": value - 1.0,
            "m.incidence.q97.5": value + 1.0,
            "ensemble.incidence.mean": value, "ensemble.incidence.q2.5": value - 1.0,
            "ensemble.incidence.q97.5": value + 1.0,
        })
    write_rows(run / "estimates.csv", rows)
    write_run_json(run / "run.json", {"config": {"models": [{"label": "m"}]}})
    assert main(["evaluate", "--run", str(run), "--truth", str(tmp_path / "truth.csv")]) == 0
    scores = {(row["model"], row["target"]): row for row in read_rows(run / "scores.csv")}
    for model in ("m", "ensemble"):
        row = scores[(model, "incidence")]
        assert float(row["rmse"]) == 0.0
        assert float(row["coverage95"]) == 1.0
        assert int(row["n_scored"]) == 4


def test_evaluate_missing_truth_exits_2(small_config, tmp_path, capsys):
    _fit(small_config)
    assert main(["evaluate", "--run", str(tmp_path / "run"),
                 "--truth", str(tmp_path / "absent.csv")]) == 2
    assert "data error" in capsys.readouterr().err


def test_evaluate_separate_out_directory(small_config, tmp_path):
    _fit(small_config)
    run = tmp_path / "run"
    scores_dir = tmp_path / "scores"
    assert main(["evaluate", "--run", str(run), "--truth", str(run / "truth.csv"),
                 "--out", str(scores_dir)]) == 0
    assert (scores_dir / "scores.csv").exists()
    assert (scores_dir / "scores_table.csv").exists()
    assert (scores_dir / "scores.json").exists()
    assert not (run / "scores.csv").exists()
