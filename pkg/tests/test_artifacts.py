"""Round-trip and validation tests for CSV/JSON artifact persistence."""
import json
import math

import numpy as np
import pytest

from epiblend.artifacts import (
    SERIES_ORIGIN,
    columns_for,
    ingest_csv,
    load_state,
    read_dated_table,
    read_rows,
    save_state,
    write_rows,
    write_run_json,
    write_scores,
    write_series,
)
from epiblend.errors import ConfigurationError, DataError


def test_columns_follow_first_appearance_order():
    rows = [{"b": 1, "a": 2}, {"a": 3, "c": 4}]
    assert columns_for(rows) == ["b", "a", "c"]


def test_write_rows_round_trip_with_missing_and_nan(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(path, [
        {"time": 1, "x": 0.1, "note": "hi"},
        {"time": 2, "x": math.nan},
    ])
    back = read_rows(path)
    assert back == [
        {"time": "1", "x": "0.1", "note": "hi"},
        {"time": "2", "x": "", "note": ""},
    ]


def test_floats_written_in_shortest_round_trip_form(tmp_path):
    path = tmp_path / "floats.csv"
    write_rows(path, [{"x": np.float64(0.1), "y": 1.0 / 3.0}])
    body = path.read_text().splitlines()[1]
    assert body == "0.1,0.3333333333333333"
    assert float(body.split(",")[1]) == 1.0 / 3.0


def test_write_rows_uses_unix_line_endings(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(path, [{"a": 1}])
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.endswith(b"\n")


def test_read_rows_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError, match="not found"):
        read_rows(tmp_path / "nope.csv")


def test_series_round_trip_preserves_counts_and_gaps(tmp_path):
    path = tmp_path / "obs.csv"
    counts = np.array([3.0, math.nan, 0.0, 12.0])
    write_series(path, counts)
    text = path.read_text()
    assert text.startswith("date,count\n2020-01-01,3\n2020-01-02,\n")
    back = ingest_csv(path)
    np.testing.assert_array_equal(np.isnan(back), np.isnan(counts))
    np.testing.assert_array_equal(back[~np.isnan(back)], counts[~np.isnan(counts)])


def test_series_extra_columns_round_trip(tmp_path):
    path = tmp_path / "truth.csv"
    write_series(
        path,
        np.array([1.0, 2.0]),
        extra={"rt": np.array([1.5, math.nan]), "beta": np.array([0.32, 0.3])},
    )
    table = read_dated_table(path)
    assert set(table) == {"count", "rt", "beta"}
    np.testing.assert_allclose(table["rt"][0], 1.5)
    assert math.isnan(table["rt"][1])
    np.testing.assert_allclose(table["beta"], [0.32, 0.3])


def test_dated_table_requires_date_count_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,cases\n1,2\n")
    with pytest.raises(DataError, match="header must start with 'date,count'"):
        read_dated_table(path)


def test_dated_table_rejects_unsorted_dates_naming_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,count\n2020-01-02,1\n2020-01-01,2\n")
    with pytest.raises(DataError, match="line 3.*strictly increasing"):
        read_dated_table(path)


def test_dated_table_rejects_malformed_date_naming_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,count\n01/02/2020,1\n")
    with pytest.raises(DataError, match="line 2.*invalid date"):
        read_dated_table(path)


def test_dated_table_rejects_uneven_cadence(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,count\n2020-01-01,1\n2020-01-02,2\n2020-01-05,3\n")
    with pytest.raises(DataError, match="not uniformly spaced"):
        read_dated_table(path)


def test_dated_table_accepts_weekly_cadence(tmp_path):
    path = tmp_path / "weekly.csv"
    path.write_text("date,count\n2020-01-01,1\n2020-01-08,2\n2020-01-15,3\n")
    np.testing.assert_array_equal(read_dated_table(path)["count"], [1, 2, 3])


def test_dated_table_rejects_non_numeric_cell_naming_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,count\n2020-01-01,many\n")
    with pytest.raises(DataError, match="line 2.*'many' is not a number"):
        read_dated_table(path)


def test_dated_table_rejects_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,count\n2020-01-01,1,9\n")
    with pytest.raises(DataError, match="line 2.*expected 2 cells, got 3"):
        read_dated_table(path)


@pytest.mark.parametrize("body, message", [
    ("", "file is empty"),
    ("date,count\n", "no data rows"),
])
def test_dated_table_rejects_empty_inputs(tmp_path, body, message):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataError, match=message):
        read_dated_table(path)


@pytest.mark.parametrize("cell", ["-1", "2.5"])
def test_ingest_rejects_invalid_counts_naming_line(tmp_path, cell):
    path = tmp_path / "bad.csv"
    path.write_text(f"date,count\n2020-01-01,3\n2020-01-02,{cell}\n")
    with pytest.raises(DataError, match="line 3.*non-negative integer"):
        ingest_csv(path)


def test_run_json_round_trip_sorted_and_newline_terminated(tmp_path):
    path = tmp_path / "run.json"
    write_run_json(path, {"zeta": 1, "alpha": {"b": 2, "a": [1, 2]}})
    text = path.read_text()
    assert text.index('"alpha"') < text.index('"zeta"')
    assert text.endswith("\n")
    assert json.loads(text) == {"zeta": 1, "alpha": {"b": 2, "a": [1, 2]}}


def test_write_scores_emits_csv_and_json_with_nan_as_null(tmp_path):
    rows = [{"phase": "fit", "model": "m", "target": "incidence",
             "rmse": 1.25, "coverage95": 0.9, "crps": math.nan, "n_scored": 10}]
    write_scores(tmp_path, rows)
    csv_rows = read_rows(tmp_path / "scores.csv")
    assert csv_rows[0]["rmse"] == "1.25"
    assert csv_rows[0]["crps"] == ""
    payload = json.loads((tmp_path / "scores.json").read_text())
    assert payload[0]["crps"] is None
    assert payload[0]["rmse"] == 1.25


def test_write_scores_pivots_metric_rows_by_model(tmp_path):
    rows = [
        {"phase": "fit", "model": model, "target": "incidence",
         "rmse": value, "coverage95": 0.9, "crps": math.nan, "n_scored": 5}
        for model, value in (("m1", 1.5), ("m2", 2.5), ("ensemble", 2.0))
    ]
    write_scores(tmp_path, rows)
    table = read_rows(tmp_path / "scores_table.csv")
    assert [row["metric"] for row in table] == ["rmse", "coverage95", "crps"]
    assert list(table[0]) == ["phase", "target", "metric", "m1", "m2", "ensemble"]
    assert table[0]["m1"] == "1.5" and table[0]["ensemble"] == "2.0"
    assert table[2]["m2"] == ""  # NaN CRPS stays blank


def test_state_round_trip_and_missing_state_message(tmp_path):
    path = tmp_path / "state.pkl"
    save_state(path, {"anything": [1, 2, 3]})
    assert load_state(path) == {"anything": [1, 2, 3]}
    with pytest.raises(ConfigurationError, match="epiblend fit"):
        load_state(tmp_path / "absent.pkl")


def test_series_origin_is_fixed_for_reproducibility():
    assert SERIES_ORIGIN.isoformat() == "2020-01-01"
