"""Reading and writing run artifacts.

All outputs are plain CSV and JSON with deterministic formatting: floats
are written with ``repr`` (shortest round-trip form), JSON keys are
sorted, and no timestamps or environment details are recorded, so a run
with the same configuration and seed produces byte-identical files
regardless of thread count or machine.

CSV input follows a small contract: a ``date,count`` header, ISO dates
strictly increasing at a uniform cadence, counts either blank (missing)
or non-negative integers.  Parse errors name the offending line.
"""
from __future__ import annotations

import csv
import datetime
import json
import math
import pickle
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError

__all__ = [
    "columns_for",
    "ingest_csv",
    "load_state",
    "read_dated_table",
    "read_rows",
    "save_state",
    "write_rows",
    "write_run_json",
    "write_scores",
    "write_series",
]

# Synthetic series are dated from a fixed origin, one day per step, so
# simulated observation files satisfy the ingestion contract.
SERIES_ORIGIN = datetime.date(2020, 1, 1)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    number = float(value)
    if math.isnan(number):
        return ""
    return repr(number)


def columns_for(rows: Sequence[Mapping]) -> list[str]:
    """Column order: first appearance across all rows."""
    columns: list[str] = []
    seen = set()
    for row in rows:
        for key in row:
            if key not in seen:
                seen.add(key)
                columns.append(key)
    return columns


def write_rows(path: str | Path, rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> None:
    """Write dict rows as CSV; missing keys and NaN become empty cells."""
    columns = list(columns) if columns is not None else columns_for(rows)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(col)) for col in columns])


def read_rows(path: str | Path) -> list[dict[str, str]]:
    """Read a CSV written by :func:`write_rows` back as string-valued rows."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as handle:
        return [dict(row) for row in csv.DictReader(handle)]


def write_series(
    path: str | Path,
    counts: np.ndarray,
    extra: Mapping[str, np.ndarray] | None = None,
    origin: datetime.date = SERIES_ORIGIN,
) -> None:
    """Write a dated count series (plus optional truth columns) as CSV.

    Counts that are NaN are written as blank cells (missing); all other
    counts are written as integers.
    """
    extra = dict(extra or {})
    columns = ["date", "count", *extra]
    rows = []
    for t, value in enumerate(np.asarray(counts, dtype=float)):
        row = {"date": (origin + datetime.timedelta(days=t)).isoformat()}
        row["count"] = None if math.isnan(value) else int(value)
        for name, series in extra.items():
            row[name] = float(series[t])
        rows.append(row)
    write_rows(path, rows, columns)


def read_dated_table(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a dated CSV into float columns, validating the date column.

    Requires a header starting with ``date,count``; returns every
    numeric column keyed by name, with blank cells as NaN.  Dates must be
    ISO format, strictly increasing, and uniformly spaced.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [cell.strip().lower() for cell in header]
        if header[:2] != ["date", "count"]:
            raise DataError(
                f"{path}: header must start with 'date,count', got {','.join(header)!r}"
            )
        names = header[1:]
        dates: list[datetime.date] = []
        columns: dict[str, list[float]] = {name: [] for name in names}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                date = datetime.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(
                    f"{path}: line {line_no}: invalid date {row[0]!r} (expected YYYY-MM-DD)"
                ) from None
            if dates and date <= dates[-1]:
                raise DataError(
                    f"{path}: line {line_no}: date {date.isoformat()} is not after "
                    f"{dates[-1].isoformat()}; dates must be strictly increasing"
                )
            dates.append(date)
            for name, cell in zip(names, row[1:]):
                cell = cell.strip()
                if cell == "":
                    columns[name].append(math.nan)
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}: {name} value {cell!r} is not a number"
                    ) from None
                columns[name].append(value)

    if not dates:
        raise DataError(f"{path}: no data rows")
    if len(dates) > 2:
        gaps = {(b - a).days for a, b in zip(dates, dates[1:])}
        if len(gaps) != 1:
            raise DataError(
                f"{path}: dates are not uniformly spaced (gaps of {sorted(gaps)} days)"
            )
    return {name: np.asarray(values, dtype=float) for name, values in columns.items()}


def ingest_csv(path: str | Path) -> np.ndarray:
    """Read an observation series; blanks stay missing (NaN).

    Counts must be non-negative integers; anything else is rejected with
    the line number.
    """
    table = read_dated_table(path)
    counts = table["count"]
    for t, value in enumerate(counts):
        if math.isnan(value):
            continue
        if value < 0 or value != math.floor(value):
            raise DataError(
                f"{path}: line {t + 2}: count must be a non-negative integer, got {value:g}"
            )
    return counts


def write_run_json(path: str | Path, document: Mapping) -> None:
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_run_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"run metadata not found: {path}")
    return json.loads(path.read_text())


def _pivot_scores(score_rows: Sequence[Mapping]) -> list[dict]:
    """Reshape long score rows into metric rows with one column per model."""
    models: list[str] = []
    for row in score_rows:
        if row["model"] not in models:
            models.append(row["model"])
    blocks: list[tuple[str, str]] = []
    for row in score_rows:
        key = (row["phase"], row["target"])
        if key not in blocks:
            blocks.append(key)
    table = []
    for phase, target in blocks:
        for metric in ("rmse", "coverage95", "crps"):
            entry = {"phase": phase, "target": target, "metric": metric}
            for model in models:
                match = next(
                    (row for row in score_rows
                     if row["phase"] == phase and row["target"] == target
                     and row["model"] == model),
                    None,
                )
                entry[model] = math.nan if match is None else match[metric]
            table.append(entry)
    return table


def write_scores(directory: str | Path, score_rows: Sequence[Mapping]) -> None:
    """Persist scores three ways: long CSV, metric-by-model CSV, and JSON."""
    directory = Path(directory)
    write_rows(directory / "scores.csv", score_rows)
    write_rows(directory / "scores_table.csv", _pivot_scores(score_rows))
    payload = [
        {key: (None if isinstance(val, float) and math.isnan(val) else val) for key, val in row.items()}
        for row in score_rows
    ]
    (directory / "scores.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_state(path: str | Path, estimator) -> None:
    """Persist a fitted estimator for later forecasting."""
    with open(path, "wb") as handle:
        pickle.dump(estimator, handle, protocol=pickle.HIGHEST_PROTOCOL)


def load_state(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(
            f"no fitted state at {path}; run `epiblend fit` with this configuration first"
        )
    with open(path, "rb") as handle:
        return pickle.load(handle)
