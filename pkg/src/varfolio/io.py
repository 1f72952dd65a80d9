"""Data ingestion and result serialization.

Reads the Kenneth French daily text layout (header block, then rows of
``YYYYMMDD v1 ... vN`` in percent), round-trips instances through a canonical
JSON document, and renders benchmark records into the two table shapes used
for reporting. Percent units are preserved end to end.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidInputError, LinearRow, ProblemSpec, ScenarioSet

__all__ = [
    "ComparisonRecord",
    "FFDailyData",
    "GapSummaryRecord",
    "InstanceFile",
    "ParseError",
    "emit_results",
    "mu0_grid",
    "parse_ff_daily",
]

MISSING_SENTINEL = -99.0  # values at or below this are missing-data codes

_DATE_TOKEN = re.compile(r"^\d{8}$")


class ParseError(InvalidInputError):
    """Raised on malformed data files, with the offending line number."""


@dataclass(frozen=True)
class FFDailyData:
    """Parsed daily-returns block: scenarios plus per-row provenance."""

    scenarios: ScenarioSet
    dates: tuple[str, ...]
    dropped_dates: tuple[str, ...]
    skipped_lines: int


def _is_data_row(tokens: list[str]) -> bool:
    if not tokens or not _DATE_TOKEN.match(tokens[0]):
        return False
    return len(tokens) > 1


def _starts_block(tokens: list[str]) -> bool:
    """Stricter test for the first data row: every field must parse, so a
    header line that merely begins with an 8-digit number stays a header."""
    if not _is_data_row(tokens):
        return False
    try:
        for tok in tokens[1:]:
            float(tok)
    except ValueError:
        return False
    return True


def parse_ff_daily(
    path,
    assets=None,
    rows: tuple[int, int] | None = None,
) -> FFDailyData:
    """Parse the first contiguous block of daily return rows from ``path``.

    Non-data lines before the block (titles, blank lines, column headers) are
    skipped by pattern: a data row starts with an 8-digit date followed by
    numeric fields. ``assets`` selects columns by index or label; ``rows``
    selects a [start, stop) range of data rows before missing-value filtering.
    Rows with a missing value (sentinel <= -99) in any selected column are
    dropped and reported.
    """
    path = Path(path)
    lines = path.read_text().splitlines()

    header_labels: list[str] | None = None
    data: list[tuple[int, str, list[str]]] = []  # (line no, date, value tokens)
    n_cols: int | None = None
    skipped = 0
    in_block = False
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not in_block:
            if _starts_block(tokens):
                in_block = True
                n_cols = len(tokens) - 1
            else:
                skipped += 1
                if tokens:
                    header_labels = tokens
                continue
        if not _is_data_row(tokens):
            break  # end of the first block
        if len(tokens) - 1 != n_cols:
            raise ParseError(
                f"line {lineno}: expected {n_cols} values, found {len(tokens) - 1}"
            )
        for tok in tokens[1:]:
            try:
                float(tok)
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric value {tok!r}") from None
        data.append((lineno, tokens[0], tokens[1:]))

    if not data:
        raise ParseError("no data rows found")

    if header_labels is not None and len(header_labels) == n_cols:
        labels = [str(t) for t in header_labels]
    else:
        labels = [f"A{i:03d}" for i in range(n_cols)]

    if assets is None:
        columns = list(range(n_cols))
    else:
        columns = []
        for a in assets:
            if isinstance(a, str):
                if a not in labels:
                    raise InvalidInputError(f"unknown asset label {a!r}")
                columns.append(labels.index(a))
            else:
                if not 0 <= int(a) < n_cols:
                    raise InvalidInputError(f"asset column {a} out of range")
                columns.append(int(a))
    if not columns:
        raise InvalidInputError("empty asset selection")

    if rows is not None:
        start, stop = rows
        data = data[start:stop]
    if not data:
        raise InvalidInputError("row range selects no data rows")

    kept_rows: list[list[float]] = []
    kept_dates: list[str] = []
    dropped: list[str] = []
    for _, date, tokens in data:
        values = [float(tokens[c]) for c in columns]
        if any(v <= MISSING_SENTINEL for v in values):
            dropped.append(date)
            continue
        kept_rows.append(values)
        kept_dates.append(date)
    if not kept_rows:
        raise InvalidInputError("all selected rows were dropped as missing")

    scenarios = ScenarioSet.from_returns(
        np.array(kept_rows), asset_labels=tuple(labels[c] for c in columns)
    )
    return FFDailyData(
        scenarios=scenarios,
        dates=tuple(kept_dates),
        dropped_dates=tuple(dropped),
        skipped_lines=skipped,
    )


def mu0_grid(scenarios: ScenarioSet, k: int) -> list[float]:
    """``k`` equally spaced interior return floors between the smallest and
    largest asset mean."""
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    lo = float(scenarios.mu.min())
    hi = float(scenarios.mu.max())
    return [lo + i / (k + 1) * (hi - lo) for i in range(1, k + 1)]


# ---------------------------------------------------------------------------
# Instance files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstanceFile:
    """JSON-serializable description of one problem instance.

    The scenario ``source`` is either inline data or a reference to a daily
    returns file plus a column/row selection. The canonical JSON form
    round-trips byte-identically.
    """

    alpha: float
    mu0: float
    source: dict
    bounds: tuple[tuple[float, float], ...] | None = None
    extra_rows: tuple[LinearRow, ...] = ()
    seed: int | None = None

    @classmethod
    def inline(cls, scenarios: ScenarioSet, spec: ProblemSpec, seed: int | None = None) -> "InstanceFile":
        source = {
            "kind": "inline",
            "labels": list(scenarios.asset_labels),
            "returns": [[float(v) for v in row] for row in scenarios.returns],
        }
        if not scenarios.mu_matches_sample_mean():
            source["mu"] = [float(v) for v in scenarios.mu]
        return cls(
            alpha=spec.alpha,
            mu0=spec.mu0,
            source=source,
            bounds=spec.bounds,
            extra_rows=spec.extra_rows,
            seed=seed,
        )

    def to_payload(self) -> dict:
        return {
            "alpha": self.alpha,
            "mu0": self.mu0,
            "bounds": None if self.bounds is None else [list(b) for b in self.bounds],
            "extra_rows": [
                {"coeffs": list(r.coeffs), "sense": r.sense, "rhs": r.rhs}
                for r in self.extra_rows
            ],
            "source": self.source,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_payload(cls, payload: dict) -> "InstanceFile":
        bounds = payload.get("bounds")
        return cls(
            alpha=float(payload["alpha"]),
            mu0=float(payload["mu0"]),
            source=payload["source"],
            bounds=None if bounds is None else tuple((float(l), float(h)) for l, h in bounds),
            extra_rows=tuple(
                LinearRow(tuple(r["coeffs"]), r["sense"], r["rhs"])
                for r in payload.get("extra_rows", [])
            ),
            seed=payload.get("seed"),
        )

    @classmethod
    def from_json(cls, text: str) -> "InstanceFile":
        return cls.from_payload(json.loads(text))

    @classmethod
    def read(cls, path) -> "InstanceFile":
        return cls.from_json(Path(path).read_text())

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    def load(self, base_dir=None) -> tuple[ScenarioSet, ProblemSpec]:
        kind = self.source.get("kind")
        if kind == "inline":
            scenarios = ScenarioSet.from_returns(
                np.array(self.source["returns"], dtype=float),
                asset_labels=tuple(self.source["labels"]),
                mu=np.array(self.source["mu"], dtype=float) if "mu" in self.source else None,
            )
        elif kind == "ff_daily":
            path = Path(self.source["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            rows = self.source.get("rows")
            scenarios = parse_ff_daily(
                path,
                assets=self.source.get("assets"),
                rows=None if rows is None else (int(rows[0]), int(rows[1])),
            ).scenarios
        else:
            raise InvalidInputError(f"unknown scenario source kind {kind!r}")
        spec = ProblemSpec(
            alpha=self.alpha,
            mu0=self.mu0,
            bounds=self.bounds,
            extra_rows=self.extra_rows,
        )
        return scenarios, spec


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

UNSOLVED = "*"
NO_RATIO = "★"  # filled star: ratio not computable


@dataclass(frozen=True)
class ComparisonRecord:
    """Per-instance comparison of the exact solve against the certified
    pipeline; ``None`` marks a side not solved within its limit."""

    n: int
    m: int
    mu0: float
    var_exact: float | None
    t_exact: float | None
    var_certified: float | None
    t_certified: float | None

    @property
    def speedup(self) -> float | None:
        if self.t_exact is None or self.t_certified is None or self.t_certified <= 0:
            return None
        return self.t_exact / self.t_certified


@dataclass(frozen=True)
class GapSummaryRecord:
    """Per-size aggregate of lower-bound quality and relative running time for
    the certified pipeline and the shortfall-LP baseline."""

    n: int
    m: int
    mu0_min: float
    mu0_max: float
    cert_gap_pct: float | None
    cert_time_ratio: float | None
    cvar_gap_pct: float | None
    cvar_time_ratio: float | None


def _cell(value, fmt: str | None = None) -> str:
    if value is None:
        return UNSOLVED
    if fmt is not None:
        return fmt % value
    return repr(value) if isinstance(value, float) else str(value)


COMPARISON_COLUMNS = ["n", "m", "mu0", "var_exact", "t_exact", "var_certified", "t_certified", "speedup"]
GAP_COLUMNS = [
    "n", "m", "mu0_min", "mu0_max",
    "cert_gap_pct", "cert_time_ratio", "cvar_gap_pct", "cvar_time_ratio",
]


def emit_results(records, format: str = "csv", path=None, shape: str | None = None) -> str:
    """Render benchmark records to CSV or JSON text (optionally writing it).

    Comparison records get the per-instance table shape with a speed-up column
    (one decimal) and an average speed-up footer over the computable ratios;
    gap records get the per-size aggregate shape. Unsolved cells render as
    ``*`` and incomputable ratios as a star.
    """
    records = list(records)
    if shape is None:
        shape = "gap" if records and isinstance(records[0], GapSummaryRecord) else "comparison"
    if format not in ("csv", "json"):
        raise InvalidInputError(f"unknown format {format!r}")

    if shape == "comparison":
        ratios = [r.speedup for r in records if r.speedup is not None]
        average = sum(ratios) / len(ratios) if ratios else None
        if format == "csv":
            buf = _stdio.StringIO()
            writer = csv.writer(buf)
            writer.writerow(COMPARISON_COLUMNS)
            for r in records:
                ratio = r.speedup
                writer.writerow(
                    [
                        r.n, r.m, _cell(r.mu0),
                        _cell(r.var_exact), _cell(r.t_exact),
                        _cell(r.var_certified), _cell(r.t_certified),
                        NO_RATIO if ratio is None else "%.1f" % ratio,
                    ]
                )
            if records:
                writer.writerow(["average_speed_up", "" if average is None else "%.2f" % average])
            text = buf.getvalue()
        else:
            text = json.dumps(
                {
                    "rows": [
                        {
                            "n": r.n, "m": r.m, "mu0": r.mu0,
                            "var_exact": r.var_exact, "t_exact": r.t_exact,
                            "var_certified": r.var_certified, "t_certified": r.t_certified,
                            "speedup": r.speedup,
                        }
                        for r in records
                    ],
                    "average_speed_up": average,
                },
                indent=2,
                sort_keys=True,
            ) + "\n"
    else:
        if format == "csv":
            buf = _stdio.StringIO()
            writer = csv.writer(buf)
            writer.writerow(GAP_COLUMNS)
            for r in records:
                writer.writerow(
                    [
                        r.n, r.m, _cell(r.mu0_min), _cell(r.mu0_max),
                        _cell(r.cert_gap_pct, "%.4f"), _cell(r.cert_time_ratio, "%.1f"),
                        _cell(r.cvar_gap_pct, "%.4f"), _cell(r.cvar_time_ratio, "%.1f"),
                    ]
                )
            text = buf.getvalue()
        else:
            text = json.dumps(
                {
                    "rows": [
                        {
                            "n": r.n, "m": r.m,
                            "mu0_min": r.mu0_min, "mu0_max": r.mu0_max,
                            "cert_gap_pct": r.cert_gap_pct,
                            "cert_time_ratio": r.cert_time_ratio,
                            "cvar_gap_pct": r.cvar_gap_pct,
                            "cvar_time_ratio": r.cvar_time_ratio,
                        }
                        for r in records
                    ]
                },
                indent=2,
                sort_keys=True,
            ) + "\n"

    if path is not None:
        Path(path).write_text(text)
    return text
