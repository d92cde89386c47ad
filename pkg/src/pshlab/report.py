"""Experiment reports: JSON (schema v1), CSV tables and log-log SVG plots."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = "v1"
VERDICTS = ("pass", "fail", "inconclusive")
FORMATS = ("json", "csv", "svg")

_NUM = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pshlab experiment report",
    "type": "object",
    "required": ["schema", "experiment", "config", "quantities", "tables", "outcome", "verdict", "notes",
                 "wall_clock", "artifacts"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": f"pshlab-report/{SCHEMA_VERSION}"},
        "experiment": {"type": "string"},
        "config": {
            "type": "object",
            "required": ["experiment", "params", "output"],
            "properties": {"experiment": {"type": "string"}, "params": {"type": "object"},
                           "output": {"type": "string"}},
        },
        "quantities": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["value", "tolerance", "reference"],
                "additionalProperties": False,
                "properties": {"value": _NUM, "tolerance": _NUM, "reference": _NUM},
            },
        },
        "tables": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["columns", "rows"],
                "additionalProperties": False,
                "properties": {
                    "columns": {"type": "array", "items": {"type": "string"}},
                    "rows": {"type": "array", "items": {"type": "array"}},
                },
            },
        },
        "outcome": {"type": "string"},
        "verdict": {"enum": list(VERDICTS)},
        "notes": {"type": "array", "items": {"type": "string"}},
        "wall_clock": {"type": "number", "minimum": 0},
        "artifacts": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass(frozen=True)
class Quantity:
    """A reported number with its tolerance and, when known, the value it is compared against."""

    value: float | None
    tolerance: float | None
    reference: float | None = None

    def within(self) -> bool:
        if self.value is None or self.reference is None or self.tolerance is None:
            return False
        return abs(self.value - self.reference) <= self.tolerance


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self) -> None:
        if any(len(r) != len(self.columns) for r in self.rows):
            raise ValueError("row length differs from the column count")


@dataclass(frozen=True)
class LogLogPlot:
    """A log-log plot of one table: ``x`` and ``y`` columns, plus fitted slopes to draw."""

    table: str
    x: str
    y: str
    slope: float | None = None
    intercept: float | None = None
    title: str = ""
    semilog: bool = False


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    quantities: dict[str, Quantity]
    tables: dict[str, Table]
    outcome: str
    verdict: str
    notes: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    artifacts: list[str] = field(default_factory=list)
    plots: list[LogLogPlot] = field(default_factory=list)
    images: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    def to_dict(self) -> dict:
        return {
            "schema": f"pshlab-report/{SCHEMA_VERSION}",
            "experiment": self.experiment,
            "config": self.config,
            "quantities": {k: {"value": _clean(q.value), "tolerance": _clean(q.tolerance),
                               "reference": _clean(q.reference)} for k, q in sorted(self.quantities.items())},
            "tables": {k: {"columns": list(t.columns), "rows": [[_clean(v) for v in r] for r in t.rows]}
                       for k, t in sorted(self.tables.items())},
            "outcome": self.outcome,
            "verdict": self.verdict,
            "notes": list(self.notes),
            "wall_clock": round(float(self.wall_clock), 3),
            "artifacts": list(self.artifacts),
        }


def _clean(v):
    """JSON-safe scalar: non-finite floats become ``None``."""
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, int):
        return v
    v = float(v)
    return v if math.isfinite(v) else None


def dumps(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, table: Table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, float) else v for v in row])


def _write_svg(path: Path, report: ExperimentReport, plot: LogLogPlot) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = report.tables[plot.table]
    ix, iy = t.columns.index(plot.x), t.columns.index(plot.y)
    pts = [(r[ix], r[iy]) for r in t.rows
           if r[ix] is not None and r[iy] is not None and r[iy] > 0 and (plot.semilog or r[ix] > 0)]
    matplotlib.rcParams["svg.hashsalt"] = "pshlab"
    fig, ax = plt.subplots(figsize=(5, 4))
    if pts:
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "o", label="measured")
        if plot.slope is not None and plot.intercept is not None:
            lo, hi = min(xs), max(xs)
            grid = [lo + (hi - lo) * i / 50 for i in range(51)] if plot.semilog else \
                [lo * (hi / lo) ** (i / 50) for i in range(51)]
            fit = [math.exp(plot.intercept + plot.slope * (g if plot.semilog else math.log(g))) for g in grid]
            ax.plot(grid, fit, "-", label=f"slope {plot.slope:.3f}")
        ax.legend()
    if not plot.semilog:
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(plot.x)
    ax.set_ylabel(plot.y)
    ax.set_title(plot.title or f"{report.experiment}: {plot.y} vs {plot.x}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _write_image(path: Path, name: str, image) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arr, extent = image
    matplotlib.rcParams["svg.hashsalt"] = "pshlab"
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(arr.T, origin="lower", extent=extent, cmap="Greys", interpolation="nearest")
    ax.set_title(name)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: ExperimentReport, formats: Iterable[str], outdir: str | Path) -> list[str]:
    """Write the requested formats into ``outdir``; returns the file names written.

    ``csv`` writes one file per table, ``svg`` one file per plot and image,
    ``json`` one report file listing every artifact of the call.
    """
    formats = set(formats)
    bad = formats - set(FORMATS)
    if bad:
        raise ValueError(f"unknown formats {sorted(bad)}")
    if not formats:
        return []
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.experiment
    files: list[str] = []
    if "csv" in formats:
        for name, table in sorted(report.tables.items()):
            fn = f"{stem}_{name}.csv"
            _write_csv(out / fn, table)
            files.append(fn)
    if "svg" in formats:
        for plot in report.plots:
            fn = f"{stem}_{plot.table}_{plot.y}.svg"
            _write_svg(out / fn, report, plot)
            files.append(fn)
        for name, image in sorted(report.images.items()):
            fn = f"{stem}_{name}.svg"
            _write_image(out / fn, name, image)
            files.append(fn)
    if "json" in formats:
        fn = f"{stem}.json"
        files.append(fn)
        report.artifacts = list(files)
        (out / fn).write_text(dumps(report))
    else:
        report.artifacts = list(files)
    return files


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def table_from_records(columns: Sequence[str], records: Iterable[Sequence]) -> Table:
    return Table(tuple(columns), tuple(tuple(r) for r in records))
