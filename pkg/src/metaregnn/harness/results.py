"""Result rows and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

__all__ = [
    "CSV_COLUMNS",
    "METHODS",
    "ResultRow",
    "ExperimentResult",
    "emit_csv",
    "read_csv",
    "format_csv",
    "parse_csv",
]

CSV_COLUMNS = ("method", "scenario", "x_kind", "x_value", "seed", "sum_rate_bits", "relative_gain")

# display/sort order of the compared policies
METHODS = ("fomaml", "reptile", "regnn-adapt", "regnn")
META_METHODS = ("fomaml", "reptile")


@dataclass(frozen=True)
class ResultRow:
    method: str
    scenario: str
    x_kind: str  # "samples" or "radius"
    x_value: float
    seed: int
    sum_rate_bits: float
    relative_gain: Optional[float] = None

    def sort_key(self):
        rank = METHODS.index(self.method) if self.method in METHODS else len(METHODS)
        return (rank, self.method, self.x_value, self.seed)


@dataclass
class ExperimentResult:
    rows: List[ResultRow]

    def sorted(self) -> "ExperimentResult":
        return ExperimentResult(sorted(self.rows, key=ResultRow.sort_key))

    def select(self, **match) -> List[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def __len__(self):
        return len(self.rows)


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def format_csv(result: ExperimentResult) -> str:
    if not result.rows:
        raise ValueError("refusing to write an empty result")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in result.sorted().rows:
        x = int(r.x_value) if r.x_kind == "samples" else float(r.x_value)
        writer.writerow(
            [r.method, r.scenario, r.x_kind, _num(x), r.seed, _num(r.sum_rate_bits), _num(r.relative_gain)]
        )
    return buf.getvalue()


def emit_csv(result: ExperimentResult, path) -> None:
    """Write rows sorted by (method, x, seed) with round-trip float precision."""
    text = format_csv(result)
    Path(path).write_text(text)


def parse_csv(text: str) -> ExperimentResult:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header: {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        method, scenario, x_kind, x, seed, rate, gain = rec
        rows.append(
            ResultRow(
                method=method,
                scenario=scenario,
                x_kind=x_kind,
                x_value=int(x) if x_kind == "samples" else float(x),
                seed=int(seed),
                sum_rate_bits=float(rate),
                relative_gain=float(gain) if gain != "" else None,
            )
        )
    return ExperimentResult(rows)


def read_csv(path) -> ExperimentResult:
    return parse_csv(Path(path).read_text())


def relative_gain(meta_rate: float, baseline_rate: float) -> float:
    """``(C_meta - C_baseline) / C_meta``."""
    if meta_rate == 0:
        return math.nan
    return (meta_rate - baseline_rate) / meta_rate
