"""Render aggregated results as goals x observability tables."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, NamedTuple, Union

import pandas as pd

from .errors import GrailError

log = logging.getLogger(__name__)

AGGREGATED_NAME = "aggregated.csv"
ROW_KEYS = ["goals", "fraction"]


class RenderedReport(NamedTuple):
    text: str
    markdown: str


def _cell(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def pivot(frame: pd.DataFrame, score: str = "f1") -> pd.DataFrame:
    """One row per goals x fraction, one column per learner/metric, holding (mean, std) pairs.

    Raises:
        GrailError: If a required column is missing.
    """
    required = ROW_KEYS + ["learner", "metric", f"{score}_mean", f"{score}_std"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise GrailError(f"aggregated results lack columns: {', '.join(missing)}")
    frame = frame.assign(column=frame["learner"] + "/" + frame["metric"])
    means = frame.pivot_table(index=ROW_KEYS, columns="column", values=f"{score}_mean", aggfunc="first")
    stds = frame.pivot_table(index=ROW_KEYS, columns="column", values=f"{score}_std", aggfunc="first")
    return pd.concat({"mean": means, "std": stds}, axis=1).sort_index()


def _rows(table: pd.DataFrame, bold: bool) -> List[List[str]]:
    columns = list(table["mean"].columns)
    rows = []
    for key, values in table.iterrows():
        goals, fraction = key
        means = [values[("mean", c)] for c in columns]
        best = max((m for m in means if pd.notna(m)), default=None)
        cells = [str(goals), f"{fraction:.0%}"]
        for c, mean in zip(columns, means):
            if pd.isna(mean):
                cells.append("-")
                continue
            cell = _cell(mean, values[("std", c)])
            cells.append(f"**{cell}**" if bold and mean == best else cell)
        rows.append(cells)
    return rows


def render_text(table: pd.DataFrame) -> str:
    header = ["goals", "obs"] + list(table["mean"].columns)
    rows = _rows(table, bold=False)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)


def render_markdown(table: pd.DataFrame) -> str:
    """Markdown table; every cell attaining the row's best mean is bolded."""
    header = ["Goals", "Obs."] + list(table["mean"].columns)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.extend("| " + " | ".join(row) + " |" for row in _rows(table, bold=True))
    return "\n".join(lines)


def report(results_dir: Union[str, Path], score: str = "f1") -> RenderedReport:
    """Render ``aggregated.csv`` in ``results_dir`` (macro-averaged scores, mean ± std over seeds).

    Raises:
        GrailError: If the file is missing or lacks a required column.
    """
    path = Path(results_dir) / AGGREGATED_NAME
    if not path.is_file():
        raise GrailError(f"no {AGGREGATED_NAME} in {results_dir}")
    table = pivot(pd.read_csv(path), score)
    log.debug("Rendering %d rows from %s", len(table), path)
    return RenderedReport(render_text(table), render_markdown(table))
