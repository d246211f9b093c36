#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Report files: per-scenario JSON and the batch CSV tables.
"""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from backend.base.definitions import METRIC_COLUMNS
from backend.features.epdms.metrics import SubMetrics

PREDICTION_COLUMNS = ("pred_epdms", "pred_nc", "pred_dac", "pred_comfort")

CANDIDATE_COLUMNS = (
    ("scenario_id", "candidate") + PREDICTION_COLUMNS
    + tuple(f"agent_{m}" for m in SubMetrics._fields)
    + ("epdms", "survived", "discard_reasons", "chosen")
)

SUMMARY_COLUMNS = ("scenario_id", "chosen", "fallback") + METRIC_COLUMNS


def format_value(value: Any) -> str:
    """Fixed textual form so equal runs give equal bytes."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write rows with a header; values are formatted by `format_value`.

    Args:
        path (Union[str, Path]): Target file.
        columns (Sequence[str]): Column order.
        rows (Iterable[Mapping[str, Any]]): Rows keyed by column.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: format_value(row[c]) for c in columns})
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
