"""CSV writers for metric and ablation reports."""

from __future__ import annotations

import math
from pathlib import Path

from ..metrics import COLUMNS, MetricReport


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.6f}"


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def emit_csv(report: MetricReport, path) -> Path:
    """Per-image rows with the fixed column contract; PSNR sentinel written as ``inf``."""
    rows = [[getattr(r, c) for c in COLUMNS] for r in report.rows]
    return _write(path, csv_text(COLUMNS, rows))


def emit_table(header, rows, path) -> Path:
    return _write(path, csv_text(header, rows))
