"""
Result Tables

Writes one row per (noise level, method) cell with the columns
noise, method, mATE, mASE, mAOE, precision, recall, tp, fp, fn:
CSV for plotting, a markdown table for reading and JSON with the full
reports (per-category breakdown and FP penalties included).
"""

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..core.metrics import EvalReport

logger = logging.getLogger(__name__)

COLUMNS = ("noise", "method", "mATE", "mASE", "mAOE", "precision", "recall", "tp", "fp", "fn")
NOT_APPLICABLE = "N/A"


@dataclass
class ResultRow:
    noise: str
    method: str
    report: EvalReport


def _fmt(value: Optional[float], digits: int) -> str:
    return NOT_APPLICABLE if value is None else f"{value:.{digits}f}"


def _cells(row: ResultRow, digits: int = 4) -> List[str]:
    r = row.report
    return [
        row.noise, row.method,
        _fmt(r.mATE, digits), _fmt(r.mASE, digits), _fmt(r.mAOE, digits),
        _fmt(r.precision, digits), _fmt(r.recall, digits),
        str(r.tp), str(r.fp), str(r.fn),
    ]


def to_csv(rows: Sequence[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(_cells(row))
    return buffer.getvalue()


def to_markdown(rows: Sequence[ResultRow], title: Optional[str] = None) -> str:
    """Markdown table, rows grouped by noise level in first-seen order."""
    lines = []
    if title:
        lines += [f"## {title}", ""]
    lines.append("| " + " | ".join(COLUMNS) + " |")
    lines.append("|" + "|".join("---" for _ in COLUMNS) + "|")
    order: List[str] = []
    for row in rows:
        if row.noise not in order:
            order.append(row.noise)
    for noise in order:
        for row in rows:
            if row.noise == noise:
                cells = _cells(row, digits=2)
                lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def to_json(rows: Sequence[ResultRow], name: str = "experiment") -> str:
    payload = {
        "name": name,
        "results": [
            {"noise": row.noise, "method": row.method, **row.report.to_dict()}
            for row in rows
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_reports(
    rows: Sequence[ResultRow],
    out_dir: Union[str, Path],
    formats: Sequence[str] = ("csv", "md"),
    name: str = "experiment",
) -> List[Path]:
    """
    Write result tables.

    Args:
        rows: Result rows in grid order
        out_dir: Output directory (created if missing)
        formats: Any of csv, md, json
        name: File stem

    Returns:
        Paths of the written files
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    renderers = {
        "csv": lambda: to_csv(rows),
        "md": lambda: to_markdown(rows, title=name),
        "json": lambda: to_json(rows, name),
    }
    written = []
    for fmt in formats:
        path = out_dir / f"{name}.{fmt}"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(renderers[fmt]())
        logger.info(f"Results written to {path}")
        written.append(path)
    return written
