"""Serialize evaluation reports as JSON, CSV or a fixed-width table."""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

from .run import EvalReport

FORMATS = ("json", "csv", "table")
CSV_COLUMNS = ("task", "method", "k", "recall", "p_recall")


def report_to_dict(report: EvalReport, include_timing: bool = True) -> dict:
    bias = report.bias.to_dict() if report.bias is not None else None
    return {
        "task": report.task,
        "method": report.method.value,
        "per_k": {
            str(k): {"recall": report.per_k[k]["recall"], "p_recall": report.per_k[k]["p_recall"]}
            for k in sorted(report.per_k)
        },
        "bias": bias,
        "runtime_ms": int(report.runtime_ms) if include_timing else 0,
    }


def report_json(report: EvalReport, include_timing: bool = True) -> bytes:
    return (json.dumps(report_to_dict(report, include_timing), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _table(reports: Sequence[EvalReport]) -> str:
    tasks = list(dict.fromkeys(r.task for r in reports))
    methods = list(dict.fromkeys(r.method.value for r in reports))
    cell = {(r.task, r.method.value): r for r in reports}
    ks = sorted({k for r in reports for k in r.per_k})

    header = ["task", "metric", *methods]
    rows = []
    for task in tasks:
        for k in ks:
            for key, label in (("p_recall", f"p-Recall@{k}"), ("recall", f"Recall@{k}")):
                row = [task, label]
                for m in methods:
                    rep = cell.get((task, m))
                    if rep is None or k not in rep.per_k:
                        row.append("-")
                    else:
                        row.append(f"{100.0 * rep.per_k[k][key]:.1f}")
                rows.append(row)
    widths = [max(len(line[i]) for line in [header, *rows]) for i in range(len(header))]

    def fmt(line):
        left = [line[i].ljust(widths[i]) for i in range(2)]
        right = [line[i].rjust(widths[i]) for i in range(2, len(line))]
        return "  ".join(left + right).rstrip()

    sep = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep, *(fmt(r) for r in rows)]) + "\n"


def render_report(reports: Sequence[EvalReport], format: str = "json", include_timing: bool = True) -> bytes:
    """Deterministic rendering of ``reports``.

    ``json`` is an array of report objects, ``csv`` has one row per
    (report, k), ``table`` is the per-task x per-method grid with values in
    percent to one decimal.
    """
    if not reports:
        raise ValueError("no reports to render")
    if format == "json":
        payload = [report_to_dict(r, include_timing) for r in reports]
        return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            for k in sorted(r.per_k):
                writer.writerow([r.task, r.method.value, k, repr(r.per_k[k]["recall"]), repr(r.per_k[k]["p_recall"])])
        return buf.getvalue().encode("utf-8")
    if format == "table":
        return _table(reports).encode("utf-8")
    raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
