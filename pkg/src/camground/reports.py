"""Report rendering: per-video metric tables in three formats.

* ``table-text``: aligned human-readable table plus per-class F1 blocks;
* ``delimited``: CSV, one row per video, floats at full repr precision so
  values round-trip exactly (empty cell = metric not applicable);
* ``structured``: JSON that parses back into equal VideoReport values.

Column order is fixed: identity, ratio means, percentages, frame counts,
then per-class F1 columns sorted by class.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from pathlib import Path

from .errors import EmptyInput, IoFailure, SchemaViolation
from .metrics import F1Sweep, FrameCounts, VideoReport

REPORT_FORMATS = ("table-text", "delimited", "structured")

_BASE_COLUMNS = (
    "video_id",
    "task",
    "tau",
    "mean_tau_ac",
    "mean_tau_aa",
    "vt_percent",
    "ars_mean_valid",
    "ars_mean_all",
    "zv_percent",
    "total",
    "evaluated",
    "degenerate",
    "ars_valid",
    "ars_zero",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _base_values(report: VideoReport) -> list:
    return [
        report.video_id,
        report.task,
        report.tau,
        report.mean_tau_ac,
        report.mean_tau_aa,
        report.vt_percent,
        report.ars_mean_valid,
        report.ars_mean_all,
        report.zv_percent,
        report.counts.total,
        report.counts.evaluated,
        report.counts.degenerate,
        report.counts.ars_valid,
        report.counts.ars_zero,
    ]


def format_structured(reports: Sequence[VideoReport]) -> str:
    return json.dumps(
        {"reports": [report.as_dict() for report in reports]}, sort_keys=True, indent=2
    ) + "\n"


def parse_structured(text: str) -> list[VideoReport]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"structured report is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("reports"), list):
        raise SchemaViolation("structured report must be an object with a reports array")
    return [VideoReport.from_dict(entry) for entry in doc["reports"]]


def _f1_classes(reports: Sequence[VideoReport]) -> list[str]:
    classes: set[str] = set()
    for report in reports:
        classes.update(str(label) for label in report.f1_per_class)
    return sorted(classes)


def format_delimited(reports: Sequence[VideoReport]) -> str:
    classes = _f1_classes(reports)
    header = list(_BASE_COLUMNS)
    for cls in classes:
        header.extend((f"f1:{cls}", f"f1_threshold:{cls}", f"f1_degenerate:{cls}"))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for report in reports:
        row = [_cell(value) for value in _base_values(report)]
        sweeps = {str(label): sweep for label, sweep in report.f1_per_class.items()}
        for cls in classes:
            sweep = sweeps.get(cls)
            if sweep is None:
                row.extend(("", "", ""))
            else:
                row.extend((_cell(sweep.f1), _cell(sweep.threshold), _cell(sweep.degenerate)))
        writer.writerow(row)
    return buffer.getvalue()


def _opt_float(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def parse_delimited(text: str) -> list[VideoReport]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaViolation("delimited report is empty")
    header = rows[0]
    if header[: len(_BASE_COLUMNS)] != list(_BASE_COLUMNS):
        raise SchemaViolation("delimited report header does not match the expected columns")
    reports = []
    for row in rows[1:]:
        if len(row) != len(header):
            raise SchemaViolation("delimited report row width does not match the header")
        values = dict(zip(header, row))
        f1_per_class: dict[str, F1Sweep] = {}
        for column in header[len(_BASE_COLUMNS) :]:
            kind, _, cls = column.partition(":")
            if kind != "f1" or values[column] == "":
                continue
            f1_per_class[cls] = F1Sweep(
                threshold=float(values[f"f1_threshold:{cls}"]),
                f1=float(values[column]),
                degenerate=values[f"f1_degenerate:{cls}"] == "true",
            )
        reports.append(
            VideoReport(
                video_id=values["video_id"],
                task=values["task"],
                tau=float(values["tau"]),
                counts=FrameCounts(
                    total=int(values["total"]),
                    evaluated=int(values["evaluated"]),
                    degenerate=int(values["degenerate"]),
                    ars_valid=int(values["ars_valid"]),
                    ars_zero=int(values["ars_zero"]),
                ),
                mean_tau_ac=_opt_float(values["mean_tau_ac"]),
                mean_tau_aa=_opt_float(values["mean_tau_aa"]),
                vt_percent=_opt_float(values["vt_percent"]),
                ars_mean_valid=_opt_float(values["ars_mean_valid"]),
                ars_mean_all=_opt_float(values["ars_mean_all"]),
                zv_percent=_opt_float(values["zv_percent"]),
                f1_per_class=f1_per_class,
            )
        )
    return reports


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def format_table(reports: Sequence[VideoReport]) -> str:
    headers = (
        "video",
        "task",
        "tau",
        "tau-AC",
        "tau-AA",
        "V/T%",
        "ARS(valid)",
        "ARS(all)",
        "Z/V%",
        "frames",
        "eval",
        "degen",
        "ars-valid",
    )
    table_rows = []
    for report in reports:
        table_rows.append(
            (
                report.video_id,
                report.task,
                _fmt(report.tau, 2),
                _fmt(report.mean_tau_ac),
                _fmt(report.mean_tau_aa),
                _fmt(report.vt_percent, 2),
                _fmt(report.ars_mean_valid),
                _fmt(report.ars_mean_all),
                _fmt(report.zv_percent, 2),
                str(report.counts.total),
                str(report.counts.evaluated),
                str(report.counts.degenerate),
                str(report.counts.ars_valid),
            )
        )
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in table_rows)) if table_rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(headers[i].ljust(widths[i]) for i in range(len(headers))).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in table_rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(headers))).rstrip())

    for report in reports:
        if not report.f1_per_class:
            continue
        lines.append("")
        lines.append(f"F1 by class [{report.video_id}]:")
        for label in sorted(report.f1_per_class, key=str):
            sweep = report.f1_per_class[label]
            note = "  (no positives)" if sweep.degenerate else ""
            lines.append(
                f"  {label}: f1={_fmt(sweep.f1)} at threshold {_fmt(sweep.threshold)}{note}"
            )
    return "\n".join(lines) + "\n"


def emit_report(
    reports: Sequence[VideoReport], fmt: str, out_path: str | Path | None = None
) -> str:
    """Render reports in the chosen format; optionally write them to disk."""
    if not reports:
        raise EmptyInput("no reports to emit")
    if fmt == "table-text":
        text = format_table(reports)
    elif fmt == "delimited":
        text = format_delimited(reports)
    elif fmt == "structured":
        text = format_structured(reports)
    else:
        raise SchemaViolation(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
    if out_path is not None:
        try:
            Path(out_path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write report to {out_path}: {exc}") from exc
    return text
