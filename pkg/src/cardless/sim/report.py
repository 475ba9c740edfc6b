"""Run-metrics rendering: aligned text or CSV with a stable column order."""

from __future__ import annotations

import csv
import io

from .runner import RunMetrics

CSV_COLUMNS = [
    "scenario",
    "seed",
    "terminal_count",
    "true_positives",
    "false_positives",
    "true_negatives",
    "false_negatives",
    "conservation_residual",
    "completed",
    "approval_failed",
    "fraudulent",
    "detection_failed",
    "generate_failed",
    "declined",
    "log_digest",
]


def render_report(metrics: list[RunMetrics], fmt: str = "text") -> str:
    if fmt == "csv":
        return _render_csv(metrics)
    if fmt == "text":
        return _render_text(metrics)
    raise ValueError(f"unknown report format {fmt!r}; use text or csv")


def _render_csv(metrics: list[RunMetrics]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for m in metrics:
        writer.writerow(m.as_row())
    return buffer.getvalue()


def _render_text(metrics: list[RunMetrics]) -> str:
    if not metrics:
        return "no runs\n"
    lines = []
    for m in metrics:
        row = m.as_row()
        lines.append(f"scenario {row['scenario']} (seed {row['seed']})")
        lines.append(f"  terminal outcomes: {row['terminal_count']}")
        for outcome, count in sorted(m.outcome_counts.items()):
            lines.append(f"    {outcome!r}: {count}")
        lines.append(
            "  confusion (fraud label vs fraud outcome): "
            f"tp={row['true_positives']} fp={row['false_positives']} "
            f"tn={row['true_negatives']} fn={row['false_negatives']}"
        )
        lines.append(f"  conservation residual: {row['conservation_residual']}")
        lines.append(f"  log digest: {row['log_digest']}")
    return "\n".join(lines) + "\n"
