"""Evaluation report output: metrics JSON, per-task JSONL, CSV, figures.

Figures render through the Agg backend straight to files next to the
delimited output, one bar chart of the aggregate metrics and one histogram
panel of the per-task score distributions; multi-variant runs add a grouped
comparison chart.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluation import EvalMetrics

_CSV_FIELDS = [
    "task_id",
    "status",
    "task_kind",
    "variant",
    "em",
    "es",
    "recall",
    "f1",
    "recall_identifier",
    "f1_identifier",
    "confidence",
    "latency_ms",
]

_METRIC_KEYS = ("em", "es", "recall", "f1")


def write_report(
    metrics: EvalMetrics,
    out_dir: str | Path,
    variant: str = "grace",
    figures: bool = True,
) -> dict[str, Path]:
    """Write the standard report bundle; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    metrics_path = out / f"metrics_{variant}.json"
    metrics_path.write_text(
        json.dumps({"variant": variant, **metrics.as_dict()}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written["metrics"] = metrics_path

    report_path = out / f"report_{variant}.jsonl"
    with report_path.open("w", encoding="utf-8") as fh:
        for row in metrics.per_task:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    written["report"] = report_path

    csv_path = out / f"summary_{variant}.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in metrics.per_task:
            writer.writerow(row)
    written["summary"] = csv_path

    if figures:
        written["metrics_figure"] = _metrics_figure(metrics, out, variant)
        dist = _distribution_figure(metrics, out, variant)
        if dist is not None:
            written["distribution_figure"] = dist
    return written


def _metrics_figure(metrics: EvalMetrics, out: Path, variant: str) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    values = [getattr(metrics, key) for key in _METRIC_KEYS]
    bars = ax.bar([k.upper() for k in _METRIC_KEYS], values, color="#39648c")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{variant}: aggregate metrics over {metrics.n} tasks")
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.02, f"{value:.3f}",
                ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    path = out / f"metrics_{variant}.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _distribution_figure(metrics: EvalMetrics, out: Path, variant: str) -> Path | None:
    scored = [row for row in metrics.per_task if row.get("status") == "ok"]
    if not scored:
        return None
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    for ax, key in zip(axes, ("es", "f1")):
        ax.hist([row[key] for row in scored], bins=20, range=(0.0, 1.0), color="#7a9e7e")
        ax.set_xlabel(key.upper())
        ax.set_ylabel("tasks")
    fig.suptitle(f"{variant}: per-task score distributions")
    fig.tight_layout()
    path = out / f"distributions_{variant}.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_comparison(
    results: dict[str, EvalMetrics], out_dir: str | Path, figures: bool = True
) -> dict[str, Path]:
    """Cross-variant comparison: one CSV plus a grouped bar chart."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    csv_path = out / "comparison.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", *(k.upper() for k in _METRIC_KEYS), "n", "skipped"])
        for variant in sorted(results):
            metrics = results[variant]
            writer.writerow(
                [variant]
                + [f"{getattr(metrics, key):.6f}" for key in _METRIC_KEYS]
                + [metrics.n, metrics.skipped]
            )
    written["comparison"] = csv_path

    if figures and results:
        fig, ax = plt.subplots(figsize=(7.0, 3.6))
        variants = sorted(results)
        width = 0.8 / len(_METRIC_KEYS)
        for offset, key in enumerate(_METRIC_KEYS):
            xs = [i + offset * width for i in range(len(variants))]
            ax.bar(xs, [getattr(results[v], key) for v in variants], width, label=key.upper())
        ax.set_xticks([i + 1.5 * width for i in range(len(variants))])
        ax.set_xticklabels(variants, rotation=20, ha="right", fontsize=8)
        ax.set_ylim(0.0, 1.05)
        ax.legend(fontsize=8)
        ax.set_title("variant comparison")
        fig.tight_layout()
        fig_path = out / "comparison.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written["comparison_figure"] = fig_path
    return written
