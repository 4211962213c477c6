"""Benchmark report writers: JSON, CSV and SVG accuracy histograms."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import N_BINS, AlgorithmSummary, BenchmarkReport  # noqa: E402

CSV_FIELDS = ("algorithm", "run", "seed", "x", "y", "s", "error", "distance", "evals")

# fixed ids and no timestamp, so identical reports give identical files
_SVG_RC = {"svg.hashsalt": "tplreg", "svg.fonttype": "none", "font.size": 9}


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def report_json(report: BenchmarkReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


def report_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for summary in report.summaries.values():
        for i, (rec, dist) in enumerate(zip(summary.records, summary.distances)):
            p = rec.best_pose
            writer.writerow([summary.algorithm.value, i, rec.seed, repr(p.x), repr(p.y), repr(p.s),
                             repr(rec.best_error), repr(dist), rec.evals_used])
    return buf.getvalue()


def _draw_histogram(ax, summary: AlgorithmSummary, ymax=None):
    counts = summary.histogram.bin_counts
    ax.bar(range(N_BINS), counts, width=0.8, color="0.35", edgecolor="black", linewidth=0.6)
    ax.set_xticks(range(N_BINS), [str(k) for k in range(N_BINS - 1)] + [f"{N_BINS - 1}+"])
    ax.set_xlim(-0.6, N_BINS - 0.4)
    if ymax:
        ax.set_ylim(0, ymax)
    ax.set_xlabel("distance bin")
    ax.set_ylabel("count")
    ax.set_title(f"{summary.algorithm.label} (n={summary.histogram.runs})")
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def _save_svg(fig, path: Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    _atomic_write(path, buf.getvalue())


def histogram_svg(summary: AlgorithmSummary, path) -> Path:
    path = Path(path)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0), layout="constrained")
        _draw_histogram(ax, summary)
        _save_svg(fig, path)
    return path


def overview_svg(report: BenchmarkReport, path) -> Path:
    """All histograms side by side on a shared count axis."""
    path = Path(path)
    summaries = list(report.summaries.values())
    ymax = max(max(s.histogram.bin_counts) for s in summaries) * 1.08
    cols = min(len(summaries), 3)
    rows = -(-len(summaries) // cols)
    with plt.rc_context(_SVG_RC):
        fig, axes = plt.subplots(rows, cols, figsize=(3.6 * cols, 2.8 * rows), layout="constrained",
                                 squeeze=False)
        for ax, summary in zip(axes.flat, summaries):
            _draw_histogram(ax, summary, ymax)
        for ax in list(axes.flat)[len(summaries):]:
            ax.set_visible(False)
        _save_svg(fig, path)
    return path


def write_report(report: BenchmarkReport, output_dir, figures: bool = True) -> dict:
    """Write ``report.json``, ``runs.csv`` and one SVG per algorithm into ``output_dir``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    written["json"] = out / "report.json"
    _atomic_write(written["json"], report_json(report).encode("utf-8"))
    written["csv"] = out / "runs.csv"
    _atomic_write(written["csv"], report_csv(report).encode("utf-8"))
    if figures:
        for summary in report.summaries.values():
            key = f"svg_{summary.algorithm.value}"
            written[key] = histogram_svg(summary, out / f"histogram_{summary.algorithm.value}.svg")
        written["svg_overview"] = overview_svg(report, out / "histograms.svg")
    return written
