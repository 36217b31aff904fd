"""Figures and delimited dumps written next to evaluation reports."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import Comparison, EvalReport  # noqa: E402

# fixed metadata keeps the PNG bytes reproducible
_PNG_META = {"Software": None}


def write_pr_csv(report: EvalReport, path) -> None:
    """One row per precision-recall point: class, rank, recall, precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "rank", "recall", "precision"])
        for c in report.classes:
            r = report.results[c]
            for k, (rec, prec) in enumerate(zip(r.recall, r.precision), start=1):
                writer.writerow([c, k, repr(rec), repr(prec)])


def plot_pr_curves(report: EvalReport, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for c in report.classes:
        r = report.results[c]
        if r.ap is None:
            continue
        ax.step([0.0] + r.recall, [1.0] + r.precision, where="post", label=f"{c} (AP {100 * r.ap:.1f})")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(f"{report.label or 'detections'}: mAP {100 * report.mean_average_precision:.2f}%")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_comparison(comparison: Comparison, path) -> None:
    """Grouped bars of per-class AP for the two methods."""
    names = list(comparison.per_class)
    a = [100 * (v[0] or 0.0) for v in comparison.per_class.values()]
    b = [100 * (v[1] or 0.0) for v in comparison.per_class.values()]
    x = range(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(names) + 2), 4))
    ax.bar([i - width / 2 for i in x], a, width, label=f"{comparison.label_a} ({100 * comparison.map_a:.2f})")
    ax.bar([i + width / 2 for i in x], b, width, label=f"{comparison.label_b} ({100 * comparison.map_b:.2f})")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("AP (%)")
    ax.set_ylim(0, 118)
    ax.set_title(f"{comparison.improvement_points:+.2f} mAP points")
    ax.legend(fontsize=8, loc="upper left", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def write_comparison_csv(comparison: Comparison, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", comparison.label_a, comparison.label_b, "delta"])
        for c, (a, b, d) in comparison.per_class.items():
            writer.writerow([c, "" if a is None else repr(a), "" if b is None else repr(b),
                             "" if d is None else repr(d)])
        writer.writerow(["mAP", repr(comparison.map_a), repr(comparison.map_b),
                         repr(comparison.map_b - comparison.map_a)])


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
