"""CSV reports with companion matplotlib figures.

Every report path writes the delimited data first, then renders a PNG next
to it (same stem). Figures use the Agg backend so reports work headless.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _figure_path(csv_path) -> str:
    return os.path.splitext(str(csv_path))[0] + ".png"


def schedule_figure(csv_path, rows) -> str:
    """Weight-curve plot, one line per distortion level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    by_level: dict[int, list] = {}
    for step, level, w in rows:
        by_level.setdefault(level, []).append((step, w))
    for level in sorted(by_level):
        pts = by_level[level]
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                label=f"level {level}")
    ax.set_xlabel("training step")
    ax.set_ylabel("sample weight")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    out = _figure_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def metrics_figure(csv_path, names, values) -> str:
    """Bar chart of a metric report."""
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(names)), 4))
    ax.bar(range(len(names)), values)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("value")
    fig.tight_layout()
    out = _figure_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def training_figure(csv_path, epoch_log) -> str:
    """Loss curve over epochs from the per-epoch training log."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([row["epoch"] for row in epoch_log],
            [row["mean_loss"] for row in epoch_log], marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    fig.tight_layout()
    out = _figure_path(csv_path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
