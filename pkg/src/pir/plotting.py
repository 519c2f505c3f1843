"""Figures written next to the delimited reports.

Uses the non-interactive Agg backend; PNG metadata is stripped so reruns
produce identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "pir",
}


def new_figure(width=6.0, height=None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height or width * golden_ratio))


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_method_comparison(reports: Sequence, path, metric: str = "p_recall"):
    """Grouped bars: one group per cutoff, one bar per method (one task)."""
    ks = sorted({k for r in reports for k in r.per_k})
    methods = [r.method.value for r in reports]
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        width = 0.8 / max(len(reports), 1)
        for i, rep in enumerate(reports):
            xs = [j + (i - (len(reports) - 1) / 2) * width for j in range(len(ks))]
            ys = [100.0 * rep.per_k[k][metric] if k in rep.per_k else 0.0 for k in ks]
            ax.bar(xs, ys, width=width, label=methods[i])
        ax.set_xticks(range(len(ks)))
        ax.set_xticklabels([f"@{k}" for k in ks])
        ax.set_ylim(0, 100)
        ax.set_ylabel("p-Recall (%)" if metric == "p_recall" else "Recall (%)")
        ax.set_title(reports[0].task if reports else "")
        ax.legend(frameon=False, ncol=min(len(reports), 4))
        return save(fig, path)


def plot_bias(table, path, title: str = ""):
    labels = list(table.portions) or list(table.support_counts)
    values = [100.0 * table.portions.get(lab, 0.0) for lab in labels]
    with plt.rc_context(STYLE):
        fig, ax = new_figure(width=4.5)
        ax.bar(labels, values, color="0.4")
        if labels:
            ax.axhline(100.0 / len(labels), color="0.7", linestyle="--", linewidth=1)
        ax.set_ylim(0, 100)
        ax.set_ylabel("portion (%)")
        ax.set_xlabel(table.label_field)
        ax.set_title(title or f"{table.mode} @{table.k} (n={table.support})")
        return save(fig, path)
