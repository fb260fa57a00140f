"""CSV and figure output for training runs and evaluations.

Figures are rendered with the Agg backend and written next to the delimited
files; PNG output carries no timestamps, so reruns with identical inputs
produce identical bytes.
"""

import csv
from pathlib import Path
from typing import List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .training import MveReport, StepRecord  # noqa: E402

__all__ = [
    "write_loss_csv",
    "write_mve_csv",
    "plot_loss_curves",
    "plot_mve",
    "format_mve_table",
]

LOSS_COLUMNS = ["step", "L_sem", "L_sem_edit", "L_rec", "L_rec_edit", "L_sim", "total"]


def write_loss_csv(history: Sequence[StepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_COLUMNS)
        for rec in history:
            writer.writerow([f"{x:.10g}" for x in rec.as_row()])


def write_mve_csv(report: MveReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fraction"])
        for t, f in report.as_rows():
            writer.writerow([f"{t:.10g}", f"{f:.10g}"])


def plot_loss_curves(history: Sequence[StepRecord], path) -> None:
    steps = [r.step for r in history]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    series = [
        ("L_sem", [r.l_sem for r in history]),
        ("L_sem'", [r.l_sem_edit for r in history]),
        ("L_rec", [r.l_rec for r in history]),
        ("L_rec'", [r.l_rec_edit for r in history]),
        ("L_sim", [r.l_sim for r in history]),
        ("total", [r.total for r in history]),
    ]
    for name, values in series:
        if any(v > 0 for v in values):
            ax.plot(steps, values, label=name, linewidth=1.0)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_mve(reports: List[Tuple[int, MveReport]], path) -> None:
    """Fraction-below-threshold curves over training, one line per threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if reports:
        thresholds = reports[0][1].thresholds
        steps = [s for s, _ in reports]
        for i, t in enumerate(thresholds):
            ax.plot(steps, [r.fractions[i] for _, r in reports],
                    marker="o", markersize=3, label=f"MVE < {t:g}")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("fraction of vertices")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def format_mve_table(report: MveReport) -> str:
    """Ablation-style table: percentage of vertices under each threshold."""
    head = " | ".join(f"MVE<{t:g}" for t in report.thresholds)
    vals = " | ".join(f"{100.0 * f:5.1f}%" for f in report.fractions)
    rule = "-" * max(len(head), len(vals))
    return f"{head}\n{rule}\n{vals}"
