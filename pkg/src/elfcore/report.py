"""Sweep report: summary CSV plus PNG figures next to it."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sweep import RunRow, summarize  # noqa: E402

SUMMARY_FIELDS = ("variant", "runs", "accuracy_mean", "accuracy_std", "wu_final_quarter_mean")


def write_summary(rows: list[RunRow], path: Path) -> dict:
    summary = summarize(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for v, s in summary.items():
            w.writerow([v, s["runs"], f"{s['accuracy_mean']:.6f}", f"{s['accuracy_std']:.6f}",
                        f"{s['wu_final_quarter_mean']:.1f}"])
    return summary


def _by_variant(rows: list[RunRow]) -> dict[str, list[RunRow]]:
    out: dict[str, list[RunRow]] = {}
    for r in rows:
        out.setdefault(r.variant, []).append(r)
    return out


def plot_accuracy(rows: list[RunRow], path: Path) -> None:
    groups = _by_variant(rows)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for x, (v, sel) in enumerate(groups.items()):
        acc = [r.accuracy for r in sel]
        ax.bar(x, np.mean(acc), color="0.8", edgecolor="0.3")
        ax.plot([x] * len(acc), acc, "o", color="C0", ms=4)
    ax.set_xticks(range(len(groups)), list(groups), rotation=20)
    ax.set_ylabel("held-out accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_curves(rows: list[RunRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for v, sel in _by_variant(rows).items():
        n = min(len(r.curve) for r in sel)
        if n == 0:
            continue
        curve = np.mean([r.curve[:n] for r in sel], axis=0)
        ax.plot(np.arange(1, n + 1), curve, marker="o", label=v)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_weight_updates(rows: list[RunRow], path: Path) -> None:
    groups = _by_variant(rows)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    means = [np.mean([r.wu_final_quarter for r in sel]) for sel in groups.values()]
    ax.bar(range(len(groups)), means, color="C1")
    ax.set_xticks(range(len(groups)), list(groups), rotation=20)
    ax.set_ylabel("weight updates, final quarter")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_churn(rows: list[RunRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for v, sel in _by_variant(rows).items():
        n = min(len(r.churn_curve) for r in sel)
        if n == 0 or not any(any(r.churn_curve) for r in sel):
            continue
        ax.plot(np.arange(1, n + 1), np.mean([r.churn_curve[:n] for r in sel], axis=0), marker="o", label=v)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean mask churn per event")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(rows: list[RunRow], out: str | Path) -> list[Path]:
    """Write ``summary.csv`` and the figures into ``out``; returns the paths written."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "summary.csv", out / "accuracy.png", out / "accuracy_curves.png",
             out / "weight_updates.png", out / "churn.png"]
    write_summary(rows, paths[0])
    plot_accuracy(rows, paths[1])
    plot_curves(rows, paths[2])
    plot_weight_updates(rows, paths[3])
    plot_churn(rows, paths[4])
    return paths
