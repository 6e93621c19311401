"""Figures written next to the delimited outputs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_trace(report: dict, path, title: str | None = None) -> Path:
    """Objective and constraint residual per iteration of one solver run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    it = range(1, len(report["objective_trace"]) + 1)
    ax1.plot(it, report["objective_trace"], marker=".", lw=1)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective")
    ax2.semilogy(it, [max(r, 1e-16) for r in report["constraint_residuals"]], marker=".", lw=1)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("constraint residual")
    fig.suptitle(title or report["solver"])
    return _save(fig, path)


def plot_traces(reports: dict, path) -> Path:
    """Objective traces of several runs on one axis, keyed by label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, rep in sorted(reports.items()):
        t = rep["objective_trace"]
        ax.plot(range(1, len(t) + 1), t, marker=".", lw=1, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_ap(classes, aps, path, title: str = "average precision per class") -> Path:
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(classes) + 2), 3.5))
    vals = [0.0 if a != a else a for a in aps]
    ax.bar([str(c) for c in classes], vals, color="tab:blue")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("AP")
    ax.set_title(title)
    return _save(fig, path)


def plot_confusion(matrix, classes, path) -> Path:
    fig, ax = plt.subplots(figsize=(4 + 0.3 * len(classes), 3.5 + 0.3 * len(classes)))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(classes)), [str(c) for c in classes], rotation=45)
    ax.set_yticks(range(len(classes)), [str(c) for c in classes])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            ax.text(j, i, str(int(v)), ha="center", va="center", fontsize="small")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)
