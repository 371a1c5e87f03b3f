"""Figures for ``malpipe report``. Rendered off-screen with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (4.8, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_roc(curves: dict, path) -> Path:
    """``curves`` maps a split name to (points, auc)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, (points, auc) in curves.items():
            if not points:
                continue
            fpr, tpr = zip(*points)
            label = name if auc is None else f"{name} (AUC {auc:.4f})"
            ax.plot(fpr, tpr, drawstyle="default", label=label)
        ax.plot([0, 1], [0, 1], ls=":", color="0.6", lw=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right")
        return _save(fig, Path(path))


def plot_weight_grid(grid_report: list[dict], chosen_w1: float, path) -> Path:
    w = [row["w1"] for row in grid_report]
    acc = [row["accuracy"] for row in grid_report]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(w, acc, marker="o", ms=3)
        ax.axvline(chosen_w1, ls="--", color="C3", lw=0.8, label=f"chosen w1 = {chosen_w1:.1f}")
        ax.set_xlabel("w1 (weight of model 1)")
        ax.set_ylabel("selection accuracy")
        ax.legend(loc="best")
        return _save(fig, Path(path))


def plot_reducer(reducer_doc: dict, path, top: int = 30) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if reducer_doc["method"] == "selection":
            imp = reducer_doc["importances"]
            order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))[:top]
            ax.bar(range(len(order)), [imp[j] for j in order])
            ax.set_xticks(range(len(order)))
            ax.set_xticklabels([str(j) for j in order], rotation=90, fontsize=6)
            ax.set_xlabel("feature index")
            ax.set_ylabel("total split gain")
        else:
            ev = reducer_doc["explained_variance"]
            total = sum(ev) or 1.0
            cum, acc = [], 0.0
            for v in ev:
                acc += v
                cum.append(acc / total)
            ax.bar(range(1, len(ev) + 1), ev, label="variance")
            ax.set_xlabel("component")
            ax.set_ylabel("explained variance")
            twin = ax.twinx()
            twin.plot(range(1, len(ev) + 1), cum, color="C1", lw=1)
            twin.set_ylabel("cumulative share of retained variance")
            twin.set_ylim(0, 1.02)
        return _save(fig, Path(path))


def plot_stage_times(stage_seconds: dict, path) -> Path:
    names = list(stage_seconds)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.barh(names, [stage_seconds[n] for n in names])
        ax.invert_yaxis()
        ax.set_xlabel("wall time (s)")
        return _save(fig, Path(path))
