"""PNG figures written next to the delimited reports."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "relau",
}
COLORS = {"baseline": "#8c8c8c", "relative": "#1f5fa6"}
LABEL_Y = {"inc": 1, "same": 0, "dec": -1}


def _save(fig, path, description: str = ""):
    # no Software/date metadata so repeated runs give identical bytes
    meta = {"Software": None}
    if description:
        meta["Description"] = description
    fig.savefig(path, dpi=100, metadata=meta)
    plt.close(fig)


def plot_report(report, path, description: str = "") -> None:
    """Grouped bars per AU for F1, AUC and accuracy of both methods."""
    metrics = (("f1", "macro-F1"), ("auc", "AUC"), ("accuracy", "accuracy"))
    aus = [f"AU{r['au']}" for r in report.rows] + ["mean"]
    x = np.arange(len(aus))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.2), sharey=True)
        for ax, (key, title) in zip(axes, metrics):
            for k, method in enumerate(("baseline", "relative")):
                vals = [r[f"{key}_{method}"] for r in report.rows] + [report.summary["mean"].get(f"{key}_{method}")]
                vals = [np.nan if v is None else v for v in vals]
                ax.bar(x + (k - 0.5) * 0.38, vals, 0.38, color=COLORS[method], label=method)
            ax.set_xticks(x)
            ax.set_xticklabels(aus, rotation=45)
            ax.set_ylim(0, 1)
            p = report.summary["p"].get(key)
            ax.set_title(title if p is None else f"{title} (paired t-test p = {p:.3g})")
        axes[0].legend(loc="lower left", frameon=False)
        fig.tight_layout()
        _save(fig, path, description)


def plot_predictions(frames: Sequence[int], scores: Sequence[float], labels: Sequence[str], threshold: float,
                     path, title: str = "", truth: Optional[Sequence[float]] = None,
                     description: str = "") -> None:
    """Aggregated score s per frame with the +-T band and the resulting labels."""
    frames = np.asarray(frames)
    with plt.rc_context(STYLE):
        fig, (ax, ax2) = plt.subplots(2, 1, figsize=(8, 4), sharex=True, gridspec_kw={"height_ratios": [3, 1]})
        ax.plot(frames, scores, color=COLORS["relative"], lw=1.4, label="s")
        if truth is not None:
            ax.plot(frames, truth, color="k", lw=1.0, ls="--", label="intensity")
        ax.axhspan(-threshold, threshold, color="0.9", zorder=0)
        ax.axhline(0, color="0.6", lw=0.6)
        ax.set_ylim(-1.05, 1.05)
        ax.set_ylabel("score")
        ax.legend(loc="upper right", frameon=False)
        if title:
            ax.set_title(title)
        ax2.step(frames, [LABEL_Y[l] for l in labels], where="mid", color="k", lw=1.0)
        ax2.set_yticks([-1, 0, 1])
        ax2.set_yticklabels(["dec", "same", "inc"])
        ax2.set_xlabel("frame")
        fig.tight_layout()
        _save(fig, path, description)
