"""PNG figures for the report commands.

Figures render with the Agg backend and carry no software/date metadata, so a
given table always produces the same bytes.
"""
from __future__ import annotations

import io
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 100,
}


def save_png(fig, path: str) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def roc_figure(curves: Mapping[str, np.ndarray], path: str, title: str = "") -> None:
    """One ROC line per algorithm plus the chance diagonal."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
        for name, pts in curves.items():
            if len(pts):
                ax.plot(pts[:, 0], pts[:, 1], lw=1.2, label=name)
        ax.set_xlabel("1 - specificity")
        ax.set_ylabel("sensitivity")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        save_png(fig, path)


def rank_heatmap_figure(features: Sequence[str], models: Sequence[str], ranks: np.ndarray,
                        path: str) -> None:
    """Features down the side, models across; darker is more important."""
    ranks = np.asarray(ranks, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 0.7 * len(models), 0.9 + 0.25 * len(features)))
        im = ax.imshow(ranks, cmap="Blues_r", aspect="auto")
        ax.set_xticks(range(len(models)), models, rotation=45, ha="right")
        ax.set_yticks(range(len(features)), features)
        for i in range(ranks.shape[0]):
            for j in range(ranks.shape[1]):
                ax.text(j, i, f"{ranks[i, j]:.0f}", ha="center", va="center", fontsize=6)
        fig.colorbar(im, ax=ax, label="rank")
        fig.tight_layout()
        save_png(fig, path)


def correlation_figure(correlations: Mapping[str, float | None], path: str) -> None:
    """Horizontal bars of each feature's correlation with the default label."""
    items = [(k, v) for k, v in correlations.items() if v is not None]
    names = [k for k, _ in items]
    vals = np.array([v for _, v in items], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 0.9 + 0.22 * len(items)))
        ax.barh(range(len(items)), vals, color=np.where(vals >= 0, "tab:red", "tab:blue"))
        ax.set_yticks(range(len(items)), names)
        ax.invert_yaxis()
        ax.axvline(0, color="0.3", lw=0.6)
        ax.set_xlabel("correlation with default")
        fig.tight_layout()
        save_png(fig, path)
