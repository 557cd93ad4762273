"""Report figures rendered to PNG next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # drop the version string so files compare equal across matplotlib releases
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def pr_roc_figure(curves: dict, path) -> Path:
    """``curves`` maps scheme -> dict(recall, precision, fpr, tpr, ap, auc) of macro curves."""
    with plt.rc_context(STYLE):
        fig, (ax_pr, ax_roc) = plt.subplots(1, 2, figsize=(8, 3.6))
        for name, c in curves.items():
            ax_pr.plot(c["recall"], c["precision"], lw=1.2, label=f"{name} ({c['ap']:.3f})")
            ax_roc.plot(c["fpr"], c["tpr"], lw=1.2, label=f"{name} ({c['auc']:.3f})")
        ax_roc.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
        ax_pr.set(xlabel="Recall", ylabel="Precision", xlim=(0, 1), ylim=(0, 1.02), title="Macro PR")
        ax_roc.set(xlabel="False positive rate", ylabel="True positive rate", xlim=(0, 1), ylim=(0, 1.02),
                   title="Macro ROC")
        ax_pr.legend(loc="lower left", frameon=False)
        ax_roc.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def scheme_sizes_figure(sizes: dict, path) -> Path:
    """Bar chart of cluster fractions, one panel row per scheme, sorted by size."""
    n = max(len(sizes), 1)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, figsize=(6, 1.4 * n + 0.4), squeeze=False)
        for ax, (name, sz) in zip(axes[:, 0], sizes.items()):
            frac = np.sort(np.array([f for _, f in sz.values()]))[::-1]
            ax.bar(np.arange(len(frac)), frac, color="C0", width=0.8)
            ax.set_ylabel("fraction")
            ax.set_title(f"{name} ({len(frac)} labels)", loc="left")
        axes[-1, 0].set_xlabel("label (by size)")
        fig.tight_layout()
        return _save(fig, path)


def flow_figure(crosstab: np.ndarray, source: str, target: str, path) -> Path:
    """Row-normalized crosstab of journal flows between two schemes."""
    tab = np.asarray(crosstab, dtype=np.float64)
    rows = tab.sum(axis=1, keepdims=True)
    share = np.divide(tab, rows, out=np.zeros_like(tab), where=rows > 0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(share, cmap="Blues", vmin=0, vmax=1, aspect="auto", interpolation="nearest")
        ax.set(xlabel=f"{target} label", ylabel=f"{source} label", title="Journal flows (row share)")
        fig.colorbar(im, ax=ax, fraction=0.05)
        fig.tight_layout()
        return _save(fig, path)


def similarity_map_figure(sm, path) -> Path:
    """IDW similarity surface with the journal positions overlaid."""
    g = sm.grid
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4.2))
        im = ax.imshow(sm.values, origin="lower", extent=(g.xmin, g.xmax, g.ymin, g.ymax),
                       cmap="viridis", vmin=0, vmax=1, aspect="auto")
        ax.scatter(sm.xy[:, 0], sm.xy[:, 1], s=6, c="white", edgecolors="k", linewidths=0.3)
        ax.set(xlabel="x", ylabel="y", title=f"Element-centric similarity (IDW p={sm.power:g})")
        fig.colorbar(im, ax=ax, fraction=0.05)
        fig.tight_layout()
        return _save(fig, path)
