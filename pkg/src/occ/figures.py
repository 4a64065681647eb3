"""Matplotlib renderings written next to each report's CSV/JSON output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_CLUSTER_CMAP = plt.get_cmap("tab10")


def save_loss_curves(epoch_rows, path):
    """Total objective and its components per epoch."""
    epochs = [r["epoch"] for r in epoch_rows if r["loss"]]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key, style in (("total", "-"), ("rep_loss", "--"), ("assign_loss", "--"),
                       ("cluster_loss", ":"), ("balance", ":")):
        ax.plot(epochs, [r["loss"][key] for r in epoch_rows if r["loss"]],
                style, label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_metric_curves(epoch_rows, path):
    """ACC/NMI trajectories against each orientation with ground truth."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    orientations = sorted({k for r in epoch_rows for k in (r["metrics"] or {})})
    for orient in orientations:
        epochs = [r["epoch"] for r in epoch_rows if orient in (r["metrics"] or {})]
        for metric, style in (("acc", "-"), ("nmi", "--")):
            ax.plot(epochs,
                    [r["metrics"][orient][metric] for r in epoch_rows
                     if orient in (r["metrics"] or {})],
                    style, label=f"{metric.upper()} vs {orient}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_scatter(rows, path, color_by="cluster"):
    """2-d projection of the embeddings, colored by cluster (or any label)."""
    xs = np.array([r["pc1"] for r in rows])
    ys = np.array([r["pc2"] for r in rows])
    labels = np.array([r[color_by] for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for lab in np.unique(labels):
        mask = labels == lab
        ax.scatter(xs[mask], ys[mask], s=8, alpha=0.6,
                   color=_CLUSTER_CMAP(int(lab) % 10), label=f"{color_by} {lab}")
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    ax.legend(fontsize=8, markerscale=1.5)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_query_efficiency(rows, path):
    """ACC vs query budget, one line per strategy (rows: dicts with
    strategy, budget_pct, acc; multiple seeds per cell are averaged)."""
    strategies = sorted({r["strategy"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for strat in strategies:
        budgets = sorted({r["budget_pct"] for r in rows if r["strategy"] == strat})
        means = [np.mean([r["acc"] for r in rows
                          if r["strategy"] == strat and r["budget_pct"] == b])
                 for b in budgets]
        ax.plot(budgets, means, "o-", label=strat)
    ax.set_xlabel("% of labeled pairs")
    ax.set_ylabel("ACC")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_risk_histogram(deviations, bound, path):
    """Distribution of Monte-Carlo deviations with the bound marked."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.hist(deviations, bins=60, color="steelblue", alpha=0.8)
    ax.axvline(bound, color="crimson", linestyle="--",
               label=f"bound = {bound:.4g}")
    ax.set_xlabel("|mean target risk - importance-weighted risk|")
    ax.set_ylabel("trials")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_ablation_bars(rows, path):
    """Grouped ACC bars per variant and orientation (rows: dicts with
    variant, orientation, acc)."""
    variants = sorted({r["variant"] for r in rows})
    orientations = sorted({r["orientation"] for r in rows})
    width = 0.8 / max(len(orientations), 1)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for k, orient in enumerate(orientations):
        vals = [np.mean([r["acc"] for r in rows
                         if r["variant"] == v and r["orientation"] == orient])
                for v in variants]
        ax.bar(np.arange(len(variants)) + k * width, vals, width,
               label=f"oracle {orient}")
    ax.set_xticks(np.arange(len(variants)) + width * (len(orientations) - 1) / 2)
    ax.set_xticklabels(variants)
    ax.set_ylabel("ACC")
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
