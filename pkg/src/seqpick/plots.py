"""Matplotlib figure rendering for run reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_learning_curves(metrics_by_seed, path, ylabel="eval return"):
    """Per-seed evaluation curves plus their mean."""
    fig, ax = plt.subplots(figsize=(7, 4))
    all_steps = None
    stacked = []
    for seed, rows in sorted(metrics_by_seed.items()):
        steps = [int(r["step"]) for r in rows]
        values = [float(r["eval_return"]) for r in rows]
        ax.plot(steps, values, alpha=0.35, label=f"seed {seed}")
        if all_steps is None or len(steps) < len(all_steps):
            all_steps = steps
        stacked.append(values)
    if stacked and all(len(v) == len(stacked[0]) for v in stacked):
        mean = [sum(col) / len(col) for col in zip(*stacked)]
        ax.plot(all_steps, mean, color="black", linewidth=2, label="mean")
    ax.set_xlabel("training step")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curve(losses, path, ylabel="loss"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(1, len(losses) + 1), losses, linewidth=0.8)
    ax.set_xlabel("training step")
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_slack_histogram(slacks, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(slacks, bins=40)
    ax.set_xlabel("bound slack (rhs - lhs)")
    ax.set_ylabel("instances")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
