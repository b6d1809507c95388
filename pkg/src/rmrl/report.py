"""Matplotlib figures written next to the CSV/JSON run artifacts."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_LABELS = {
    "standard": "Standard RL",
    "replay": "RL + Replay Buffer",
    "rmrl": "RM-RL",
    "pretrained-rmrl": "Pretrained RM-RL",
}
METHOD_COLORS = {
    "standard": "#4c72b0",
    "replay": "#dd8452",
    "rmrl": "#55a868",
    "pretrained-rmrl": "#c44e52",
}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_reward_curve(rewards, ema_rewards, path, *, tau=None, title=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        steps = np.arange(1, len(rewards) + 1)
        ax.plot(steps, rewards, color="0.75", lw=0.8, label="reward")
        ax.plot(steps, ema_rewards, color="#c44e52", lw=1.5, label="EMA")
        if tau is not None:
            ax.axhline(tau, color="0.3", ls="--", lw=0.8, label=f"tau = {tau:g}")
        ax.set_xlabel("training step")
        ax.set_ylabel("reward")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_bench_curves(curves: dict[str, list[np.ndarray]], path, *, tau=None) -> Path:
    """Median EMA reward curve per method with the interquartile band."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.4))
        for method, traces in curves.items():
            if not traces:
                continue
            n = min(len(t) for t in traces)
            stack = np.stack([t[:n] for t in traces])
            steps = np.arange(1, n + 1)
            color = METHOD_COLORS.get(method)
            q25, med, q75 = np.percentile(stack, [25, 50, 75], axis=0)
            ax.fill_between(steps, q25, q75, color=color, alpha=0.18, lw=0)
            ax.plot(steps, med, color=color, lw=1.4, label=METHOD_LABELS.get(method, method))
        if tau is not None:
            ax.axhline(tau, color="0.3", ls="--", lw=0.8)
        ax.set_xlabel("training step")
        ax.set_ylabel("EMA reward (median over seeds)")
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_bench_summary(rows: list[dict], path) -> Path:
    """Per-method distributions of T_tau^10 and evaluation translation error."""
    methods = [m for m in METHOD_LABELS if any(r["method"] == m for r in rows)]
    with plt.rc_context(STYLE):
        fig, (ax_t, ax_e) = plt.subplots(1, 2, figsize=(7.0, 3.0))
        t_data, e_data = [], []
        for m in methods:
            mine = [r for r in rows if r["method"] == m and not r.get("error")]
            t_data.append([r["t_tau_10"] for r in mine if isinstance(r["t_tau_10"], (int, float))])
            e_data.append([r["e_trans_mm"] for r in mine])
        labels = [METHOD_LABELS[m] for m in methods]
        for ax, data, ylabel in ((ax_t, t_data, "T_tau^10 (reached runs)"), (ax_e, e_data, "eval e_trans [mm]")):
            ax.boxplot([d if d else [np.nan] for d in data], widths=0.5)
            ax.set_xticks(range(1, len(labels) + 1), labels, rotation=20, ha="right")
            ax.set_ylabel(ylabel)
        return _save(fig, path)
