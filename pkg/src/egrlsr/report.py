"""Figure rendering for sweep and benchmark outputs.

Each plotting helper takes the summary rows a command just wrote as CSV and
renders a matplotlib figure next to it, so a results directory carries both
the delimited data and a picture of it.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, out_path: str) -> str:
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_bench_recovery(rows: list[dict], out_path: str) -> str:
    """Bar chart of recovery rate per task with stdev whiskers.

    rows: dicts with keys task, rate, stdev.
    """
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 1.5), 3.2))
    names = [r["task"] for r in rows]
    rates = [100.0 * r["rate"] for r in rows]
    errs = [100.0 * r["stdev"] for r in rows]
    ax.bar(names, rates, yerr=errs, capsize=3, color="#4878a8")
    ax.set_ylabel("recovery rate (%)")
    ax.set_ylim(0, 105)
    ax.grid(axis="y", alpha=0.3)
    return _finish(fig, out_path)


def plot_noise_sweep(rows: list[dict], out_path: str) -> str:
    """Recovery rate vs noise level, one line per task.

    rows: dicts with keys task, noise, rate.
    """
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    tasks = sorted({r["task"] for r in rows})
    for name in tasks:
        pts = sorted((r["noise"], 100.0 * r["rate"]) for r in rows if r["task"] == name)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        # symlog-style axis: plot zero level at a pseudo position
        ax.plot(range(len(xs)), ys, marker="o", label=name)
        ax.set_xticks(range(len(xs)))
        ax.set_xticklabels([f"{x:g}" for x in xs])
    ax.set_xlabel("noise level")
    ax.set_ylabel("recovery rate (%)")
    ax.set_ylim(-3, 105)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, out_path)


def plot_eps_sweep(rows: list[dict], out_path: str) -> str:
    """Mean trajectories-to-success vs exploration share, per task.

    rows: dicts with keys task, epsilon, tts (tts may be None).
    """
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    tasks = sorted({r["task"] for r in rows})
    for name in tasks:
        pts = sorted(
            (r["epsilon"], r["tts"])
            for r in rows
            if r["task"] == name and r["tts"] is not None
        )
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("mean trajectories to success")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, out_path)


def plot_ablation(rows: list[dict], out_path: str) -> str:
    """Grouped bars: recovery rate per task under each configuration.

    rows: dicts with keys task, config, rate.
    """
    tasks = sorted({r["task"] for r in rows})
    configs = []
    for r in rows:
        if r["config"] not in configs:
            configs.append(r["config"])
    fig, ax = plt.subplots(figsize=(max(5.0, 1.2 * len(tasks) + 2), 3.4))
    width = 0.8 / max(len(configs), 1)
    xs = np.arange(len(tasks))
    for i, cfg in enumerate(configs):
        vals = []
        for t in tasks:
            match = [r for r in rows if r["task"] == t and r["config"] == cfg]
            vals.append(100.0 * match[0]["rate"] if match else 0.0)
        ax.bar(xs + i * width, vals, width=width, label=cfg)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(tasks)
    ax.set_ylabel("recovery rate (%)")
    ax.set_ylim(0, 105)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=7)
    return _finish(fig, out_path)
