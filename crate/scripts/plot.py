#!/usr/bin/env python3
"""Reference plots for vqe-lab output directories.

usage: plot.py OUT_DIR [OUT_DIR ...]

Each directory is inspected for the files an experiment writes; PNGs are
saved next to the CSVs.
"""
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

COLORS = {"exact": "tab:blue", "shot": "tab:green", "noisy": "tab:red", "qem": "tab:purple"}


def ground_value(out, prefix):
    meta = out / f"{prefix}_metadata.json"
    if meta.exists():
        return json.loads(meta.read_text())["instance"]["ground_value"]
    return None


def plot_curves(out, prefix):
    summaries = sorted(out.glob(f"{prefix}_eps*_summary.csv"))
    eps_values = sorted({p.name[len(prefix) + 4 :].split("_")[0] for p in summaries}, key=float)
    if not eps_values:
        return
    ground = ground_value(out, prefix)
    fig, axes = plt.subplots(1, len(eps_values), figsize=(6 * len(eps_values), 4), squeeze=False)
    for ax, eps in zip(axes[0], eps_values):
        for regime, color in COLORS.items():
            path = out / f"{prefix}_eps{eps}_{regime}_summary.csv"
            if not path.exists():
                continue
            s = pd.read_csv(path)
            ax.plot(s.t, s["mean"], color=color, label=regime)
            ax.fill_between(s.t, s["min"], s["max"], color=color, alpha=0.2)
        if ground is not None:
            ax.axhline(ground, color="k", ls="--", lw=0.8, label="ground")
        ax.set(title=f"ε = {eps}", xlabel="iteration", ylabel="loss")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{prefix}.png", dpi=120)


def plot_sweep(out, prefix, x, panel):
    path = out / f"{prefix}_summary.csv"
    if not path.exists():
        return
    s = pd.read_csv(path)
    panels = sorted(s[panel].unique())
    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4), squeeze=False)
    for ax, value in zip(axes[0], panels):
        part = s[s[panel] == value]
        for regime, color in COLORS.items():
            r = part[part.regime == regime].sort_values(x)
            ax.errorbar(r[x], r["mean"], yerr=r["std"], color=color, marker="o", capsize=3, label=regime)
        ax.axhline(part.ground_value.iloc[0], color="k", ls="--", lw=0.8, label="ground")
        if x == "n_c":
            ax.set_xscale("log", base=2)
        ax.set(title=f"{panel} = {value}", xlabel=x, ylabel="final loss")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{prefix}.png", dpi=120)


def plot_bounds(out):
    path = out / "bounds_reports.csv"
    if not path.exists():
        return
    r = pd.read_csv(path)
    r = r[(r.theoretical.abs() > 1e-6) & (r.kind == "upper")]
    ratio = r.empirical / r.theoretical
    fig, ax = plt.subplots(figsize=(8, 0.3 * len(r) + 1))
    ax.barh(r.name, ratio, color=["tab:green" if p else "tab:red" for p in r.passed])
    ax.axvline(1.0, color="k", lw=0.8)
    ax.set(xlabel="measured / bound", xscale="log")
    fig.tight_layout()
    fig.savefig(out / "bounds.png", dpi=120)


def main(dirs):
    for d in map(Path, dirs):
        for prefix in ("convergence", "test_shots", "custom"):
            plot_curves(d, prefix)
        plot_sweep(d, "noise_sweep", "epsilon", "n_c")
        plot_sweep(d, "circuit_sweep", "n_c", "epsilon")
        plot_bounds(d)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1:])
