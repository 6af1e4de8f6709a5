"""Matplotlib figures rendered from plot-data series (headless Agg backend)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["draw_figures"]

_STYLE = {"standard": ("tab:blue", "o"), "memory_augmented": ("tab:red", "s")}


def _save(fig, path: Path) -> Path:
    # no timestamp or version metadata, so reruns write identical bytes
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _accuracy_figure(series: list[dict], out: Path) -> Path | None:
    curves = [s for s in series if s["kind"] == "accuracy_vs_budget" and s["task"] == "average"]
    if not curves:
        return None
    methods = sorted({(s["method"], s["block_size"]) for s in curves})
    fig, axes = plt.subplots(1, len(methods), figsize=(4 * len(methods), 3.4), squeeze=False)
    for ax, (method, B) in zip(axes[0], methods):
        ax.set_xscale("log", base=2)
        ax.minorticks_off()
        for s in curves:
            if (s["method"], s["block_size"]) != (method, B):
                continue
            color, marker = _STYLE.get(s["backbone"], ("gray", "x"))
            ax.plot(s["x"], s["y"], marker=marker, color=color, label=s["backbone"])
            ax.set_xticks(s["x"], s["x_label"])
        ax.set_title(f"{method} (block {B})" if method in ("quest", "moba") else method)
        ax.set_xlabel("KV budget")
        ax.set_ylabel("average accuracy (%)")
        ax.set_ylim(-2, 102)
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, out / "accuracy_vs_budget.png")


def _hit_figure(series: list[dict], out: Path) -> Path | None:
    dists = [s for s in series if s["kind"] == "hit_rate_distribution" and s["task"] == "pooled"]
    if not dists:
        return None
    panels = defaultdict(list)
    for s in dists:
        panels[(s["method"], s["budget"])].append(s)
    keys = sorted(panels)
    fig, axes = plt.subplots(1, len(keys), figsize=(4 * len(keys), 3.2), squeeze=False)
    for ax, key in zip(axes[0], keys):
        group = panels[key]
        width = 0.8 / len(group)
        for i, s in enumerate(group):
            color, _ = _STYLE.get(s["backbone"], ("gray", "x"))
            xs = [j + i * width for j in range(len(s["rates"]))]
            ax.bar(xs, s["rates"], width=width, color=color, label=s["backbone"])
        ax.set_title(f"{key[0]} @ {key[1]}")
        ax.set_xlabel("head rank")
        ax.set_ylabel("hit rate")
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, out / "hit_rates.png")


def draw_figures(series: list[dict], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    made = [_accuracy_figure(series, out), _hit_figure(series, out)]
    return [p for p in made if p is not None]
