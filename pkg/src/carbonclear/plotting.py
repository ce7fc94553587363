"""PNG figures for the report tables (matplotlib, non-interactive backend)."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import METRIC_FIELDS, UNITS  # noqa: E402

TITLES = {
    "total_generation": "Total generation",
    "total_generation_cost": "Total generation cost",
    "total_carbon": "Total carbon",
    "average_carbon": "Average carbon",
}
MODEL_COLORS = {"carbon-cost": "tab:green", "carbon-flow": "tab:red"}
# no timestamps or version strings, so reruns produce identical files
_PNG_METADATA = {"Software": None}


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def _ylabel(metric: str) -> str:
    return f"{TITLES[metric]} [{UNITS[metric]}]"


def plot_cost_sweep(rows: Sequence[dict], path: str) -> str:
    fig, axes = plt.subplots(len(METRIC_FIELDS), 1, figsize=(6, 9), sharex=True)
    cases = [r["case"] for r in rows]
    for ax, metric in zip(axes, METRIC_FIELDS):
        ax.bar(range(len(rows)), [r[metric] for r in rows], color="tab:green")
        ax.set_ylabel(_ylabel(metric), fontsize=8)
    axes[-1].set_xticks(range(len(rows)), cases, rotation=30, fontsize=8)
    return _save(fig, path)


def plot_cost_comparison(rows: Sequence[dict], path: str) -> str:
    ranges = sorted({(r["range_lo"], r["range_hi"]) for r in rows})
    models = [m for m in MODEL_COLORS if any(r["model"] == m for r in rows)]
    fig, axes = plt.subplots(len(METRIC_FIELDS), 1, figsize=(6, 9), sharex=True)
    width = 0.8 / max(1, len(models))
    for ax, metric in zip(axes, METRIC_FIELDS):
        for k, model in enumerate(models):
            vals = []
            for rng in ranges:
                match = [r for r in rows if (r["range_lo"], r["range_hi"]) == rng and r["model"] == model
                         and r["metric"] == metric]
                vals.append(match[0]["mean"] if match and match[0]["mean"] is not None else 0.0)
            ax.bar([i + (k - (len(models) - 1) / 2) * width for i in range(len(ranges))], vals, width,
                   color=MODEL_COLORS[model], label=model)
        ax.set_ylabel(_ylabel(metric), fontsize=8)
    axes[0].legend(fontsize=8)
    axes[-1].set_xticks(range(len(ranges)), [f"[{lo:g},{hi:g}]" for lo, hi in ranges], fontsize=8)
    axes[-1].set_xlabel("carbon cost range [$/ton]")
    return _save(fig, path)


def plot_fraction_boxes(rows: Sequence[dict], path: str) -> str:
    fracs = sorted({r["fraction_percent"] for r in rows})
    models = [m for m in MODEL_COLORS if any(r["model"] == m for r in rows)]
    fig, axes = plt.subplots(len(METRIC_FIELDS), 1, figsize=(7, 10), sharex=True)
    width = 0.8 / max(1, len(models))
    for ax, metric in zip(axes, METRIC_FIELDS):
        for k, model in enumerate(models):
            pos, stats, pts = [], [], []
            for i, f in enumerate(fracs):
                match = [r for r in rows if r["fraction_percent"] == f and r["model"] == model and r["metric"] == metric]
                if not match or match[0]["mean"] is None:
                    continue
                r = match[0]
                x = i + (k - (len(models) - 1) / 2) * width
                pos.append(x)
                stats.append({"med": r["mean"], "q1": r["q1"], "q3": r["q3"], "whislo": r["min"],
                              "whishi": r["max"], "fliers": []})
                pts.append((x, r["points"]))
            if stats:
                ax.bxp(stats, positions=pos, widths=width * 0.8, patch_artist=True,
                       boxprops={"facecolor": MODEL_COLORS[model], "alpha": 0.4}, showfliers=False)
                for x, values in pts:
                    ax.plot([x] * len(values), values, ".", color=MODEL_COLORS[model], markersize=3)
        ax.set_ylabel(_ylabel(metric), fontsize=8)
    axes[-1].set_xticks(range(len(fracs)), [f"{f:g}" for f in fracs], fontsize=8)
    axes[-1].set_xlabel("carbon-sensitive consumers [%]  (box centre line: mean)")
    return _save(fig, path)


def render_all(tables: dict, out_dir: str) -> list[str]:
    out = []
    if "cost_sweep_table" in tables and tables["cost_sweep_table"]:
        out.append(plot_cost_sweep(tables["cost_sweep_table"], os.path.join(out_dir, "cost_sweep_table.png")))
    if tables.get("cost_model_comparison"):
        out.append(plot_cost_comparison(tables["cost_model_comparison"],
                                        os.path.join(out_dir, "cost_model_comparison.png")))
    for name in ("fraction_boxplot", "fraction_model_comparison"):
        if tables.get(name):
            out.append(plot_fraction_boxes(tables[name], os.path.join(out_dir, f"{name}.png")))
    return out
