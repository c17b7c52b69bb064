"""Figure rendering for simulation reports.

Renders the metric grid (MSE, coverage, variance ratio against the
experiment's grid variable) to an SVG file next to the delimited
output. Only seed-aggregate rows are drawn: the solid line is the
median over seeds, the dotted line the mean.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_PANELS = (("mse", "MSE"), ("coverage", "coverage"), ("var_ratio", "variance ratio"))


def render_metrics(rows, path: str, title: str | None = None) -> str:
    """Draw the three-panel metric summary for one experiment's rows."""
    aggregates = {"median": "-o", "mean": ":s"}
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    grid_label = rows[0].grid_label if rows else "grid"
    for ax, (metric, label) in zip(axes, _PANELS):
        for agg, style in aggregates.items():
            pts = sorted(
                (r.grid_value, getattr(r, metric)) for r in rows if r.seed == agg
            )
            if not pts:
                continue
            ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=agg, markersize=4)
        ax.set_xlabel(grid_label)
        ax.set_ylabel(label)
        if metric == "coverage":
            ax.axhline(0.95, color="gray", linewidth=0.8, linestyle="--")
        if metric == "var_ratio":
            ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    axes[0].legend(frameon=False, fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
