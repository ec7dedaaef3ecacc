"""Matplotlib rendering of the accuracy/fairness trade-off panels."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "fairleak"

_COLORS = {
    "T-F-PR+F": "tab:orange",
    "ACC+F": "tab:green",
    "DI+ACC": "tab:purple",
}
_BASELINE_COLORS = {
    "T-F-PR": "tab:blue",
    "ACC": "tab:cyan",
    "H": "tab:gray",
}


def render_pareto_panel(
    diameter: float,
    panel_index: int,
    sweep_points: Mapping[str, Sequence[tuple[float, float]]],
    baseline_points: Mapping[str, tuple[float, float]],
    out_dir: str | Path,
) -> Path:
    """Scatter accuracy against disparate impact for one leak diameter.

    ``sweep_points`` maps a method name to (DI, ACC) pairs along its
    hyperparameter sweep; ``baseline_points`` maps a baseline name to its
    single (DI, ACC) cross. Returns the written SVG path.
    """
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for method, points in sweep_points.items():
        if not points:
            continue
        di = [p[0] for p in points]
        acc = [p[1] for p in points]
        ax.scatter(di, acc, s=18, alpha=0.8, label=method,
                   color=_COLORS.get(method, "tab:red"))
    for method, (di, acc) in baseline_points.items():
        ax.scatter([di], [acc], marker="x", s=90, linewidths=2.5,
                   color=_BASELINE_COLORS.get(method, "black"),
                   label=f"{method} (baseline)")
    ax.set_xlabel("disparate impact")
    ax.set_ylabel("accuracy")
    ax.set_title(f"leak diameter {diameter:g} m")
    ax.set_xlim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    out_path = Path(out_dir) / f"pareto_d{panel_index}.svg"
    fig.savefig(out_path, metadata={"Date": None})
    plt.close(fig)
    return out_path
