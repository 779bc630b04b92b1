"""SVG learning-curve panels rebuilt from per-seed CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import load_cell_records  # noqa: E402

COLORS = {"rpi_dqn": "tab:red", "dqn": "tab:blue", "ddqn": "tab:green",
          "rpi_ddpg": "tab:red", "ddpg": "tab:blue", "td3": "tab:purple"}


def curve_stats(records):
    """Per-step (steps, return mean, return std, critic mean) across seeds."""
    n = min(len(r.points) for r in records)
    steps = np.array([p.training_step for p in records[0].points[:n]])
    ret = np.array([[p.mc_return_discounted for p in r.points[:n]] for r in records])
    est = np.array([[p.critic_estimate for p in r.points[:n]] for r in records])
    return steps, ret.mean(axis=0), ret.std(axis=0), est.mean(axis=0)


def _panel_layout(columns: list[str]) -> tuple[int, int, dict[str, tuple[int, int]]]:
    """Variants go in a (x0.5 row, x2 row) by parameter grid; architectures in one row."""
    if columns and all(" x" in c for c in columns):
        params = list(dict.fromkeys(c.split(" x")[0] for c in columns))
        factors = sorted({float(c.split(" x")[1]) for c in columns})
        pos = {c: (factors.index(float(c.split(" x")[1])), params.index(c.split(" x")[0]))
               for c in columns}
        return len(factors), len(params), pos
    return 1, max(len(columns), 1), {c: (0, i) for i, c in enumerate(columns)}


def emit_plots(out_dir: str | Path, filename: str = "curves.svg",
               max_return: float | None = None) -> Path:
    """One panel per column (architecture or variant); one line pair per algorithm.

    Solid: mean discounted return, dashed: mean critic estimate, band: +-1 std
    of the return across seeds.
    """
    out = Path(out_dir)
    cells: dict[str, dict[str, Path]] = {}
    for cell_dir in sorted((out / "cells").iterdir()) if (out / "cells").exists() else []:
        algo, _, column = cell_dir.name.partition("__")
        if "-x" in column:
            p, _, f = column.partition("-x")
            column = f"{p} x{float(f):g}"
        cells.setdefault(column, {})[algo] = cell_dir
    columns = list(cells)
    nrows, ncols, pos = _panel_layout(columns)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.6 * nrows), squeeze=False)
    for column in columns:
        ax = axes[pos[column]]
        ax.set_title(column, fontsize=9)
        drawn = False
        for algo, cell_dir in sorted(cells[column].items()):
            records = load_cell_records(cell_dir)
            if not records:
                continue
            steps, mean, std, est = curve_stats(records)
            color = COLORS.get(algo)
            ax.plot(steps, mean, "-", color=color, label=algo, lw=1.2)
            ax.plot(steps, est, "--", color=color, lw=1.0)
            ax.fill_between(steps, mean - std, mean + std, color=color, alpha=0.2, lw=0)
            drawn = True
        if not drawn:
            ax.text(0.5, 0.5, "missing", ha="center", va="center", transform=ax.transAxes)
        if max_return is not None:
            ax.axhline(max_return, color="gray", lw=0.6, ls=":")
        ax.set_xlabel("training steps", fontsize=8)
        ax.set_ylabel("discounted return", fontsize=8)
        ax.tick_params(labelsize=7)
    for ax in axes.flat:
        if not ax.has_data() and not ax.texts:
            ax.set_visible(False)
    handles, labels = axes.flat[0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="upper center", ncol=len(labels), fontsize=8)
    fig.tight_layout(rect=(0, 0, 1, 0.92))
    plot_dir = out / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    path = plot_dir / filename
    with matplotlib.rc_context({"svg.hashsalt": "reliable-pi"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
