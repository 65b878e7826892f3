"""Figure rendering for the report path.

Renders one log-log figure per (metric, sweep axis) pair from a result CSV,
overlaying the predicted bound when every row carries one.  Files land next
to the delimited output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import ExperimentResult, _axis_series, _RATE_AXES


def render_figures(result: ExperimentResult, out_dir: str) -> list[str]:
    """Write PNG figures for every plottable metric/axis pair; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [r for r in result.rows if not r["metric"].startswith("error:")]
    paths = []
    for metric in sorted({r["metric"] for r in rows}):
        group = [r for r in rows if r["metric"] == metric]
        for axis in _RATE_AXES:
            series = _axis_series(group, axis)
            if series is None:
                continue
            xs, ys, preds = series
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.loglog(xs, ys, "o-", label="measured")
            if preds is not None:
                ax.loglog(xs, preds, "s--", label="predicted bound")
            ax.set_xlabel(axis)
            ax.set_ylabel(metric)
            ax.legend()
            ax.grid(True, which="both", alpha=0.3)
            fig.tight_layout()
            path = os.path.join(out_dir, f"{metric}_vs_{axis}.png")
            fig.savefig(path, dpi=120)
            plt.close(fig)
            paths.append(path)
    return paths
