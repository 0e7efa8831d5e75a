"""Figure rendering for report output directories.

Renders the wealth curves and rolling-Sharpe series produced by the
backtest pipeline to PNG files next to the delimited report files.
Uses the non-interactive Agg backend so it works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .reporting import RollingSeries

__all__ = ["render_figures"]


def _date_axis(labels: Sequence[str]) -> np.ndarray:
    """Positions for string labels; matplotlib handles ticks from these."""
    return np.arange(len(labels))


def _thin_ticks(axis, labels: Sequence[str], max_ticks: int = 8) -> None:
    if not labels:
        return
    step = max(1, len(labels) // max_ticks)
    positions = np.arange(0, len(labels), step)
    axis.set_xticks(positions)
    axis.set_xticklabels([labels[i] for i in positions], rotation=30, ha="right")


def render_figures(
    wealth: Mapping[str, tuple],
    series: Sequence[RollingSeries],
    out_dir,
) -> List[Path]:
    """Write ``wealth.png`` and ``rolling_sharpe.png``; return the paths.

    ``wealth`` maps strategy name to ``(date_labels, wealth_values)``
    pairs covering the same test window; ``series`` holds rolling-Sharpe
    results.  Either input may be empty, in which case its figure is
    skipped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if wealth:
        fig, axis = plt.subplots(figsize=(9, 5))
        longest: Sequence[str] = []
        for name, (labels, values) in wealth.items():
            labels = [str(label) for label in labels]
            axis.plot(_date_axis(labels), np.asarray(values, dtype=float), label=name)
            if len(labels) > len(longest):
                longest = labels
        _thin_ticks(axis, longest)
        axis.set_ylabel("wealth (initial = 1)")
        axis.set_title("Backtest wealth")
        axis.legend(loc="best", fontsize="small")
        axis.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out / "wealth.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if series:
        fig, axis = plt.subplots(figsize=(9, 5))
        longest = []
        for entry in series:
            axis.plot(
                _date_axis(entry.dates),
                entry.values,
                label=entry.strategy,
            )
            if len(entry.dates) > len(longest):
                longest = list(entry.dates)
        _thin_ticks(axis, longest)
        axis.axhline(0.0, color="black", linewidth=0.8, alpha=0.5)
        axis.set_ylabel("annualized Sharpe")
        axis.set_title("Rolling one-year Sharpe")
        axis.legend(loc="best", fontsize="small")
        axis.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out / "rolling_sharpe.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written
