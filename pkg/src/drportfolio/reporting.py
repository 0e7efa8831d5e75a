"""Performance metrics and delimited report files.

Daily arithmetic mean, population standard deviation, annualized Sharpe
(factor ``sqrt(252)``), and rolling one-year Sharpe series, written as
``metrics.csv`` plus one ``rolling_<strategy>.csv`` per strategy with
undefined windows flagged rather than dropped.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import SeriesTooShort, ZeroVolatility

__all__ = [
    "ANNUALIZATION_DAYS",
    "MetricsRow",
    "RollingSeries",
    "summary_metrics",
    "rolling_sharpe",
    "write_report",
]

ANNUALIZATION_DAYS = 252
_VOL_TOL = 1e-14

_METRICS_COLUMNS = (
    "strategy",
    "start_date",
    "mean_daily",
    "std_daily",
    "sharpe_annualized",
    "costs",
)


@dataclass(frozen=True)
class MetricsRow:
    """One strategy's summary statistics over a test window."""

    strategy: str
    start_date: str
    mean_daily: float
    std_daily: float
    sharpe_annualized: float
    costs: bool


@dataclass(frozen=True)
class RollingSeries:
    """Rolling Sharpe values, one per window end, with undefined flags."""

    strategy: str
    dates: List[str]
    values: np.ndarray
    undefined: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.dates) == self.values.size == self.undefined.size):
            raise ValueError("dates, values, and flags must have equal length")


def _clean_returns(returns) -> np.ndarray:
    values = np.asarray(returns, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise ValueError("returns contain non-finite entries")
    return values


def summary_metrics(
    returns,
    strategy: str = "",
    start_date: str = "",
    costs: bool = False,
) -> MetricsRow:
    """Daily mean, population std, and annualized Sharpe of a series."""
    values = _clean_returns(returns)
    if values.size < 2:
        raise ValueError(f"need at least 2 returns, got {values.size}")
    mean = float(values.mean())
    std = float(values.std())
    if std <= _VOL_TOL * max(1.0, abs(mean)):
        raise ZeroVolatility(
            f"standard deviation {std:.3e} is numerically zero"
        )
    sharpe = math.sqrt(ANNUALIZATION_DAYS) * mean / std
    return MetricsRow(
        strategy=strategy,
        start_date=start_date,
        mean_daily=mean,
        std_daily=std,
        sharpe_annualized=sharpe,
        costs=costs,
    )


def rolling_sharpe(
    returns,
    window: int = ANNUALIZATION_DAYS,
    strategy: str = "",
    dates: Optional[Sequence] = None,
) -> RollingSeries:
    """Annualized Sharpe over every length-``window`` contiguous slice.

    Windows whose standard deviation is numerically zero carry a NaN
    value and a raised flag; they are kept in place so the series stays
    aligned with the window-end labels.
    """
    values = _clean_returns(returns)
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    if values.size < window:
        raise SeriesTooShort(
            f"{values.size} returns cannot fill a {window}-day window"
        )
    if dates is not None and len(dates) != values.size:
        raise ValueError(
            f"{len(dates)} dates do not label {values.size} returns"
        )
    sliding = np.lib.stride_tricks.sliding_window_view(values, window)
    means = sliding.mean(axis=1)
    stds = sliding.std(axis=1)
    undefined = stds <= _VOL_TOL * np.maximum(1.0, np.abs(means))
    with np.errstate(divide="ignore", invalid="ignore"):
        sharpes = math.sqrt(ANNUALIZATION_DAYS) * means / stds
    sharpes = np.where(undefined, np.nan, sharpes)
    if dates is None:
        labels = [str(day) for day in range(window, values.size + 1)]
    else:
        labels = [str(label) for label in list(dates)[window - 1 :]]
    return RollingSeries(
        strategy=strategy,
        dates=labels,
        values=sharpes,
        undefined=undefined,
    )


def _slug(name: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")
    return slug or "unnamed"


def write_report(
    rows: Sequence[MetricsRow],
    series: Sequence[RollingSeries],
    out_dir,
) -> List[Path]:
    """Write ``metrics.csv`` and per-strategy rolling CSVs; return paths.

    Floats are fixed to nine decimal places; parsing them back
    reproduces the values to 1e-9.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    metrics_path = out / "metrics.csv"
    with metrics_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.strategy,
                    row.start_date,
                    f"{row.mean_daily:.9f}",
                    f"{row.std_daily:.9f}",
                    f"{row.sharpe_annualized:.9f}",
                    "true" if row.costs else "false",
                ]
            )
    written.append(metrics_path)

    for entry in series:
        path = out / f"rolling_{_slug(entry.strategy)}.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("date", "value", "flag"))
            for label, value, flag in zip(entry.dates, entry.values, entry.undefined):
                writer.writerow(
                    [
                        label,
                        "nan" if np.isnan(value) else f"{value:.9f}",
                        "true" if flag else "false",
                    ]
                )
        written.append(path)
    return written
