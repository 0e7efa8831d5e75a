"""Price panel ingestion and return-path sampling.

Input CSVs have a ``date`` column of ISO-8601 dates followed by one
column per ticker.  Prices become simple returns, and the return rows
are cut into fixed-length paths (sliding or disjoint windows) laid out
period-major with the asset index fastest, ready for the monomial
catalogue.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import (
    HorizonTooLong,
    MalformedFile,
    NonMonotoneDates,
    NonPositivePrice,
    TooFewRows,
)

__all__ = [
    "PricePanel",
    "ReturnsPanel",
    "PathSamples",
    "load_prices",
    "compute_returns",
    "build_path_samples",
]

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class PricePanel:
    """Validated price history: strictly increasing dates, positive prices."""

    dates: List[dt.date]
    tickers: List[str]
    prices: np.ndarray  # (rows, n_assets)


@dataclass(frozen=True)
class ReturnsPanel:
    """Simple returns; row ``k`` is dated by the later of its two prices."""

    dates: List[dt.date]
    tickers: List[str]
    returns: np.ndarray  # (rows, n_assets)


@dataclass(frozen=True)
class PathSamples:
    """Return paths flattened period-major with the asset index fastest."""

    samples: np.ndarray  # (count, horizon * n_assets)
    n_assets: int
    horizon: int
    mode: str
    start_rows: np.ndarray  # return-row index of each path's first period

    @property
    def count(self) -> int:
        return self.samples.shape[0]


def load_prices(path, policy: str = "drop") -> PricePanel:
    """Read a price CSV into a validated panel.

    Parameters
    ----------
    policy : str
        ``"drop"`` removes rows with any missing cell, ``"error"``
        raises :class:`MalformedFile` on the first one.
    """
    if policy not in ("drop", "error"):
        raise ValueError(f"policy must be 'drop' or 'error', got {policy!r}")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedFile(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise MalformedFile(f"{path}: empty file")

    header = [cell.strip() for cell in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise MalformedFile(f"{path}: header must be 'date,<ticker>,...', got {header}")
    tickers = header[1:]
    if len(set(tickers)) != len(tickers):
        raise MalformedFile(f"{path}: duplicate ticker columns")

    dates: List[dt.date] = []
    price_rows: List[List[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise MalformedFile(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        cells = [cell.strip() for cell in row]
        missing = any(cell.lower() in _MISSING_TOKENS for cell in cells)
        if missing:
            if policy == "error":
                raise MalformedFile(f"{path}:{lineno}: missing cell")
            continue
        try:
            date = dt.date.fromisoformat(cells[0])
        except ValueError as exc:
            raise MalformedFile(f"{path}:{lineno}: bad date {cells[0]!r}") from exc
        try:
            values = [float(cell) for cell in cells[1:]]
        except ValueError as exc:
            raise MalformedFile(f"{path}:{lineno}: non-numeric price") from exc
        dates.append(date)
        price_rows.append(values)

    if not price_rows:
        raise MalformedFile(f"{path}: no data rows")
    prices = np.asarray(price_rows, dtype=float)
    if not np.all(np.isfinite(prices)):
        raise MalformedFile(f"{path}: non-finite price")
    if np.any(prices <= 0):
        row, col = np.argwhere(prices <= 0)[0]
        raise NonPositivePrice(
            f"{path}: {tickers[col]} at {dates[row]} is {prices[row, col]}"
        )
    for k in range(1, len(dates)):
        if dates[k] <= dates[k - 1]:
            raise NonMonotoneDates(f"{path}: {dates[k]} follows {dates[k - 1]}")
    return PricePanel(dates=dates, tickers=list(tickers), prices=prices)


def compute_returns(panel: PricePanel) -> ReturnsPanel:
    """Simple returns ``S[k]/S[k-1] - 1`` between consecutive rows."""
    if panel.prices.shape[0] < 2:
        raise TooFewRows(f"need >= 2 price rows, got {panel.prices.shape[0]}")
    rets = panel.prices[1:] / panel.prices[:-1] - 1.0
    return ReturnsPanel(dates=panel.dates[1:], tickers=panel.tickers, returns=rets)


def build_path_samples(returns: ReturnsPanel, horizon: int, mode: str = "sliding") -> PathSamples:
    """Cut the return rows into length-``horizon`` paths.

    ``sliding`` keeps every window (``rows - horizon + 1`` samples,
    overlapping); ``disjoint`` keeps non-overlapping blocks from the
    first row on (``rows // horizon`` samples, any remainder at the tail
    is dropped).
    """
    if mode not in ("sliding", "disjoint"):
        raise ValueError(f"mode must be 'sliding' or 'disjoint', got {mode!r}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    rows, n = returns.returns.shape
    if horizon > rows:
        raise HorizonTooLong(f"horizon {horizon} exceeds {rows} return rows")
    if mode == "sliding":
        starts = np.arange(rows - horizon + 1)
    else:
        starts = np.arange(0, (rows // horizon) * horizon, horizon)
    samples = np.stack([returns.returns[s : s + horizon].ravel() for s in starts])
    return PathSamples(
        samples=samples,
        n_assets=n,
        horizon=horizon,
        mode=mode,
        start_rows=starts,
    )
