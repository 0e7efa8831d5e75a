#!/usr/bin/env python3
"""Generate the bundled synthetic price panel.

A one-factor model with heterogeneous volatilities and small drifts:
low enough signal that mean forecasts are hard, enough volatility
spread that variance-aware strategies can differentiate themselves.
Writes an ISO-dated CSV price panel compatible with the loader.
"""

import argparse
import csv
import datetime as dt
from pathlib import Path

import numpy as np


def business_days(start: dt.date, count: int):
    """First ``count`` Monday-to-Friday dates from ``start`` on."""
    days = []
    current = start
    while len(days) < count:
        if current.weekday() < 5:
            days.append(current)
        current += dt.timedelta(days=1)
    return days


def synthetic_returns(n_assets: int, n_days: int, seed: int) -> np.ndarray:
    """Daily simple returns from a one-factor model."""
    rng = np.random.default_rng(seed)
    drift = rng.uniform(0.0, 4e-4, size=n_assets)
    beta = rng.uniform(0.3, 1.3, size=n_assets)
    idio_vol = rng.uniform(0.004, 0.022, size=n_assets)
    # Pin a distinctly quiet asset and a distinctly noisy one so
    # variance-sensitive strategies have something to choose between.
    idio_vol[0], beta[0] = 0.003, 0.25
    idio_vol[-1], beta[-1] = 0.025, 1.35
    factor = rng.normal(0.0, 0.009, size=n_days)
    noise = rng.normal(0.0, 1.0, size=(n_days, n_assets))
    return drift + factor[:, None] * beta + noise * idio_vol


def write_prices(path: Path, returns: np.ndarray, start: dt.date) -> None:
    n_days, n_assets = returns.shape
    prices = 100.0 * np.cumprod(1.0 + np.vstack([np.zeros(n_assets), returns]), axis=0)
    dates = business_days(start, n_days + 1)
    tickers = [f"AST{i:02d}" for i in range(1, n_assets + 1)]
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date"] + tickers)
        for date, row in zip(dates, prices):
            writer.writerow([date.isoformat()] + [f"{p:.10f}" for p in row])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synthetic_prices.csv")
    parser.add_argument("--assets", type=int, default=10)
    parser.add_argument("--days", type=int, default=600, help="number of return days")
    parser.add_argument("--seed", type=int, default=20240901)
    parser.add_argument("--start", default="2018-01-02")
    args = parser.parse_args()

    returns = synthetic_returns(args.assets, args.days, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_prices(out, returns, dt.date.fromisoformat(args.start))
    print(f"wrote {out} ({args.days + 1} price rows, {args.assets} assets)")


if __name__ == "__main__":
    main()
