"""Shared test helpers: synthetic panels and path samples."""

import datetime as dt

import numpy as np
import pytest

from drportfolio.market_data import PathSamples, ReturnsPanel


def make_returns_panel(rng, rows, n_assets, scale=0.01, drift=0.0002):
    dates = [dt.date(2018, 1, 1) + dt.timedelta(days=k) for k in range(rows)]
    rets = drift + scale * rng.standard_normal((rows, n_assets))
    return ReturnsPanel(dates=dates, tickers=[f"A{i}" for i in range(n_assets)], returns=rets)


def make_path_samples(rng, count, n_assets, horizon, scale=0.01, drift=0.0002):
    flat = drift + scale * rng.standard_normal((count, n_assets * horizon))
    return PathSamples(
        samples=flat,
        n_assets=n_assets,
        horizon=horizon,
        mode="sliding",
        start_rows=np.arange(count),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
