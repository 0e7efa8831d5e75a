"""Staggered-subportfolio backtesting with drift-triggered rebalancing.

The multiperiod strategy is deployed as ``T`` naive subportfolios, each
following the same horizon-``T`` weight functions but started one day
apart, so a fresh estimation cycle begins every day and the portfolio
never jumps when prices are flat.  The held position drifts
multiplicatively with returns and is realigned to the day's target only
when some asset's relative deviation exceeds a threshold; realignments
pay linear transaction costs when enabled.

Wealth is accounted separately from weights: held weights are fractions
of current wealth (scale-free drift test), wealth compounds by the held
portfolio's daily return, and costs are deducted on the rebalance day
after that day's return.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .encoding import MonomialEncoding, strategy_weights
from .errors import DivisionByZeroWeight, WindowExhausted
from .market_data import ReturnsPanel

__all__ = [
    "TargetSchedule",
    "BacktestConfig",
    "RebalanceEvent",
    "BacktestReport",
    "initial_position",
    "target_schedule",
    "transaction_cost",
    "run_backtest",
]

_ZERO_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class TargetSchedule:
    """Per-day target weights plus the position held before day one.

    ``targets[s - 1]`` is the target for day ``s`` (1-based); it is the
    average of the ``T`` staggered subportfolio weights, where a
    subportfolio contributes zero before its start day.
    """

    periods: int
    targets: np.ndarray
    initial: np.ndarray

    def __post_init__(self) -> None:
        targets = np.asarray(self.targets, dtype=float)
        initial = np.asarray(self.initial, dtype=float)
        if targets.ndim != 2:
            raise ValueError(f"targets must be 2-D, got shape {targets.shape}")
        if initial.shape != (targets.shape[1],):
            raise ValueError(
                f"initial shape {initial.shape} does not match "
                f"{targets.shape[1]} assets"
            )
        if self.periods < 1:
            raise ValueError(f"periods must be >= 1, got {self.periods}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "initial", initial)

    @property
    def n_days(self) -> int:
        return self.targets.shape[0]

    @property
    def n_assets(self) -> int:
        return self.targets.shape[1]


@dataclass(frozen=True)
class BacktestConfig:
    """Rebalancing and cost parameters.

    ``threshold`` is the relative-deviation trigger (``math.inf``
    disables trading after day one); ``cost_rate`` is the linear cost
    per unit of traded notional, charged only when ``costs_enabled``.
    ``strategy`` and ``periods`` are free-form metadata echoed into
    reports by the pipeline.
    """

    threshold: float = 0.05
    cost_rate: float = 0.002
    costs_enabled: bool = True
    strategy: str = ""
    periods: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.cost_rate < 0:
            raise ValueError(f"cost_rate must be >= 0, got {self.cost_rate}")
        if self.periods is not None and self.periods < 1:
            raise ValueError(f"periods must be >= 1, got {self.periods}")


@dataclass(frozen=True)
class RebalanceEvent:
    """One realignment: 1-based day, event ordinal, traded notional, cost."""

    day: int
    index: int
    notional: float
    cost: float


@dataclass
class BacktestReport:
    """Daily ledger of a single strategy run.

    ``pre_trade_weights[s - 1]`` is the drifted position at the start of
    day ``s`` before any realignment; ``daily_returns`` are wealth
    relatives net of costs; ``cumulative_costs`` is nondecreasing.
    """

    days: np.ndarray
    dates: Optional[List]
    wealth: np.ndarray
    daily_returns: np.ndarray
    pre_trade_weights: np.ndarray
    cumulative_costs: np.ndarray
    events: List[RebalanceEvent] = field(default_factory=list)
    warmup: int = 1

    @property
    def n_days(self) -> int:
        return self.wealth.shape[0]

    @property
    def total_cost(self) -> float:
        return float(self.cumulative_costs[-1]) if self.n_days else 0.0


def initial_position(coefficients, enc: MonomialEncoding) -> np.ndarray:
    """Average of the constant-term weight vectors across periods.

    With no history realized, every subportfolio holds its period's
    constant term, so the day-one position is their mean.
    """
    n, T = enc.n_assets, enc.horizon
    total = np.zeros(n)
    for t in range(1, T + 1):
        total += strategy_weights(enc, coefficients, np.zeros(((t - 1), n)), t)
    return total / T


def _panel_values(returns) -> np.ndarray:
    if isinstance(returns, ReturnsPanel):
        return returns.returns
    return np.asarray(returns, dtype=float)


def _panel_dates(returns):
    if isinstance(returns, ReturnsPanel):
        return list(returns.dates)
    return None


def target_schedule(strategy, returns, enc: Optional[MonomialEncoding] = None) -> TargetSchedule:
    """Per-day targets for a coefficient strategy or static weights.

    With ``enc`` given, ``strategy`` is a flat coefficient vector and
    day ``s = kT + t + (i - 1)`` receives ``(1/T) sum_i`` of
    subportfolio ``i``'s period-``t`` weights, evaluated on that
    subportfolio's own return window and zeroed before its start day
    (``i > s``).  Without ``enc``, ``strategy`` is a static weight
    vector repeated every day (the single-period degenerate case).
    """
    values = _panel_values(returns)
    if values.ndim != 2:
        raise ValueError(f"returns must be 2-D, got shape {values.shape}")
    n_days, n = values.shape

    if enc is None:
        weights = np.asarray(strategy, dtype=float)
        if weights.shape != (n,):
            raise ValueError(
                f"static weights shape {weights.shape} does not match {n} assets"
            )
        return TargetSchedule(
            periods=1,
            targets=np.tile(weights, (n_days, 1)),
            initial=weights.copy(),
        )

    T = enc.horizon
    if enc.n_assets != n:
        raise ValueError(
            f"encoding has {enc.n_assets} assets but returns have {n}"
        )
    if n_days < T:
        raise WindowExhausted(
            f"{n_days} return rows cannot complete a horizon-{T} cycle"
        )
    coefficients = np.asarray(strategy, dtype=float)
    targets = np.zeros((n_days, n))
    for s in range(1, n_days + 1):
        acc = np.zeros(n)
        for i in range(1, min(T, s) + 1):
            t = (s - i) % T + 1
            k = (s - i) // T
            start = k * T + i - 1
            history = values[start : start + t - 1]
            acc += strategy_weights(enc, coefficients, history, t)
        targets[s - 1] = acc / T
    return TargetSchedule(
        periods=T,
        targets=targets,
        initial=initial_position(coefficients, enc),
    )


def transaction_cost(pre, post, rate: float) -> float:
    """Linear cost of moving position values ``pre`` to ``post``."""
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    return rate * float(np.abs(pre - post).sum())


def _deviation_trigger(held, target, threshold, allow_fallback):
    """Max per-asset relative drift test with absolute fallback at zero."""
    diff = np.abs(held - target)
    small = np.abs(held) < _ZERO_WEIGHT_TOL
    if np.any(small) and not allow_fallback:
        bad = int(np.flatnonzero(small)[0])
        raise DivisionByZeroWeight(
            f"drifted weight of asset {bad} is zero in the relative test"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(small, diff, diff / np.abs(held))
    return bool(np.max(rel) > threshold) if rel.size else False


def run_backtest(
    schedule: TargetSchedule,
    returns,
    cfg: BacktestConfig,
    zero_weight_fallback: bool = True,
) -> BacktestReport:
    """Drift, test, realign, and account wealth day by day.

    Day ``s``: the position drifted through day ``s - 1`` is compared
    with the day's target (from day two on); if some asset's relative
    deviation exceeds the threshold the position is set to the target
    and the trade's linear cost is charged.  The day's return then
    accrues on the held position, wealth is reduced by any charged
    cost, and the position drifts with the day's asset returns.
    """
    values = _panel_values(returns)
    n_days, n = values.shape
    if schedule.targets.shape != (n_days, n):
        raise ValueError(
            f"schedule shape {schedule.targets.shape} does not match "
            f"returns shape {values.shape}"
        )

    held = schedule.initial.astype(float).copy()
    wealth = 1.0
    out_wealth = np.zeros(n_days)
    out_returns = np.zeros(n_days)
    out_weights = np.zeros((n_days, n))
    out_costs = np.zeros(n_days)
    events: List[RebalanceEvent] = []
    cumulative = 0.0

    for s in range(1, n_days + 1):
        day_returns = values[s - 1]
        target = schedule.targets[s - 1]
        out_weights[s - 1] = held

        cost = 0.0
        if s >= 2 and _deviation_trigger(
            held, target, cfg.threshold, zero_weight_fallback
        ):
            if cfg.costs_enabled:
                cost = transaction_cost(held * wealth, target * wealth, cfg.cost_rate)
            events.append(
                RebalanceEvent(
                    day=s,
                    index=len(events) + 1,
                    notional=wealth * float(np.abs(held - target).sum()),
                    cost=cost,
                )
            )
            held = target.copy()

        growth = 1.0 + float(held @ day_returns)
        new_wealth = wealth * growth - cost
        cumulative += cost
        out_costs[s - 1] = cumulative
        out_wealth[s - 1] = new_wealth
        out_returns[s - 1] = new_wealth / wealth - 1.0
        wealth = new_wealth
        if abs(growth) < _ZERO_WEIGHT_TOL:
            raise DivisionByZeroWeight(
                f"portfolio lost its full value on day {s}; weights undefined"
            )
        held = held * (1.0 + day_returns) / growth

    return BacktestReport(
        days=np.arange(1, n_days + 1),
        dates=_panel_dates(returns),
        wealth=out_wealth,
        daily_returns=out_returns,
        pre_trade_weights=out_weights,
        cumulative_costs=out_costs,
        events=events,
        warmup=schedule.periods,
    )
