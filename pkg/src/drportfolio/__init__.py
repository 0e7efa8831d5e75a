"""Distributionally robust multiperiod mean-variance portfolio selection.

Pipeline: price CSVs -> return panels -> monomial path features ->
data-driven ambiguity-radius calibration -> worst-case variance
minimization -> staggered-deployment backtest -> metrics and reports.
"""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    RebalanceEvent,
    TargetSchedule,
    initial_position,
    run_backtest,
    target_schedule,
    transaction_cost,
)
from .baselines import (
    SinglePeriodMoments,
    equal_weighted,
    markowitz,
    robust_nc,
    robust_sp,
    robust_um,
    single_period_moments,
)
from .calibration import (
    CalibrationResult,
    EmpiricalMoments,
    NonRobustSolution,
    calibrate,
    calibrate_alpha_bar,
    calibrate_delta,
    default_target_mean,
    empirical_moments,
    solve_nonrobust,
)
from .cli import cli_main
from .config import DEFAULTS, load_config
from .encoding import (
    MonomialEncoding,
    build_encoding,
    flat_index,
    monomial_vector,
    predictability_mask,
    strategy_weights,
)
from .errors import PortfolioError
from .market_data import (
    PathSamples,
    PricePanel,
    ReturnsPanel,
    build_path_samples,
    compute_returns,
    load_prices,
)
from .reporting import (
    MetricsRow,
    RollingSeries,
    rolling_sharpe,
    summary_metrics,
    write_report,
)
from .robust_optimizer import (
    RobustProblem,
    RobustSolution,
    dual_objective,
    primal_inner_value,
    reduce_zero_components,
    solve_robust,
    worst_case_mean,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # market data
    "PricePanel",
    "ReturnsPanel",
    "PathSamples",
    "load_prices",
    "compute_returns",
    "build_path_samples",
    # encoding
    "MonomialEncoding",
    "build_encoding",
    "flat_index",
    "monomial_vector",
    "predictability_mask",
    "strategy_weights",
    # calibration
    "EmpiricalMoments",
    "NonRobustSolution",
    "CalibrationResult",
    "empirical_moments",
    "solve_nonrobust",
    "calibrate_delta",
    "calibrate_alpha_bar",
    "calibrate",
    "default_target_mean",
    # robust optimizer
    "RobustProblem",
    "RobustSolution",
    "worst_case_mean",
    "dual_objective",
    "primal_inner_value",
    "reduce_zero_components",
    "solve_robust",
    # baselines
    "SinglePeriodMoments",
    "single_period_moments",
    "equal_weighted",
    "markowitz",
    "robust_um",
    "robust_nc",
    "robust_sp",
    # backtest
    "TargetSchedule",
    "BacktestConfig",
    "BacktestReport",
    "RebalanceEvent",
    "initial_position",
    "target_schedule",
    "transaction_cost",
    "run_backtest",
    # reporting
    "MetricsRow",
    "RollingSeries",
    "summary_metrics",
    "rolling_sharpe",
    "write_report",
    # config / CLI
    "DEFAULTS",
    "load_config",
    "cli_main",
    # errors
    "PortfolioError",
]
