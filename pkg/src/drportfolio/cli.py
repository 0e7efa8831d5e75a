"""Command-line interface: calibrate, optimize, backtest, compare, report.

All parameters come from a flat key-value config file plus ``--set``
overrides; the single ``seed`` key drives every Monte-Carlo step.
Validation problems exit with status 1 and a message naming the
offending config key; solver non-convergence exits with status 2.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backtest import (
    BacktestConfig,
    BacktestReport,
    TargetSchedule,
    run_backtest,
    target_schedule,
)
from .baselines import (
    equal_weighted,
    markowitz,
    robust_nc,
    robust_sp,
    robust_um,
    single_period_moments,
)
from .calibration import CalibrationResult, calibrate, empirical_moments
from .config import load_config
from .encoding import MonomialEncoding, build_encoding
from .errors import (
    ConfigError,
    HorizonTooLong,
    NonConvergence,
    PortfolioError,
    SeriesTooShort,
    WindowExhausted,
)
from .figures import render_figures
from .market_data import ReturnsPanel, build_path_samples, compute_returns, load_prices
from .reporting import MetricsRow, RollingSeries, rolling_sharpe, summary_metrics, write_report
from .robust_optimizer import RobustProblem, RobustSolution, solve_robust

__all__ = ["cli_main"]


# --------------------------------------------------------------- data loading


def _load_returns(cfg) -> ReturnsPanel:
    path = cfg["data.path"]
    if path is None:
        raise ConfigError("data.path", "no input file configured")
    if not Path(path).is_file():
        raise ConfigError("data.path", f"input file not found: {path}")
    try:
        panel = load_prices(path)
    except PortfolioError as exc:
        raise ConfigError("data.path", str(exc)) from exc
    try:
        return compute_returns(panel)
    except PortfolioError as exc:
        raise ConfigError("data.path", str(exc)) from exc


def _slice_panel(panel: ReturnsPanel, lo: int, hi: int) -> ReturnsPanel:
    return ReturnsPanel(
        dates=list(panel.dates[lo:hi]),
        tickers=panel.tickers,
        returns=panel.returns[lo:hi],
    )


def _split_windows(
    panel: ReturnsPanel, start: int, cfg
) -> Tuple[ReturnsPanel, ReturnsPanel]:
    """Estimation rows [start, start+window) and the following test rows."""
    total = panel.returns.shape[0]
    window = cfg["window.days"]
    if start + window > total:
        raise ConfigError(
            "window.days",
            f"estimation window [{start}, {start + window}) needs more than "
            f"the {total} available return rows (check start.days too)",
        )
    test_lo = start + window
    test_hi = total if cfg["test.days"] == 0 else test_lo + cfg["test.days"]
    if test_hi > total:
        raise ConfigError(
            "test.days",
            f"test window [{test_lo}, {test_hi}) exceeds {total} return rows",
        )
    if test_hi - test_lo < 2:
        raise ConfigError(
            "test.days",
            f"test window [{test_lo}, {test_hi}) has fewer than 2 days",
        )
    return _slice_panel(panel, start, test_lo), _slice_panel(panel, test_lo, test_hi)


# ---------------------------------------------------------- strategy building


def _robust_horizon(token: str, cfg) -> int:
    suffix = token[len("robust") :]
    horizon = cfg["horizon.T"] if not suffix else int(suffix)
    if horizon < 1:
        raise ConfigError("strategy.list", f"robust horizon must be >= 1, got {token!r}")
    return horizon


def _calibrate_panel(cfg, est: ReturnsPanel, horizon: int) -> CalibrationResult:
    try:
        return calibrate(
            est,
            horizon,
            order=cfg["order"],
            mode=cfg["paths.mode"],
            target_mean=cfg["target.mean"],
            delta0=cfg["delta0"],
            mc_draws=cfg["mc.draws"],
            seed=cfg["seed"],
        )
    except HorizonTooLong as exc:
        raise ConfigError("horizon.T", str(exc)) from exc


def _solve_robust_strategy(
    cfg, est: ReturnsPanel, horizon: int
) -> Tuple[RobustSolution, MonomialEncoding, float, float]:
    enc = build_encoding(est.returns.shape[1], horizon, cfg["order"])
    try:
        samples = build_path_samples(est, horizon, cfg["paths.mode"])
    except HorizonTooLong as exc:
        raise ConfigError("horizon.T", str(exc)) from exc
    moments = empirical_moments(samples, enc)
    radius = cfg["radius.value"]
    floor = cfg["floor.value"]
    if radius is None or floor is None:
        result = _calibrate_panel(cfg, est, horizon)
        radius = result.radius if radius is None else radius
        floor = result.return_floor if floor is None else floor
    problem = RobustProblem(
        encoding=enc,
        moments=moments,
        radius=radius,
        return_floor=floor,
        budget_mode=cfg["budget.mode"],
    )
    solution = solve_robust(problem, max_iter=cfg["solver.max_iter"])
    return solution, enc, radius, floor


def _build_schedule(token: str, cfg, est: ReturnsPanel, test: ReturnsPanel) -> TargetSchedule:
    values = est.returns
    n = values.shape[1]
    if token == "equal":
        return target_schedule(equal_weighted(n), test)
    if values.shape[0] < 2:
        raise ConfigError(
            "window.days",
            f"strategy {token!r} needs at least 2 estimation rows, got {values.shape[0]}",
        )
    if token in ("markowitz", "um", "nc", "sp"):
        mom = single_period_moments(values)
        if token == "markowitz":
            weights = markowitz(mom, gamma=cfg["strategy.gamma"])
        elif token == "um":
            weights = robust_um(mom, gamma=cfg["strategy.gamma"], delta_um=cfg["strategy.um_delta"])
        elif token == "nc":
            weights = robust_nc(mom, lam_nc=cfg["strategy.nc_lambda"], alpha_nc=cfg["strategy.nc_alpha"])
        else:
            weights = robust_sp(mom, tau=cfg["strategy.sp_tau"])
        return target_schedule(weights, test)
    solution, enc, _, _ = _solve_robust_strategy(cfg, est, _robust_horizon(token, cfg))
    try:
        return target_schedule(solution.coefficients, test, enc=enc)
    except WindowExhausted as exc:
        raise ConfigError("test.days", str(exc)) from exc


def _run_strategy(token: str, cfg, est: ReturnsPanel, test: ReturnsPanel) -> BacktestReport:
    schedule = _build_schedule(token, cfg, est, test)
    bt_cfg = BacktestConfig(
        threshold=cfg["rebalance.threshold"],
        cost_rate=cfg["costs.rate"],
        costs_enabled=cfg["costs.enabled"],
        strategy=token,
        periods=schedule.periods,
    )
    return run_backtest(schedule, test, bt_cfg)


# --------------------------------------------------------------- file helpers


def _date_labels(report: BacktestReport) -> List[str]:
    if report.dates is not None:
        return [str(date) for date in report.dates]
    return [str(day) for day in report.days]


def _write_returns_file(path: Path, report: BacktestReport, costs: bool) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("date", "value", "costs"))
        flag = "true" if costs else "false"
        for label, value in zip(_date_labels(report), report.daily_returns):
            writer.writerow((label, f"{value:.12e}", flag))


def _write_ledger(out: Path, report: BacktestReport) -> None:
    with (out / "ledger.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("day", "date", "wealth", "daily_return", "cumulative_cost"))
        for day, label, wealth, ret, cost in zip(
            report.days,
            _date_labels(report),
            report.wealth,
            report.daily_returns,
            report.cumulative_costs,
        ):
            writer.writerow((day, label, f"{wealth:.12e}", f"{ret:.12e}", f"{cost:.12e}"))
    with (out / "events.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("day", "index", "notional", "cost"))
        for event in report.events:
            writer.writerow(
                (event.day, event.index, f"{event.notional:.12e}", f"{event.cost:.12e}")
            )


def _write_key_values(path: Path, pairs) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("parameter", "value"))
        for key, value in pairs:
            writer.writerow((key, value))


def _write_coefficients(path: Path, coefficients: np.ndarray) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("index", "value"))
        for index, value in enumerate(np.asarray(coefficients, dtype=float), start=1):
            writer.writerow((index, f"{value:.17e}"))


def _out_dir(cfg) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metrics_and_rolling(
    label: str,
    report: BacktestReport,
    cfg,
) -> Tuple[MetricsRow, Optional[RollingSeries]]:
    labels = _date_labels(report)
    row = summary_metrics(
        report.daily_returns,
        strategy=label,
        start_date=labels[0],
        costs=cfg["costs.enabled"],
    )
    series = None
    if report.daily_returns.size >= cfg["report.window"]:
        series = rolling_sharpe(
            report.daily_returns,
            window=cfg["report.window"],
            strategy=label,
            dates=labels,
        )
    return row, series


# ----------------------------------------------------------------- subcommands


def _cmd_calibrate(cfg) -> int:
    panel = _load_returns(cfg)
    est, _ = _split_windows(panel, cfg["start.days"][0], cfg)
    result = _calibrate_panel(cfg, est, cfg["horizon.T"])
    out = _out_dir(cfg)
    _write_key_values(
        out / "calibration.csv",
        [
            ("radius", f"{result.radius:.17e}"),
            ("return_floor", f"{result.return_floor:.17e}"),
            ("target_mean", f"{result.target_mean:.17e}"),
            ("delta0", f"{result.delta0:.17e}"),
            ("s0", f"{result.s0:.17e}"),
            ("s0_prime", f"{result.s0_prime:.17e}"),
            ("seed", cfg["seed"]),
            ("mc_draws", cfg["mc.draws"]),
            ("horizon", cfg["horizon.T"]),
            ("order", cfg["order"]),
            ("estimation_days", est.returns.shape[0]),
            ("assets", est.returns.shape[1]),
        ],
    )
    _write_coefficients(out / "coefficients.csv", result.nonrobust.coefficients)
    print(f"radius {result.radius:.12e}")
    print(f"return_floor {result.return_floor:.12e}")
    print(f"target_mean {result.target_mean:.12e}")
    print(f"coefficients {out / 'coefficients.csv'}")
    return 0


def _cmd_optimize(cfg) -> int:
    panel = _load_returns(cfg)
    est, _ = _split_windows(panel, cfg["start.days"][0], cfg)
    solution, _, radius, floor = _solve_robust_strategy(cfg, est, cfg["horizon.T"])
    out = _out_dir(cfg)
    _write_key_values(
        out / "solution.csv",
        [
            ("value", f"{solution.value:.17e}"),
            ("worst_case_mean", f"{solution.worst_case_mean:.17e}"),
            ("radius", f"{radius:.17e}"),
            ("return_floor", f"{floor:.17e}"),
            ("iterations", solution.iterations),
            ("converged", str(solution.converged).lower()),
            ("budget_residual", f"{solution.budget_residual:.17e}"),
            ("gradient_norm", f"{solution.gradient_norm:.17e}"),
            ("floor_active", str(solution.return_floor_active).lower()),
        ],
    )
    _write_coefficients(out / "coefficients.csv", solution.coefficients)
    print(f"value {solution.value:.12e}")
    print(f"worst_case_mean {solution.worst_case_mean:.12e}")
    print(f"iterations {solution.iterations}")
    print(f"coefficients {out / 'coefficients.csv'}")
    return 0


def _cmd_backtest(cfg) -> int:
    panel = _load_returns(cfg)
    est, test = _split_windows(panel, cfg["start.days"][0], cfg)
    token = cfg["strategy.name"]
    report = _run_strategy(token, cfg, est, test)
    out = _out_dir(cfg)
    _write_ledger(out, report)
    _write_returns_file(out / f"returns_{token}.csv", report, cfg["costs.enabled"])
    row, series = _metrics_and_rolling(token, report, cfg)
    write_report([row], [series] if series else [], out)
    wealth = {token: (_date_labels(report), report.wealth)}
    render_figures(wealth, [series] if series else [], out)
    print(
        f"{row.strategy} start={row.start_date} mean={row.mean_daily:.9f} "
        f"std={row.std_daily:.9f} sharpe={row.sharpe_annualized:.6f} "
        f"final_wealth={report.wealth[-1]:.6f} rebalances={len(report.events)}"
    )
    return 0


def _cmd_compare(cfg) -> int:
    panel = _load_returns(cfg)
    out = _out_dir(cfg)
    starts = cfg["start.days"]
    rows: List[MetricsRow] = []
    series: List[RollingSeries] = []
    wealth: Dict[str, tuple] = {}
    for start in starts:
        est, test = _split_windows(panel, start, cfg)
        for token in cfg["strategy.list"]:
            label = token if len(starts) == 1 else f"{token}_s{start}"
            report = _run_strategy(token, cfg, est, test)
            row, rolling = _metrics_and_rolling(label, report, cfg)
            rows.append(row)
            if rolling is not None:
                series.append(rolling)
            wealth[label] = (_date_labels(report), report.wealth)
            _write_returns_file(out / f"returns_{label}.csv", report, cfg["costs.enabled"])
            print(
                f"{row.strategy} start={row.start_date} mean={row.mean_daily:.9f} "
                f"std={row.std_daily:.9f} sharpe={row.sharpe_annualized:.6f}"
            )
    paths = write_report(rows, series, out)
    paths += render_figures(wealth, series, out)
    print(f"report {paths[0]}")
    return 0


def _read_returns_file(path: Path) -> Tuple[List[str], np.ndarray, bool]:
    with path.open() as handle:
        records = list(csv.DictReader(handle))
    if not records:
        raise ConfigError("output.dir", f"{path} holds no return rows")
    try:
        labels = [record["date"] for record in records]
        values = np.array([float(record["value"]) for record in records])
        costs = records[0].get("costs", "false") == "true"
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("output.dir", f"{path} is not a returns file: {exc}") from exc
    return labels, values, costs


def _cmd_report(cfg) -> int:
    out = _out_dir(cfg)
    files = sorted(out.glob("returns_*.csv"))
    if not files:
        raise ConfigError("output.dir", f"no returns_*.csv files found in {out}")
    rows: List[MetricsRow] = []
    series: List[RollingSeries] = []
    wealth: Dict[str, tuple] = {}
    for path in files:
        label = path.stem[len("returns_") :]
        labels, values, costs = _read_returns_file(path)
        rows.append(
            summary_metrics(values, strategy=label, start_date=labels[0], costs=costs)
        )
        if values.size >= cfg["report.window"]:
            series.append(
                rolling_sharpe(values, window=cfg["report.window"], strategy=label, dates=labels)
            )
        wealth[label] = (labels, np.cumprod(1.0 + values))
    paths = write_report(rows, series, out)
    paths += render_figures(wealth, series, out)
    for row in rows:
        print(
            f"{row.strategy} start={row.start_date} mean={row.mean_daily:.9f} "
            f"std={row.std_daily:.9f} sharpe={row.sharpe_annualized:.6f}"
        )
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "optimize": _cmd_optimize,
    "backtest": _cmd_backtest,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drportfolio",
        description="Distributionally robust multiperiod portfolio tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("calibrate", "estimate the ambiguity radius and return floor from data"),
        ("optimize", "solve for robust strategy coefficients"),
        ("backtest", "run one strategy through the wealth simulator"),
        ("compare", "run every configured strategy and write combined metrics"),
        ("report", "recompute metrics and figures from saved return files"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", default=None, help="path to key = value config file")
        cmd.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
    return parser


def cli_main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonConvergence as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return 2
    except SeriesTooShort as exc:
        print(f"error: report.window: {exc}", file=sys.stderr)
        return 1
    except PortfolioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
