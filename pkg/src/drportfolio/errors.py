"""Exception types raised across the package.

Every error carries enough context in its message to identify the
offending input; solver errors attach diagnostics as attributes.
"""


class PortfolioError(Exception):
    """Base class for all package errors."""


# ---------------------------------------------------------------- market data


class MalformedFile(PortfolioError):
    """CSV could not be parsed into a price panel."""


class NonPositivePrice(PortfolioError):
    """A price cell is zero or negative."""


class NonMonotoneDates(PortfolioError):
    """Dates are not strictly increasing."""


class TooFewRows(PortfolioError):
    """Not enough rows to compute returns."""


class HorizonTooLong(PortfolioError):
    """Requested path length exceeds the available return rows."""


# ------------------------------------------------------------------- encoding


class HistoryTooShort(PortfolioError):
    """Fewer realized return rows than the evaluation period needs."""


# ---------------------------------------------------------------- calibration


class SingularKKT(PortfolioError):
    """First-order system is numerically singular.

    The estimated condition number is stored in ``condition_number``.
    """

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class ZeroMultiplier(PortfolioError):
    """Mean-constraint multiplier is zero; the radius statistic is undefined."""


class DegenerateDenominator(PortfolioError):
    """1 - mu' Sigma^-1 mu is not positive."""


class ZeroNorm(PortfolioError):
    """Coefficient vector has zero norm; the floor statistic is undefined."""


class ZeroRadius(PortfolioError):
    """Ambiguity radius must be positive for floor calibration."""


# ------------------------------------------------------------ robust optimizer


class NegativeQuadForm(PortfolioError):
    """Variance quadratic form is negative beyond numerical tolerance."""


class InfeasibleLambda(PortfolioError):
    """Pinned mean is outside the reachable band for this radius."""


class InfeasibleProblem(PortfolioError):
    """No budget-feasible strategy attains the required worst-case mean.

    Attributes ``best_floor`` (largest attainable worst-case mean) and
    ``required_floor`` are set.
    """

    def __init__(self, message, best_floor=None, required_floor=None):
        super().__init__(message)
        self.best_floor = best_floor
        self.required_floor = required_floor


class NonConvergence(PortfolioError):
    """Iteration budget exhausted while the incumbent was still moving.

    The best iterate found so far is stored in ``solution``.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


# ------------------------------------------------------------------ baselines


class SingularCovariance(PortfolioError):
    """Covariance matrix is singular even after ridge repair."""


class SingularAdjustedCovariance(PortfolioError):
    """Pattern-adjusted covariance system is numerically singular."""


class InfeasibleTarget(PortfolioError):
    """No fully invested portfolio reaches the requested robust return."""


class CycleDetected(UserWarning):
    """Fixed-point iteration cycled; the best-objective iterate was returned."""


# ------------------------------------------------------------------- backtest


class WindowExhausted(PortfolioError):
    """Return panel is shorter than the requested schedule."""


class DivisionByZeroWeight(PortfolioError):
    """Relative drift test hit a zero weight with the fallback disabled.

    By default near-zero drifted weights fall back to an absolute
    deviation test, so this is raised only when that fallback is
    switched off.
    """


# ------------------------------------------------------------------ reporting


class ZeroVolatility(PortfolioError):
    """Return series has zero standard deviation; ratios are undefined."""


class SeriesTooShort(PortfolioError):
    """Series is shorter than the rolling window."""


# ----------------------------------------------------------------- config/CLI


class ConfigError(PortfolioError):
    """A configuration value is missing, malformed, or out of range.

    ``key`` names the offending configuration key so command-line
    diagnostics can point at it.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
