"""Data-driven calibration of the ambiguity radius and the return floor.

The high-dimensional single-period problem obtained from the monomial
catalogue is first solved without robustness through its first-order
(stationarity + budget + target-mean) linear system.  The optimizer and
its multipliers then feed a profile-function protocol that picks the
smallest Wasserstein radius covering the sampling error at a chosen
confidence, and the matching worst-case mean floor.

All moment computations run on the unmasked coordinates only; masked
coefficients are structurally zero and are restored after the solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .encoding import (
    MonomialEncoding,
    build_encoding,
    predictability_mask,
    unflatten,
)
from .errors import (
    DegenerateDenominator,
    SingularKKT,
    ZeroMultiplier,
    ZeroNorm,
    ZeroRadius,
)
from .market_data import PathSamples, ReturnsPanel, build_path_samples

__all__ = [
    "EmpiricalMoments",
    "NonRobustSolution",
    "CalibrationResult",
    "empirical_moments",
    "solve_nonrobust",
    "calibrate_delta",
    "calibrate_alpha_bar",
    "calibrate",
    "default_target_mean",
]

_COND_LIMIT = 1e12
_MC_CHUNK = 65536


@dataclass(frozen=True)
class EmpiricalMoments:
    """Sample moments of the monomial features.

    ``second_moment`` is the symmetrized average of outer products;
    ``variance`` subtracts the mean outer product (both population
    normalized, 1/N).
    """

    encoding: MonomialEncoding
    mean: np.ndarray
    second_moment: np.ndarray
    variance: np.ndarray
    count: int


@dataclass(frozen=True)
class NonRobustSolution:
    """Optimizer and multipliers of the first-order system."""

    coefficients: np.ndarray  # full-length, masked slots zero
    encoding: MonomialEncoding
    target_mean: float
    multiplier_mean: float  # multiplier of the target-mean constraint
    multiplier_budget: np.ndarray  # one per period
    kkt_residual: float
    condition_number: float


@dataclass(frozen=True)
class CalibrationResult:
    """Radius and floor produced by the profile-function protocol."""

    nonrobust: NonRobustSolution
    radius: float
    return_floor: float
    s0: float
    s0_prime: float
    var_h: np.ndarray  # covariance of the radius statistic (reduced coords)
    var_projection: float  # variance of the floor statistic
    delta0: float
    target_mean: float


def _monomial_matrix(samples: PathSamples, enc: MonomialEncoding) -> np.ndarray:
    """Stack the monomial features of every path, shape (count, dim)."""
    X = samples.samples
    count, width = X.shape
    if width != enc.linear_size:
        raise ValueError(f"paths of width {width} do not fit encoding n*T={enc.linear_size}")
    quad = (X[:, :, None] * X[:, None, :]).reshape(count, -1)
    blocks = [X, quad]
    if enc.order == 2:
        cubic = (X[:, :, None, None] * X[:, None, :, None] * X[:, None, None, :])
        blocks.append(cubic.reshape(count, -1))
    return np.concatenate(blocks, axis=1)


def empirical_moments(samples: PathSamples, enc: MonomialEncoding) -> EmpiricalMoments:
    """Mean, second moment and variance of the monomial features."""
    M = _monomial_matrix(samples, enc)
    count = M.shape[0]
    mean = M.mean(axis=0)
    second = M.T @ M / count
    second = 0.5 * (second + second.T)
    variance = second - np.outer(mean, mean)
    variance = 0.5 * (variance + variance.T)
    return EmpiricalMoments(
        encoding=enc, mean=mean, second_moment=second, variance=variance, count=count
    )


def _budget_rows(enc: MonomialEncoding, cols: np.ndarray) -> np.ndarray:
    """Per-period indicator rows selecting the linear-block slots, reduced."""
    n, T = enc.n_assets, enc.horizon
    rows = np.zeros((T, enc.dim))
    for t in range(T):
        rows[t, t * n : (t + 1) * n] = 1.0
    return rows[:, cols]


def _canonical_columns(enc: MonomialEncoding) -> np.ndarray:
    """Global indices of one representative per distinct unmasked monomial.

    Cubic entries are symmetric in their two past-return legs, so an
    unmasked slot and its leg-swapped twin carry the identical monomial;
    the sample second moment is then exactly singular.  Keeping one
    representative (coefficient mass assigned to it, twin left at zero)
    changes neither the objective nor any constraint.  Linear and
    unmasked quadratic slots are always their own representative.
    """
    keep = np.where(~predictability_mask(enc))[0]
    if enc.order < 2:
        return keep
    reps = []
    seen = set()
    cubic_off = enc.block_offset(3)
    for col in keep:
        if col < cubic_off:
            reps.append(col)
            continue
        idx = unflatten(enc, 3, col - cubic_off + 1)
        legs = tuple(
            sorted(
                [
                    (idx.first_asset, idx.first_period),
                    (idx.second_asset, idx.second_period),
                ]
            )
        )
        key = (idx.target_asset, idx.target_period, legs)
        if key in seen:
            continue
        seen.add(key)
        reps.append(col)
    return np.asarray(reps, dtype=int)


def solve_nonrobust(moments: EmpiricalMoments, target_mean: float) -> NonRobustSolution:
    """Solve the non-robust problem through its first-order linear system.

    Unknowns are the unmasked coefficients (one representative per
    distinct monomial, see :func:`_canonical_columns`), the target-mean
    multiplier and one budget multiplier per period:

    * stationarity: ``2 Sigma A - l0 mu - sum_t lt e_t = 0``
    * target mean:  ``mu . A = target_mean``
    * budget:       per-period linear-block coefficients sum to 1.

    Raises
    ------
    SingularKKT
        If the system is singular or its residual exceeds 1e-8.
    """
    enc = moments.encoding
    cols = _canonical_columns(enc)
    mu = moments.mean[cols]
    sigma = moments.second_moment[np.ix_(cols, cols)]
    budget = _budget_rows(enc, cols)
    m = mu.size
    T = enc.horizon

    size = m + 1 + T
    kkt = np.zeros((size, size))
    kkt[:m, :m] = 2.0 * sigma
    kkt[:m, m] = -mu
    kkt[:m, m + 1 :] = -budget.T
    kkt[m, :m] = mu
    kkt[m + 1 :, :m] = budget
    rhs = np.zeros(size)
    rhs[m] = target_mean
    rhs[m + 1 :] = 1.0

    cond = np.linalg.cond(kkt)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularKKT(
            f"first-order system condition number {cond:.3e} exceeds {_COND_LIMIT:.0e}",
            condition_number=cond,
        )
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKKT(f"first-order system is singular: {exc}",
                          condition_number=cond) from exc

    reduced = solution[:m]
    mult_mean = solution[m]
    mult_budget = solution[m + 1 :]
    residual = float(np.max(np.abs(kkt @ solution - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(solution))))
    if residual > 1e-8 * scale:
        raise SingularKKT(
            f"first-order residual {residual:.3e} too large (cond {cond:.3e})",
            condition_number=cond,
        )

    coefficients = np.zeros(enc.dim)
    coefficients[cols] = reduced
    return NonRobustSolution(
        coefficients=coefficients,
        encoding=enc,
        target_mean=float(target_mean),
        multiplier_mean=float(mult_mean),
        multiplier_budget=mult_budget,
        kkt_residual=residual,
        condition_number=float(cond),
    )


def _solve_spd(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Symmetric solve with a ridge fallback on bad conditioning."""
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        ridge = 1e-10 * np.trace(matrix) / matrix.shape[0]
        warnings.warn(
            f"feature second moment ill-conditioned (cond {cond:.3e}); "
            f"adding ridge {ridge:.3e} -- moment assumptions look strained",
            RuntimeWarning,
            stacklevel=3,
        )
        matrix = matrix + ridge * np.eye(matrix.shape[0])
    return scipy.linalg.solve(matrix, vector, assume_a="sym")


def _gaussian_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, negatives clamped."""
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def _delta_parts(samples, solution, moments):
    """Shared pieces of the radius statistic, on canonical coordinates."""
    enc = solution.encoding
    keep = ~predictability_mask(enc)
    cols = _canonical_columns(enc)
    M_full = _monomial_matrix(samples, enc)
    mult = solution.multiplier_mean
    if abs(mult) < 1e-12:
        raise ZeroMultiplier(
            f"target-mean multiplier {mult:.3e} is numerically zero"
        )
    # statistic h(m) = m + (2 / multiplier) * m (m . A)
    projected = M_full[:, keep] @ solution.coefficients[keep]
    M = M_full[:, cols]
    H = M + (2.0 / mult) * M * projected[:, None]
    Hc = H - H.mean(axis=0)
    var_h = Hc.T @ Hc / H.shape[0]

    mu = moments.mean[cols]
    sigma = moments.second_moment[np.ix_(cols, cols)]
    denom = 1.0 - float(mu @ _solve_spd(sigma, mu))
    if denom <= 1e-12:
        raise DegenerateDenominator(
            f"1 - mu' Sigma^-1 mu = {denom:.3e} is not positive"
        )
    return var_h, denom


def calibrate_delta(
    samples: PathSamples,
    solution: NonRobustSolution,
    moments: EmpiricalMoments,
    delta0: float = 0.05,
    mc_draws: int = 200_000,
    seed: int = 0,
) -> float:
    """Smallest Wasserstein radius covering sampling error at level 1 - delta0.

    Draws ``Z ~ N(0, var_h)``, takes the ``1 - delta0`` quantile of
    ``||Z||^2 / (4 (1 - mu' Sigma^-1 mu))`` and divides by the sample
    count.
    """
    if not 0.0 < delta0 < 1.0:
        raise ValueError(f"delta0 must be in (0, 1), got {delta0}")
    var_h, denom = _delta_parts(samples, solution, moments)
    root = _gaussian_sqrt(var_h)
    rng = np.random.default_rng(seed)
    norms = np.empty(mc_draws)
    done = 0
    while done < mc_draws:
        chunk = min(_MC_CHUNK, mc_draws - done)
        draws = rng.standard_normal((chunk, root.shape[1])) @ root.T
        norms[done : done + chunk] = np.einsum("ij,ij->i", draws, draws)
        done += chunk
    quantile = float(np.quantile(norms, 1.0 - delta0))
    return quantile / (4.0 * denom) / moments.count


def calibrate_alpha_bar(
    samples: PathSamples,
    solution: NonRobustSolution,
    moments: EmpiricalMoments,
    radius: float,
    delta0: float = 0.05,
    mc_draws: int = 200_000,
    seed: int = 0,
) -> float:
    """Largest worst-case mean floor supported at level 1 - delta0.

    With ``s0`` from the coverage condition on the projected-feature
    statistic and ``s0'`` from the non-robust optimizer itself, the floor
    is ``target - sqrt(radius) * ||A|| * max(s0, s0')``.
    """
    alpha, _, _, _ = _alpha_parts(samples, solution, moments, radius, delta0, mc_draws, seed)
    return alpha


def _alpha_parts(samples, solution, moments, radius, delta0, mc_draws, seed):
    if not 0.0 < delta0 < 1.0:
        raise ValueError(f"delta0 must be in (0, 1), got {delta0}")
    if radius <= 0.0:
        raise ZeroRadius(f"radius must be positive, got {radius}")
    enc = solution.encoding
    keep = ~predictability_mask(enc)
    coeffs = solution.coefficients[keep]
    norm = float(np.linalg.norm(coeffs))
    if norm < 1e-14:
        raise ZeroNorm("coefficient vector has zero norm")

    M = _monomial_matrix(samples, enc)[:, keep]
    projected = M @ coeffs / norm
    var_proj = float(projected.var())

    rng = np.random.default_rng(seed)
    draws = rng.standard_normal(mc_draws) * np.sqrt(var_proj)
    lower_q = float(np.quantile(draws, delta0))

    count = moments.count
    root_term = np.sqrt(radius) * norm
    s0 = 1.0 - lower_q / np.sqrt(radius * count)
    mean_at = float(moments.mean[keep] @ coeffs)
    s0_prime = (solution.target_mean + root_term - mean_at) / root_term
    alpha = solution.target_mean - root_term * max(s0, s0_prime)
    return alpha, s0, s0_prime, var_proj


def default_target_mean(returns: ReturnsPanel, horizon: int) -> float:
    """Horizon times the window's mean daily equal-weighted return."""
    return horizon * float(returns.returns.mean(axis=1).mean())


def calibrate(
    returns: ReturnsPanel,
    horizon: int,
    order: int = 1,
    mode: str = "sliding",
    target_mean: Optional[float] = None,
    delta0: float = 0.05,
    mc_draws: int = 200_000,
    seed: int = 0,
) -> CalibrationResult:
    """Full protocol: paths -> moments -> non-robust solve -> radius -> floor."""
    if target_mean is None:
        target_mean = default_target_mean(returns, horizon)
    enc = build_encoding(returns.returns.shape[1], horizon, order)
    samples = build_path_samples(returns, horizon, mode)
    moments = empirical_moments(samples, enc)
    solution = solve_nonrobust(moments, target_mean)
    radius = calibrate_delta(samples, solution, moments, delta0, mc_draws, seed)
    var_h, _ = _delta_parts(samples, solution, moments)
    alpha, s0, s0_prime, var_proj = _alpha_parts(
        samples, solution, moments, radius, delta0, mc_draws, seed
    )
    return CalibrationResult(
        nonrobust=solution,
        radius=radius,
        return_floor=alpha,
        s0=s0,
        s0_prime=s0_prime,
        var_h=var_h,
        var_projection=var_proj,
        delta0=delta0,
        target_mean=float(target_mean),
    )
