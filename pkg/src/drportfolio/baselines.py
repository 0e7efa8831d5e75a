"""Single-period comparison strategies.

Five weight generators over one-period sample moments:

* ``equal_weighted``: 1/n in every asset.
* ``markowitz``: classical mean-variance trade-off.
* ``robust_um``: maxmin utility under an ellipsoidal mean-uncertainty
  set, equivalent to a mean-estimation-risk penalty.
* ``robust_nc``: norm-constrained minimum variance via a
  pattern-adjusted covariance fixed point.
* ``robust_sp``: sparse tracking of a target return under box
  mean-uncertainty, with an l1 penalty.

Each returns a plain weight vector (``numpy`` array) summing to 1;
short positions are allowed.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.stats

from .errors import (
    CycleDetected,
    InfeasibleTarget,
    NonConvergence,
    SingularAdjustedCovariance,
    SingularCovariance,
)

__all__ = [
    "SinglePeriodMoments",
    "single_period_moments",
    "equal_weighted",
    "markowitz",
    "robust_um",
    "robust_nc",
    "robust_sp",
]

_COND_LIMIT = 1e12
_SMOOTH_EPS = 1e-12

# A weight vector is a plain (n,) float array with entries summing to 1.
WeightVector = np.ndarray


@dataclass(frozen=True)
class SinglePeriodMoments:
    """One-period sample moments plus the raw return rows.

    ``covariance`` uses the population (1/d) normalization, matching
    the moment conventions used elsewhere in the package.
    """

    mean: np.ndarray  # (n,)
    covariance: np.ndarray  # (n, n)
    count: int  # d, number of return rows
    returns: np.ndarray  # (d, n) raw rows behind the moments

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"need at least 2 return rows, got {self.count}")

    @property
    def n_assets(self) -> int:
        return self.mean.size


def single_period_moments(returns) -> SinglePeriodMoments:
    """Build :class:`SinglePeriodMoments` from daily return rows.

    Accepts a ``(d, n)`` array or any object with a ``returns``
    attribute holding one (e.g. a returns panel).
    """
    matrix = np.asarray(getattr(returns, "returns", returns), dtype=float)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D return matrix, got shape {matrix.shape}")
    d = matrix.shape[0]
    if d < 2:
        raise ValueError(f"need at least 2 return rows, got {d}")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    cov = centered.T @ centered / d
    cov = 0.5 * (cov + cov.T)
    return SinglePeriodMoments(mean=mean, covariance=cov, count=d, returns=matrix)


def _repaired(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and, if ill-conditioned, add a trace-scaled ridge."""
    sym = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(sym)):
        return sym
    cond = np.linalg.cond(sym)
    if np.isfinite(cond) and cond <= _COND_LIMIT:
        return sym
    trace = float(np.trace(sym))
    ridge = 1e-10 * (trace / sym.shape[0] if trace > 0 else 1.0)
    return sym + ridge * np.eye(sym.shape[0])


def _bordered_solve(quad, lin, error_type):
    """Solve ``min (1/2) w'Qw - lin'w  s.t.  sum(w) = 1``.

    Stationarity plus the budget row form one symmetric linear system;
    ``error_type`` is raised when that system is numerically singular.
    """
    n = quad.shape[0]
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = quad
    system[:n, n] = 1.0
    system[n, :n] = 1.0
    rhs = np.concatenate([np.asarray(lin, dtype=float), [1.0]])
    if not np.all(np.isfinite(system)):
        raise error_type("quadratic coefficient matrix contains non-finite entries")
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise error_type(
            f"budget-constrained quadratic system is singular (cond={cond:.3e})"
        )
    return np.linalg.solve(system, rhs)[:n]


def equal_weighted(n_assets: int) -> np.ndarray:
    """Uniform 1/n weights."""
    if n_assets < 1:
        raise ValueError(f"need at least one asset, got {n_assets}")
    return np.full(n_assets, 1.0 / n_assets)


def markowitz(mom: SinglePeriodMoments, gamma: float = 4.0) -> np.ndarray:
    """Maximize ``w.mean - (gamma/2) w'Cov w`` over fully invested ``w``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    quad = gamma * _repaired(mom.covariance)
    return _bordered_solve(quad, mom.mean, SingularCovariance)


def robust_um(
    mom: SinglePeriodMoments,
    gamma: float = 4.0,
    delta_um: float = 1.96,
    max_iter: int = 500,
    tol: float = 1e-13,
) -> np.ndarray:
    """Mean-uncertainty maxmin weights.

    Maximizes ``w.mean - (gamma/2) w'Cov w - delta_um sqrt(w'Cmu w)``
    with ``Cmu = Cov / d`` (the estimation covariance of the mean),
    over fully invested ``w``.  Solved by iteratively replacing the
    square root with its tangent quadratic upper bound, each step a
    budget-constrained quadratic solve; the fixed point satisfies the
    exact first-order conditions.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if delta_um < 0:
        raise ValueError(f"delta_um must be >= 0, got {delta_um}")
    cov = _repaired(mom.covariance)
    cov_mu = cov / mom.count
    w = _bordered_solve(gamma * cov, mom.mean, SingularCovariance)
    for _ in range(max_iter):
        quad_mu = max(float(w @ cov_mu @ w), 0.0)
        weight = delta_um / math.sqrt(quad_mu + _SMOOTH_EPS**2)
        w_new = _bordered_solve(gamma * cov + weight * cov_mu, mom.mean, SingularCovariance)
        if float(np.linalg.norm(w_new - w)) <= tol * (1.0 + float(np.linalg.norm(w))):
            return w_new
        w = w_new
    raise NonConvergence(f"mean-uncertainty weights did not settle in {max_iter} iterations")


def _nc_pattern(w: np.ndarray):
    """Negativity indicator and rank-sign vector of a weight vector."""
    v = (w < 0).astype(float)
    ranks = scipy.stats.rankdata(np.abs(w), method="average")
    o = (ranks - 1.0) * np.sign(w)
    return v, o


def _nc_objective(cov: np.ndarray, w: np.ndarray, lam: float, alpha: float) -> float:
    """Norm-constrained objective with the vector's own pattern."""
    v, o = _nc_pattern(w)
    return float(w @ cov @ w - 2.0 * lam * (v @ w) + lam * alpha * (o @ w))


def _isotonic_nonincreasing(values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto nonincreasing sequences (pooled means)."""
    levels: list[float] = []
    counts: list[int] = []
    for value in values:
        level, count = float(value), 1
        while levels and levels[-1] < level:
            prev_level, prev_count = levels.pop(), counts.pop()
            level = (level * count + prev_level * prev_count) / (count + prev_count)
            count += prev_count
        levels.append(level)
        counts.append(count)
    return np.repeat(levels, counts)


def _prox_owl(u: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Proximal map of the ordered weighted l1 norm.

    ``thresholds`` must be nonincreasing; the map sorts magnitudes
    descending, subtracts the matching threshold, restores monotonicity
    by isotonic projection, clips at zero, and undoes the sort and
    signs.
    """
    magnitudes = np.abs(u)
    order = np.argsort(-magnitudes, kind="stable")
    shrunk = np.maximum(
        _isotonic_nonincreasing(magnitudes[order] - thresholds), 0.0
    )
    out = np.empty_like(magnitudes)
    out[order] = shrunk
    return np.sign(u) * out


def _owl_weights(n: int, lam: float, alpha: float) -> np.ndarray:
    """Descending per-rank weights of the objective's l1-type part."""
    return lam * alpha * np.arange(n - 1, -1, -1, dtype=float) + lam


def _owl_nc_objective(cov: np.ndarray, w: np.ndarray, lam: float, alpha: float) -> float:
    """Norm-constrained objective in ordered-weighted-l1 form.

    The pattern-adjusted quadratic evaluated with the vector's own
    pattern equals ``w'Kw - lam 1'w`` plus the ordered weighted l1 norm
    with weights ``lam alpha (n-k) + lam`` on the k-th largest
    magnitude; this form makes convexity explicit.
    """
    magnitudes = np.sort(np.abs(w))[::-1]
    penalty = float(_owl_weights(w.size, lam, alpha) @ magnitudes)
    return float(w @ cov @ w) - lam * float(w.sum()) + penalty


def _owl_polish(cov: np.ndarray, lam: float, alpha: float, start: np.ndarray):
    """Globally minimize the norm-constrained objective over the budget set.

    Three-operator splitting with the budget handled by projection, the
    ordered-weighted-l1 part by its proximal map, and the remaining
    smooth part by its gradient.
    """
    n = start.size
    lipschitz = max(2.0 * float(np.linalg.eigvalsh(cov)[-1]), 1e-12)
    # any step below 1/L converges; also keep the shrink thresholds at
    # weight scale so the certificate does not crawl when the
    # covariance is orders of magnitude smaller than the penalties
    step = min(1.0 / lipschitz, 1.0 / (1.0 + lam * (alpha * n + 1.0)))
    thresholds = step * _owl_weights(n, lam, alpha)
    lin = lam * np.ones(n)

    def project(z):
        return z - (z.sum() - 1.0) / n

    def shrink(u):
        return _prox_owl(u, thresholds)

    def smooth_grad(w):
        return 2.0 * (cov @ w) - lin

    point, _ = _davis_yin(
        project, shrink, smooth_grad, step, project(start), 200_000, 1e-13
    )
    return point


def robust_nc(
    mom: SinglePeriodMoments,
    lam_nc: float = 2.0,
    alpha_nc: float = 4.0,
    max_iter: int = 100,
) -> np.ndarray:
    """Norm-constrained minimum-variance weights.

    Fixed point of: derive the negativity indicator ``v`` and rank-sign
    vector ``o`` from the current weights, adjust the covariance by the
    symmetric rank-two terms ``-lam (v 1' + 1 v') + (lam alpha / 2)
    (o 1' + 1 o')``, and re-minimize ``w'Adj w`` over fully invested
    ``w``.  On the budget set the adjustments act as signed-l1 style
    penalties, so the self-consistent objective is convex; to keep the
    iteration from orbiting, each step moves toward the subproblem
    minimizer only as far as an exact line search on that objective
    allows.  If the pattern still fails to settle, a
    :class:`CycleDetected` warning is emitted and the lowest-objective
    point is returned, after a proximal polish of the convex
    ordered-weighted-l1 form adds the global minimizer to the
    candidates.
    """
    if lam_nc < 0 or alpha_nc < 0:
        raise ValueError("lam_nc and alpha_nc must be >= 0")
    cov = _repaired(mom.covariance)
    n = mom.n_assets
    ones = np.ones(n)
    zeros = np.zeros(n)

    def objective(vec):
        return _nc_objective(cov, vec, lam_nc, alpha_nc)

    def subproblem(v, o):
        adjusted = (
            cov
            - lam_nc * (np.outer(v, ones) + np.outer(ones, v))
            + 0.5 * lam_nc * alpha_nc * (np.outer(o, ones) + np.outer(ones, o))
        )
        return _bordered_solve(adjusted, zeros, SingularAdjustedCovariance)

    w = _bordered_solve(cov, zeros, SingularCovariance)
    value = objective(w)
    history = [(value, w)]

    def fallback():
        best = min(history, key=lambda item: item[0])
        polished = _owl_polish(cov, lam_nc, alpha_nc, best[1])
        return min([best, (objective(polished), polished)], key=lambda item: item[0])[1]

    for _ in range(max_iter):
        v, o = _nc_pattern(w)
        target = subproblem(v, o)
        direction = target - w
        if float(np.linalg.norm(direction)) <= 1e-13 * (1.0 + float(np.linalg.norm(w))):
            return w
        v_t, o_t = _nc_pattern(target)
        if np.array_equal(v_t, v) and np.allclose(o_t, o, atol=1e-12):
            # the subproblem minimizer reproduces its own pattern: a
            # genuine fixed point, and a descent step since the frozen
            # pattern's quadratic dominates the objective from below
            return target
        result = scipy.optimize.minimize_scalar(
            lambda t: objective(w + t * direction),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-14},
        )
        candidates = [w + float(result.x) * direction, target]
        new_value, w_new = min(
            ((objective(c), c) for c in candidates), key=lambda item: item[0]
        )
        history.append((new_value, w_new))
        if new_value >= value - 1e-14 * (1.0 + abs(value)):
            warnings.warn(
                "pattern cycled; returning the lowest-objective iterate",
                CycleDetected,
            )
            return fallback()
        w, value = w_new, new_value
    warnings.warn(
        "pattern did not settle within the iteration cap; returning the "
        "lowest-objective iterate",
        CycleDetected,
    )
    return fallback()


def _davis_yin(project, shrink, smooth_grad, step, start, max_iter, tol):
    """Three-operator splitting for projection + prox + smooth terms.

    Iterates ``w_f = project(z)``, ``w_g = shrink(2 w_f - z - step *
    grad(w_f))``, ``z += w_g - w_f`` and returns ``(point, converged)``
    where ``converged`` records whether the two operator outputs agreed
    within tolerance before the iteration cap.
    """
    z = start.copy()
    for k in range(max_iter):
        w_f = project(z)
        u = 2.0 * w_f - z - step * smooth_grad(w_f)
        w_g = shrink(u)
        z += w_g - w_f
        if k % 25 == 0:
            gap = float(np.linalg.norm(w_g - w_f))
            if gap <= tol * (1.0 + float(np.linalg.norm(w_f))):
                return project(z), True
    return project(z), False


def robust_sp(
    mom: SinglePeriodMoments,
    rho: float | None = None,
    tau: float = 500.0,
    epsilon=None,
    max_pattern_assets: int = 12,
    max_iter: int = 100_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Sparse box-uncertainty weights.

    Minimizes ``||rho 1 - R w||^2 + tau ||w||_1`` subject to full
    investment and the robust-return equality ``w.mean - eps.|w| =
    rho``.  Defaults: ``eps_i = 1.96 std_i / sqrt(d)`` and ``rho``
    placed so the equal-weighted portfolio is feasible.

    The absolute values in the equality are resolved by sign-pattern
    splitting (full enumeration up to ``max_pattern_assets`` assets,
    iterative sign re-linearization above).  Within a pattern the
    problem is a smooth convex quadratic program: it is solved by the
    stationarity system of the two equalities when the orthant
    constraints stay slack, and by a sequential quadratic programming
    fallback when one of them binds.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    returns = mom.returns
    d, n = returns.shape
    if epsilon is None:
        epsilon = 1.96 * returns.std(axis=0) / math.sqrt(d)
    epsilon = np.broadcast_to(np.asarray(epsilon, dtype=float), (n,)).copy()
    if np.any(epsilon < 0):
        raise ValueError("epsilon entries must be >= 0")
    if rho is None:
        rho = float(mom.mean.mean() - epsilon.mean())

    target = rho * np.ones(d)
    quad = returns.T @ returns
    lin = returns.T @ target

    def exact_objective(w):
        resid = target - returns @ w
        return float(resid @ resid) + tau * float(np.abs(w).sum())

    def pattern_rows(signs):
        rows = np.vstack([np.ones(n), mom.mean - epsilon * signs])
        rhs = np.array([1.0, rho])
        return rows, rhs

    def compress_rows(rows, rhs):
        """Drop dependent equality rows (same affine set, full row rank)."""
        u, sv, vt = np.linalg.svd(rows, full_matrices=False)
        rank = int(np.sum(sv > max(rows.shape) * (sv[0] if sv.size else 0.0) * 1e-13))
        rank = max(rank, 1)
        return sv[:rank, None] * vt[:rank], u[:, :rank].T @ rhs

    def equality_kkt(rows, rhs, signs):
        """Minimizer of the pattern quadratic ignoring the orthant."""
        size = n + rows.shape[0]
        system = np.zeros((size, size))
        system[:n, :n] = 2.0 * quad
        system[:n, n:] = rows.T
        system[n:, :n] = rows
        full_rhs = np.concatenate([2.0 * lin - tau * signs, rhs])
        return np.linalg.lstsq(system, full_rhs, rcond=None)[0][:n]

    def orthant_qp(rows, rhs, signs, start):
        """Pattern subproblem when orthant constraints bind: active set.

        Minimizes the strictly convex pattern quadratic subject to the
        equality rows and ``signs * w >= 0`` by the textbook primal
        active-set exchange: solve with the current zero set pinned,
        either step to the subspace minimizer (adding the first blocking
        bound) or release the bound with the most negative multiplier.
        """
        r = rows.shape[0]
        w = start.copy()
        active = {i for i in range(n) if signs[i] * w[i] <= 1e-12}
        for _ in range(max(max_iter, 1)):
            pinned = sorted(active)
            k = len(pinned)
            size = n + r + k
            system = np.zeros((size, size))
            system[:n, :n] = 2.0 * quad
            system[:n, n:n + r] = -rows.T
            system[n:n + r, :n] = rows
            for j, i in enumerate(pinned):
                system[i, n + r + j] = -1.0
                system[n + r + j, i] = 1.0
            full_rhs = np.concatenate(
                [2.0 * lin - tau * signs, rhs, np.zeros(k)]
            )
            sol = np.linalg.lstsq(system, full_rhs, rcond=None)[0]
            w_sub, bound_mult = sol[:n], sol[n + r:]
            gap = max(tol, 1e-12) * (1.0 + float(np.linalg.norm(w)))
            if float(np.linalg.norm(w_sub - w)) <= gap:
                # at the subspace minimizer: check bound multipliers
                # (inequality form requires signs[i] * mult >= 0)
                worst, worst_val = None, -1e-9 * (1.0 + abs(tau))
                for j, i in enumerate(pinned):
                    value = signs[i] * bound_mult[j]
                    if value < worst_val:
                        worst, worst_val = i, value
                if worst is None:
                    return w
                active.remove(worst)
                continue
            direction = w_sub - w
            alpha, blocker = 1.0, None
            for i in range(n):
                if i in active:
                    continue
                slope = signs[i] * direction[i]
                if slope < -1e-15:
                    limit = max(signs[i] * w[i], 0.0) / (-slope)
                    if limit < alpha:
                        alpha, blocker = limit, i
            w = w + alpha * direction
            if blocker is not None:
                active.add(blocker)
                w[blocker] = 0.0
        raise NonConvergence(
            f"active-set exchange did not settle in {max(max_iter, 1)} steps"
        )

    if n <= max_pattern_assets:
        best = None
        for combo in itertools.product((1.0, -1.0), repeat=n):
            signs = np.asarray(combo)
            rows, rhs = pattern_rows(signs)
            bounds = [(0, None) if s > 0 else (None, 0) for s in signs]
            check = scipy.optimize.linprog(
                np.zeros(n), A_eq=rows, b_eq=rhs, bounds=bounds, method="highs"
            )
            if not check.success:
                continue
            rows_c, rhs_c = compress_rows(rows, rhs)
            if rows_c.shape[0] >= n:
                # the equalities pin the weights; nothing to optimize
                w = np.linalg.lstsq(rows_c, rhs_c, rcond=None)[0]
            else:
                w = equality_kkt(rows_c, rhs_c, signs)
                if np.any(signs * w < -1e-10 * (1.0 + np.abs(w).max())):
                    w = orthant_qp(rows_c, rhs_c, signs, check.x)
            value = exact_objective(w)
            if best is None or value < best[0]:
                best = (value, w)
        if best is None:
            raise InfeasibleTarget(
                f"no sign pattern admits a fully invested portfolio with "
                f"robust return {rho:.6e}"
            )
        return best[1]

    # re-linearization: fix |w| ~ signs * w in both the equality and the
    # l1 term, solve the resulting equality-constrained quadratic in
    # closed form, and iterate on the sign vector
    signs = np.ones(n)
    for _ in range(50):
        rows, rhs = pattern_rows(signs)
        anchor = np.linalg.lstsq(rows, rhs, rcond=None)[0]
        if float(np.max(np.abs(rows @ anchor - rhs))) > 1e-9:
            raise InfeasibleTarget(
                f"robust-return equality unreachable for sign pattern "
                f"{signs.astype(int).tolist()}"
            )
        rows_c, rhs_c = compress_rows(rows, rhs)
        w = equality_kkt(rows_c, rhs_c, signs)
        new_signs = np.where(w < 0, -1.0, 1.0)
        if np.array_equal(new_signs, signs):
            return w
        signs = new_signs
    raise NonConvergence("sign pattern did not settle after 50 re-linearizations")
