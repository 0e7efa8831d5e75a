"""Worst-case evaluation and minimization over a Wasserstein ball.

For a coefficient vector ``A``, the worst case over all measures within
squared second-order Wasserstein distance ``radius`` of the sample has
closed forms:

* worst-case mean:      ``mu . A - sqrt(radius) ||A||``
* worst-case deviation: ``sqrt(A' Var A) + sqrt(radius) ||A||``

(the worst-case variance is the square of the second).  The solver
minimizes the deviation subject to the budget equalities and a floor on
the worst-case mean, by gradient projection in the null space of the
equalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg

from .calibration import EmpiricalMoments
from .encoding import MonomialEncoding, predictability_mask
from .errors import (
    InfeasibleLambda,
    InfeasibleProblem,
    NegativeQuadForm,
    NonConvergence,
)

__all__ = [
    "RobustProblem",
    "RobustSolution",
    "ReducedProblem",
    "worst_case_mean",
    "dual_objective",
    "primal_inner_value",
    "solve_robust",
    "reduce_zero_components",
]

_SMOOTH_EPS = 1e-12


@dataclass(frozen=True)
class RobustProblem:
    """Robust mean-variance instance.

    ``budget_mode`` is ``"constant"`` (each period's linear-block
    coefficients sum to 1) or ``"pathwise"`` (additionally every
    higher-order coefficient group sums to zero across the target asset,
    so the realized budget holds on every path).
    """

    encoding: MonomialEncoding
    moments: EmpiricalMoments
    radius: float
    return_floor: float
    budget_mode: str = "pathwise"

    def __post_init__(self):
        if self.budget_mode not in ("constant", "pathwise"):
            raise ValueError(f"budget_mode must be 'constant' or 'pathwise', got {self.budget_mode!r}")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class ReducedProblem:
    """Zero-component-free view of a :class:`RobustProblem`."""

    mean: np.ndarray
    second_moment: np.ndarray
    variance: np.ndarray
    radius: float
    return_floor: float
    budget_matrix: np.ndarray
    budget_rhs: np.ndarray
    keep: np.ndarray  # global indices of retained coordinates


@dataclass(frozen=True)
class RobustSolution:
    """Minimizer returned by :func:`solve_robust`.

    ``gradient_norm`` is the first-order stationarity residual: the norm
    of the objective gradient reduced by the return-floor multiplier,
    measured in the null space of the budget equalities.
    ``return_floor_active`` reports whether the floor constraint binds
    at the solution (the budget equalities always bind).
    """

    coefficients: np.ndarray
    value: float  # worst-case deviation (square root of worst-case variance)
    worst_case_mean: float
    iterations: int
    converged: bool
    budget_residual: float
    gradient_norm: float
    return_floor_active: bool


def _values_of(coeffs) -> np.ndarray:
    values = np.asarray(getattr(coeffs, "coefficients", coeffs), dtype=float)
    return values


def _mean_of(moments) -> np.ndarray:
    return np.asarray(moments.mean, dtype=float)


def _variance_of(moments) -> np.ndarray:
    return np.asarray(moments.variance, dtype=float)


def worst_case_mean(coeffs, moments, radius: float) -> float:
    """``mu . A - sqrt(radius) ||A||``: the lowest mean inside the ball."""
    values = _values_of(coeffs)
    return float(_mean_of(moments) @ values - math.sqrt(radius) * np.linalg.norm(values))


def dual_objective(coeffs, moments, radius: float) -> float:
    """``sqrt(A' Var A) + sqrt(radius) ||A||``: worst-case deviation.

    Raises :class:`NegativeQuadForm` if the variance quadratic form is
    negative beyond the symmetrization/rounding tolerance.
    """
    values = _values_of(coeffs)
    var = _variance_of(moments)
    quad = float(values @ var @ values)
    scale = float(np.linalg.norm(var)) * float(values @ values)
    if quad < -1e-10 * max(scale, 1e-300):
        raise NegativeQuadForm(f"quadratic form {quad:.3e} negative beyond tolerance")
    quad = max(quad, 0.0)
    return float(math.sqrt(quad) + math.sqrt(radius) * np.linalg.norm(values))


def primal_inner_value(coeffs, moments, radius: float, pinned_mean: float) -> float:
    """Largest second moment minus ``pinned_mean**2`` inside the ball.

    Equals ``(sqrt(A' Var A) + sqrt(radius ||A||^2 - (pinned_mean -
    mu . A)^2))^2``; maximized over the pinned mean it collapses to the
    squared :func:`dual_objective`.
    """
    values = _values_of(coeffs)
    var = _variance_of(moments)
    quad = max(float(values @ var @ values), 0.0)
    norm_sq = float(values @ values)
    gap = pinned_mean - float(_mean_of(moments) @ values)
    disc = radius * norm_sq - gap * gap
    tol = 1e-12 * max(radius * norm_sq, 1.0)
    if disc < -tol:
        raise InfeasibleLambda(
            f"pinned mean offset {gap:.3e} exceeds reachable band "
            f"+-sqrt({radius * norm_sq:.3e})"
        )
    disc = max(disc, 0.0)
    root = math.sqrt(quad) + math.sqrt(disc)
    return float(root * root)


def _budget_system(enc: MonomialEncoding, mode: str) -> Tuple[np.ndarray, np.ndarray]:
    """Equality rows (over the full coordinate space) and right sides."""
    n, T = enc.n_assets, enc.horizon
    nT = n * T
    rows = []
    rhs = []
    for t in range(T):
        row = np.zeros(enc.dim)
        row[t * n : (t + 1) * n] = 1.0
        rows.append(row)
        rhs.append(1.0)
    if mode == "pathwise":
        # every unmasked higher-order group must cancel across assets so
        # the budget holds for every realization, not just on average
        for t in range(2, T + 1):
            for d in range(1, t):
                for c in range(1, n + 1):
                    row = np.zeros(enc.dim)
                    for i in range(1, n + 1):
                        pos = (t - 1) * n * nT + (i - 1) * nT + (d - 1) * n + c
                        row[nT + pos - 1] = 1.0
                    rows.append(row)
                    rhs.append(0.0)
        if enc.order == 2:
            cubic_off = enc.block_offset(3)
            for t in range(2, T + 1):
                for d in range(1, t):
                    for b in range(1, t):
                        for c in range(1, n + 1):
                            for a in range(1, n + 1):
                                row = np.zeros(enc.dim)
                                for i in range(1, n + 1):
                                    pos = (
                                        (t - 1) * n * nT * nT
                                        + (i - 1) * nT * nT
                                        + (d - 1) * n * nT
                                        + (c - 1) * nT
                                        + (b - 1) * n
                                        + a
                                    )
                                    row[cubic_off + pos - 1] = 1.0
                                rows.append(row)
                                rhs.append(0.0)
    return np.asarray(rows), np.asarray(rhs)


def reduce_zero_components(
    problem: RobustProblem, coeffs=None
) -> Tuple[ReducedProblem, Optional[np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """Drop masked coordinates; they are zero in every admissible vector.

    Returns the reduced problem, the reduced view of ``coeffs`` (or
    ``None``), and an ``embed`` callable restoring a reduced vector to
    full length with zeros.  Objective and constraint values agree
    exactly between the two representations.
    """
    enc = problem.encoding
    keep = np.where(~predictability_mask(enc))[0]
    mom = problem.moments
    rows, rhs = _budget_system(enc, problem.budget_mode)
    reduced = ReducedProblem(
        mean=mom.mean[keep],
        second_moment=mom.second_moment[np.ix_(keep, keep)],
        variance=mom.variance[np.ix_(keep, keep)],
        radius=problem.radius,
        return_floor=problem.return_floor,
        budget_matrix=rows[:, keep],
        budget_rhs=rhs,
        keep=keep,
    )

    def embed(values: np.ndarray) -> np.ndarray:
        full = np.zeros(enc.dim)
        full[keep] = values
        return full

    values = None
    if coeffs is not None:
        values = _values_of(coeffs)[keep]
    return reduced, values, embed


def _max_worst_case_mean(reduced: ReducedProblem, basis, particular):
    """Closed-form max of the worst-case mean over the budget affine set.

    With ``A = A0 + Z y`` (``A0`` the minimum-norm particular solution,
    ``Z`` an orthonormal null-space basis) the maximum over ``y`` of
    ``mu . A - sqrt(radius) ||A||`` is ``mu . A0 - ||A0|| sqrt(radius -
    ||Z' mu||^2)`` when ``||Z' mu||^2 <= radius`` and unbounded above
    otherwise.
    """
    mu = reduced.mean
    root = math.sqrt(reduced.radius)
    if basis.size == 0:
        return float(mu @ particular) - root * float(np.linalg.norm(particular)), None
    g = basis.T @ mu
    gap = reduced.radius - float(g @ g)
    if gap < 0.0:
        return math.inf, g
    a0n = float(np.linalg.norm(particular))
    best = float(mu @ particular) - a0n * math.sqrt(gap)
    return best, g


class _Moments:
    """Duck-typed moment container for reduced-space evaluations."""

    def __init__(self, mean, second_moment, variance):
        self.mean = mean
        self.second_moment = second_moment
        self.variance = variance


def _psd_clamp(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize and zero out (numerically) negative eigenvalues."""
    sym = 0.5 * (matrix + matrix.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals[0] >= 0.0:
        return sym
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def solve_robust(
    problem: RobustProblem,
    init=None,
    max_iter: int = 500,
    feas_tol: float = 1e-9,
    grad_tol: float = 1e-9,
) -> RobustSolution:
    """Minimize the worst-case deviation over the admissible set.

    Admissible vectors satisfy the budget equalities of
    ``problem.budget_mode`` and ``worst_case_mean >= return_floor``.
    Infeasibility is detected up front from the closed-form maximum of
    the worst-case mean over the budget set.

    The iteration is a majorize-minimize scheme in the null space of
    the equalities: each square root is replaced by its tangent
    quadratic upper bound at the iterate (``sqrt(x) <= (x + x_k) /
    (2 sqrt(x_k))``), which turns the objective into a convex quadratic
    and the floor-feasible set into a ball inscribed in it, tangent at
    the iterate.  The subproblem is solved exactly in the eigenbasis of
    the reduced variance, so each step is a monotone descent step; on
    this convex problem the fixed point is the global minimum.  Square
    roots are smoothed as ``sqrt(x + eps^2)``, ``eps = 1e-12``, when
    forming the bound weights.
    """
    reduced, init_values, embed = reduce_zero_components(problem, init)
    E, b = reduced.budget_matrix, reduced.budget_rhs

    particular, *_ = np.linalg.lstsq(E, b, rcond=None)
    if not np.allclose(E @ particular, b, atol=1e-9):
        raise InfeasibleProblem("budget equalities are inconsistent")
    basis = scipy.linalg.null_space(E)
    root = math.sqrt(problem.radius)
    floor = problem.return_floor

    best_floor, _ = _max_worst_case_mean(reduced, basis, particular)
    scale = max(1.0, abs(floor), abs(best_floor) if np.isfinite(best_floor) else 0.0)
    if best_floor < floor - 1e-12 * scale:
        raise InfeasibleProblem(
            f"max attainable worst-case mean {best_floor:.6e} < floor {floor:.6e}",
            best_floor=best_floor,
            required_floor=floor,
        )

    mu = reduced.mean
    var = _psd_clamp(reduced.variance)
    a0n_sq = float(particular @ particular)
    act_band = max(feas_tol, 1e-12 * max(1.0, abs(floor)))

    if basis.size == 0:
        quad = max(float(particular @ var @ particular), 0.0)
        return RobustSolution(
            coefficients=embed(particular),
            value=math.sqrt(quad) + root * math.sqrt(a0n_sq),
            worst_case_mean=best_floor,
            iterations=0,
            converged=True,
            budget_residual=float(np.max(np.abs(E @ particular - b))),
            gradient_norm=0.0,
            return_floor_active=best_floor - floor <= act_band,
        )

    k_dim = basis.shape[1]
    W = basis.T @ var @ basis
    v0 = basis.T @ var @ particular
    c0 = max(float(particular @ var @ particular), 0.0)
    g_mu = basis.T @ mu
    mu_a0 = float(mu @ particular)

    def objective(y):
        quad = max(float(y @ W @ y + 2.0 * v0 @ y + c0), 0.0)
        return math.sqrt(quad) + root * math.sqrt(a0n_sq + float(y @ y))

    def objective_grad(y):
        quad = max(float(y @ W @ y + 2.0 * v0 @ y + c0), 0.0)
        g1 = (W @ y + v0) / math.sqrt(quad + _SMOOTH_EPS**2)
        g2 = root * y / math.sqrt(a0n_sq + float(y @ y) + _SMOOTH_EPS**2)
        return g1 + g2

    def slack(y):
        return mu_a0 + float(g_mu @ y) - root * math.sqrt(a0n_sq + float(y @ y)) - floor

    def slack_grad(y):
        return g_mu - root * y / math.sqrt(a0n_sq + float(y @ y) + _SMOOTH_EPS**2)

    # start from the projection of the caller's guess, made feasible by
    # blending toward the worst-case-mean maximizer when needed
    if init_values is not None:
        y = basis.T @ (init_values - particular)
    else:
        y = np.zeros(k_dim)
    if slack(y) < feas_tol:
        y_max = _argmax_wc_mean(g_mu, root, a0n_sq, k_dim)
        if slack(y_max) < feas_tol:  # unbounded direction case
            direction = g_mu / max(np.linalg.norm(g_mu), 1e-300)
            step = 1.0
            y_max = direction.copy()
            while slack(y_max) < feas_tol and step < 1e12:
                step *= 4.0
                y_max = direction * step
        if slack(y) < 0.0:
            lo, hi = 0.0, 1.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if slack((1 - mid) * y + mid * y_max) >= feas_tol:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-14:
                    break
            y = (1 - hi) * y + hi * y_max

    eigvals, eigvecs = np.linalg.eigh(W)
    eigvals = np.clip(eigvals, 0.0, None)
    v0_e = eigvecs.T @ v0
    g_e = eigvecs.T @ g_mu
    y_e = eigvecs.T @ y

    def bound_step(y_e):
        """One exact minimization of the tangent upper bound at ``y_e``."""
        norm_sq = float(y_e @ y_e)
        quad_k = max(float(y_e @ (eigvals * y_e) + 2.0 * (v0_e @ y_e) + c0), 0.0)
        w_quad = 0.5 / math.sqrt(quad_k + _SMOOTH_EPS**2)
        x_k = a0n_sq + norm_sq
        if root == 0.0:
            return _affine_floor_qp(eigvals, v0_e, g_e, floor - mu_a0, y_e)
        alpha = 0.5 * root / math.sqrt(x_k)
        offset = mu_a0 - floor - alpha * (a0n_sq + x_k)
        diag = 2.0 * (w_quad * eigvals + alpha)
        lin = 2.0 * w_quad * v0_e

        def candidate(nu):
            return (nu * g_e - lin) / (diag + 2.0 * nu * alpha)

        def bound_slack(cand):
            return offset + float(g_e @ cand) - alpha * float(cand @ cand)

        cand = candidate(0.0)
        if bound_slack(cand) >= 0.0:
            return cand
        nu_hi = 1.0
        while bound_slack(candidate(nu_hi)) < 0.0 and nu_hi < 1e60:
            nu_hi *= 4.0
        lo, hi = 0.0, nu_hi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if bound_slack(candidate(mid)) >= 0.0:
                hi = mid
            else:
                lo = mid
        return candidate(hi)

    iterations = 0
    converged = False
    val = objective(y)
    for k in range(max_iter):
        iterations = k + 1
        y_e_new = bound_step(y_e)
        y_new = eigvecs @ y_e_new
        val_new = objective(y_new)
        moved = float(np.linalg.norm(y_new - y))
        y, y_e, prev_val, val = y_new, y_e_new, val, val_new
        if abs(prev_val - val) <= 1e-15 * max(1.0, abs(prev_val)) and moved <= 1e-9 * (
            1.0 + float(np.linalg.norm(y))
        ):
            converged = True
            break

    gj = objective_grad(y)
    if slack(y) <= act_band:
        gc = slack_grad(y)
        denom = float(gc @ gc)
        eta = max(0.0, float(gj @ gc) / denom) if denom > 1e-300 else 0.0
        residual = gj - eta * gc
    else:
        residual = gj
    grad_norm = float(np.linalg.norm(residual))
    if grad_norm <= grad_tol * (1.0 + float(np.linalg.norm(gj))):
        converged = True

    mom_view = _Moments(reduced.mean, reduced.second_moment, reduced.variance)
    reduced_vec = particular + basis @ y
    solution = RobustSolution(
        coefficients=embed(reduced_vec),
        value=dual_objective(reduced_vec, mom_view, problem.radius),
        worst_case_mean=worst_case_mean(reduced_vec, mom_view, problem.radius),
        iterations=iterations,
        converged=converged,
        budget_residual=float(np.max(np.abs(E @ reduced_vec - b))),
        gradient_norm=grad_norm,
        return_floor_active=slack(y) <= max(1e-8, 1e-6 * abs(floor)),
    )
    if not converged:
        raise NonConvergence(
            f"stationarity not reached after {iterations} iterations", solution=solution
        )
    return solution


def _affine_floor_qp(eigvals, v0_e, g_e, target, y_e):
    """Radius-zero subproblem: min quadratic s.t. ``g . y >= target``.

    Solved in the eigenbasis with a pseudo-inverse; directions in the
    numerical null space of the quadratic are free and used to satisfy
    the constraint at no cost when possible.
    """
    cut = max(float(eigvals[-1]), 1.0) * 1e-13
    pos = eigvals > cut
    inv = np.where(pos, 1.0 / np.where(pos, eigvals, 1.0), 0.0)
    y0 = -inv * v0_e
    g_null = np.where(pos, 0.0, g_e)
    null_sq = float(g_null @ g_null)
    gap = target - float(g_e @ y0)
    if gap <= 0.0:
        return y0
    if null_sq > 1e-300:
        return y0 + (gap / null_sq) * g_null
    gWg = float(g_e @ (inv * g_e))
    if gWg <= 1e-300:
        return y_e  # constraint unreachable; keep the feasible iterate
    nu = gap / gWg
    return y0 + nu * (inv * g_e)


def _argmax_wc_mean(g_mu, root, a0n_sq, k_dim):
    """Maximizer of the worst-case mean over the null space, if finite."""
    gn = float(np.linalg.norm(g_mu))
    gap = root * root - gn * gn
    if gap <= 1e-300:
        return g_mu * 1e6  # ray toward the unbounded direction
    radius_star = math.sqrt(a0n_sq) * gn / math.sqrt(gap)
    if gn < 1e-300:
        return np.zeros(k_dim)
    return g_mu / gn * radius_star
