"""Worst-case evaluation closed forms and the robust solve."""

import math

import numpy as np
import pytest
import scipy.optimize

from drportfolio.calibration import EmpiricalMoments, empirical_moments
from drportfolio.encoding import build_encoding, predictability_mask, strategy_weights
from drportfolio.errors import (
    InfeasibleLambda,
    InfeasibleProblem,
    NegativeQuadForm,
    NonConvergence,
)
from drportfolio.robust_optimizer import (
    RobustProblem,
    dual_objective,
    primal_inner_value,
    reduce_zero_components,
    solve_robust,
    worst_case_mean,
)

from conftest import make_path_samples
from oracles import (
    grid_worst_case_mean,
    lp_worst_case_variance,
    reference_minimizer,
)


class Moments:
    def __init__(self, mean, variance, second_moment=None):
        self.mean = np.asarray(mean, dtype=float)
        self.variance = np.asarray(variance, dtype=float)
        if second_moment is None:
            second_moment = self.variance + np.outer(self.mean, self.mean)
        self.second_moment = second_moment


def test_worst_case_mean_frozen():
    mom = Moments(np.zeros(3), np.eye(3))
    a = np.array([1.0, 0.0, 0.0])
    assert worst_case_mean(a, mom, 0.04) == pytest.approx(-0.2, abs=1e-15)


def test_dual_objective_frozen():
    mom = Moments(np.zeros(4), np.eye(4))
    a = np.array([0.5, 0.5, 0.5, 0.5])  # unit norm
    assert dual_objective(a, mom, 0.01) == pytest.approx(1.1, abs=1e-12)


def test_dual_objective_negative_quad_form():
    mom = Moments(np.zeros(2), -np.eye(2))
    with pytest.raises(NegativeQuadForm):
        dual_objective(np.array([1.0, 0.0]), mom, 0.01)


def test_penalty_pair_gamma_form(rng):
    # inf over gamma > 0 of gamma * radius + ||A||^2 / (4 gamma) equals
    # sqrt(radius) * ||A||; verified by scalar minimization
    for _ in range(20):
        a = rng.normal(size=4)
        radius = rng.uniform(0.01, 2.0)
        norm_sq = float(a @ a)
        res = scipy.optimize.minimize_scalar(
            lambda lg: math.exp(lg) * radius + norm_sq / (4.0 * math.exp(lg)),
            bounds=(-40, 40),
            method="bounded",
            options={"xatol": 1e-14},
        )
        closed = math.sqrt(radius) * math.sqrt(norm_sq)
        assert res.fun == pytest.approx(closed, rel=1e-10)


def test_worst_case_mean_gamma_chain(rng):
    # the mean closed form equals the gamma-infimum form to 1e-10
    for _ in range(10):
        dim = 3
        mom = Moments(rng.normal(scale=0.1, size=dim), np.eye(dim))
        a = rng.normal(size=dim)
        radius = rng.uniform(0.01, 1.0)
        norm_sq = float(a @ a)
        base = float(mom.mean @ a)
        res = scipy.optimize.minimize_scalar(
            lambda lg: math.exp(lg) * radius + norm_sq / (4.0 * math.exp(lg)),
            bounds=(-40, 40),
            method="bounded",
            options={"xatol": 1e-14},
        )
        gamma_form = base - res.fun
        assert worst_case_mean(a, mom, radius) == pytest.approx(gamma_form, abs=1e-10)


def test_worst_case_mean_vs_grid_primal(rng):
    # brute-force displacement of the sample atoms reproduces the closed
    # form within the grid tolerance
    for trial in range(4):
        count, dim = (3, 2) if trial % 2 == 0 else (2, 3)
        atoms = rng.normal(size=(count, dim))
        a = rng.normal(size=dim)
        radius = rng.uniform(0.05, 0.4)
        mom = Moments(atoms.mean(axis=0), np.eye(dim))
        closed = worst_case_mean(a, mom, radius)
        grid = grid_worst_case_mean(atoms, a, radius, per_axis=7 if dim == 3 else 9)
        assert grid == pytest.approx(closed, abs=1e-3 * max(1.0, abs(closed)))


def test_primal_inner_value_properties(rng):
    for _ in range(15):
        dim = 3
        atoms = rng.normal(size=(6, dim))
        mu = atoms.mean(axis=0)
        var = (atoms - mu).T @ (atoms - mu) / 6
        mom = Moments(mu, var)
        a = rng.normal(size=dim)
        radius = rng.uniform(0.01, 0.5)
        center = float(mu @ a)
        half = math.sqrt(radius) * float(np.linalg.norm(a))

        # collapse: the maximum over the pinned mean sits at mu . A and
        # equals the squared dual objective
        dual_sq = dual_objective(a, mom, radius) ** 2
        assert primal_inner_value(a, mom, radius, center) == pytest.approx(
            dual_sq, rel=1e-12
        )
        # boundary pins drop the second square root entirely
        for pin in (center - half, center + half):
            assert primal_inner_value(a, mom, radius, pin) == pytest.approx(
                float(a @ var @ a), rel=1e-6, abs=1e-12
            )
        # interior pins stay below the collapse value
        pin = center + 0.5 * half
        assert primal_inner_value(a, mom, radius, pin) <= dual_sq + 1e-12
        with pytest.raises(InfeasibleLambda):
            primal_inner_value(a, mom, radius, center + half * 1.01)


def test_dual_vs_lp_primal(rng):
    # squared dual objective == discretized-ball primal, swept over pins
    for _ in range(5):
        count, dim = 3, 2
        atoms = rng.normal(size=(count, dim))
        mu = atoms.mean(axis=0)
        var = (atoms - mu).T @ (atoms - mu) / count
        mom = Moments(mu, var)
        a = rng.normal(size=dim)
        radius = rng.uniform(0.05, 0.5)
        dual_sq = dual_objective(a, mom, radius) ** 2
        primal = lp_worst_case_variance(atoms, a, radius)
        assert primal == pytest.approx(dual_sq, rel=5e-3)


def test_homogeneity(rng):
    mom = Moments(rng.normal(size=5), _random_cov(rng, 5))
    a = rng.normal(size=5)
    base = dual_objective(a, mom, 0.3)
    for c in (2.0, 0.25, 7.3, 1e-4):
        assert dual_objective(c * a, mom, 0.3) == pytest.approx(c * base, rel=1e-12)


def _random_cov(rng, dim):
    root = rng.normal(size=(dim, dim))
    return root @ root.T / dim


def _make_problem(rng, n, T, order, mode, radius=4e-6, bind=0.3):
    enc = build_encoding(n, T, order)
    keep = ~predictability_mask(enc)
    samples = make_path_samples(rng, int(keep.sum()) + 30, n, T, scale=0.02, drift=0.001)
    mom = empirical_moments(samples, enc)
    # place the floor strictly between the equal-weight worst-case mean
    # and the attainable maximum (capped, since the max may be infinite)
    probe = RobustProblem(enc, mom, radius, -1e9, mode)
    reduced, _, _ = reduce_zero_components(probe)
    from drportfolio.robust_optimizer import _max_worst_case_mean
    import scipy.linalg

    particular, *_ = np.linalg.lstsq(reduced.budget_matrix, reduced.budget_rhs, rcond=None)
    basis = scipy.linalg.null_space(reduced.budget_matrix)
    best_floor, _ = _max_worst_case_mean(reduced, basis, particular)
    base = worst_case_mean(particular, reduced, radius)
    top = min(best_floor, base + max(abs(base), 1e-3))
    floor = base + bind * (top - base)
    return RobustProblem(enc, mom, radius, floor, mode), samples


def test_solve_robust_contract(rng):
    for n, T, order, mode in [
        (2, 1, 1, "constant"),
        (2, 2, 1, "constant"),
        (2, 2, 1, "pathwise"),
        (2, 2, 2, "pathwise"),
    ]:
        problem, _ = _make_problem(rng, n, T, order, mode)
        sol = solve_robust(problem, max_iter=20_000)
        enc = problem.encoding
        assert sol.budget_residual <= 1e-8
        assert sol.worst_case_mean >= problem.return_floor - 1e-8
        mask = predictability_mask(enc)
        assert np.all(sol.coefficients[mask] == 0.0)
        # per-period linear budget holds in both modes
        for t in range(T):
            block = sol.coefficients[t * n : (t + 1) * n]
            assert block.sum() == pytest.approx(1.0, abs=1e-8)


def test_solve_robust_pathwise_budget_holds_on_paths(rng):
    # pathwise mode: realized weights sum to one for every history
    problem, _ = _make_problem(rng, 2, 2, 2, "pathwise")
    sol = solve_robust(problem, max_iter=20_000)
    enc = problem.encoding
    for _ in range(30):
        path = rng.normal(scale=0.05, size=(2, 2))
        for t in (1, 2):
            w = strategy_weights(enc, sol.coefficients, path[: t - 1], t)
            assert w.sum() == pytest.approx(1.0, abs=1e-7)


def test_solve_robust_matches_reference(rng):
    # small instances: agree with a multi-start scipy reference to 1e-4
    for n, T, order, mode, bind in [
        (2, 1, 1, "constant", 0.6),
        (2, 2, 1, "pathwise", 0.4),
        (3, 1, 1, "constant", 0.25),
    ]:
        problem, _ = _make_problem(rng, n, T, order, mode, bind=bind)
        sol = solve_robust(problem)
        reduced, _, _ = reduce_zero_components(problem)
        ref = reference_minimizer(reduced, restarts=8, seed=1)
        assert sol.value == pytest.approx(ref, rel=1e-4, abs=1e-10)


def test_solve_robust_monotone_in_radius(rng):
    enc = build_encoding(2, 2, 1)
    samples = make_path_samples(rng, 60, 2, 2, scale=0.02, drift=0.001)
    mom = empirical_moments(samples, enc)
    floor = -0.02  # attainable across the whole grid below
    values = []
    for radius in np.linspace(1e-8, 2e-5, 6):
        problem = RobustProblem(enc, mom, float(radius), floor, "constant")
        values.append(solve_robust(problem, max_iter=20_000).value)
    diffs = np.diff(values)
    assert np.all(diffs >= -1e-9)


def test_solve_robust_infeasible(rng):
    problem, _ = _make_problem(rng, 2, 1, 1, "constant", radius=1e-2)
    bad = RobustProblem(
        problem.encoding, problem.moments, problem.radius, 10.0, "constant"
    )
    with pytest.raises(InfeasibleProblem) as err:
        solve_robust(bad)
    assert err.value.best_floor < 10.0
    assert err.value.required_floor == 10.0


def test_solve_robust_nonconvergence_attaches_solution(rng):
    problem, _ = _make_problem(rng, 2, 2, 1, "constant")
    with pytest.raises(NonConvergence) as err:
        solve_robust(problem, max_iter=2)
    assert err.value.solution is not None
    assert err.value.solution.budget_residual <= 1e-8


def test_solve_robust_radius_zero_matches_plain_minimum_variance(rng):
    # robustness off, floor effectively absent: the solution is the
    # budget-constrained variance minimizer (solved here by direct
    # linear algebra in the null space)
    enc = build_encoding(2, 2, 1)
    samples = make_path_samples(rng, 60, 2, 2, scale=0.02, drift=0.001)
    mom = empirical_moments(samples, enc)
    problem = RobustProblem(enc, mom, 0.0, -1e9, "constant")
    sol = solve_robust(problem)

    reduced, _, _ = reduce_zero_components(problem)
    import scipy.linalg

    particular, *_ = np.linalg.lstsq(reduced.budget_matrix, reduced.budget_rhs, rcond=None)
    basis = scipy.linalg.null_space(reduced.budget_matrix)
    W = basis.T @ reduced.variance @ basis
    v0 = basis.T @ reduced.variance @ particular
    y_star = np.linalg.solve(W, -v0)
    a_star = particular + basis @ y_star
    direct = math.sqrt(float(a_star @ reduced.variance @ a_star))
    assert sol.value == pytest.approx(direct, rel=1e-6)
    assert not sol.return_floor_active


def test_solve_robust_exchangeable_assets_symmetric(rng):
    # duplicating every sample with the asset columns swapped makes the
    # moments exchangeable; the unique minimizer must be swap-symmetric
    enc = build_encoding(2, 2, 1)
    base = make_path_samples(rng, 40, 2, 2, scale=0.02, drift=0.001)
    swapped = base.samples.reshape(40, 2, 2)[:, :, ::-1].reshape(40, 4)
    from drportfolio.market_data import PathSamples

    both = PathSamples(
        samples=np.vstack([base.samples, swapped]),
        n_assets=2,
        horizon=2,
        mode="sliding",
        start_rows=np.arange(80),
    )
    mom = empirical_moments(both, enc)
    problem = RobustProblem(enc, mom, 1e-5, -1e9, "constant")
    sol = solve_robust(problem)
    f = sol.coefficients[:4].reshape(2, 2)
    np.testing.assert_allclose(f[:, 0], f[:, 1], atol=1e-6)
    np.testing.assert_allclose(f.sum(axis=1), 1.0, atol=1e-8)


def test_reduce_zero_components_value_equality(rng):
    enc = build_encoding(2, 3, 1)
    samples = make_path_samples(rng, 60, 2, 3, scale=0.02, drift=0.001)
    mom = empirical_moments(samples, enc)
    problem = RobustProblem(enc, mom, 1e-5, 0.0, "constant")
    mask = predictability_mask(enc)
    for _ in range(25):
        full = rng.normal(size=enc.dim)
        full[mask] = 0.0
        reduced, vec, embed = reduce_zero_components(problem, full)
        np.testing.assert_array_equal(embed(vec), full)
        assert dual_objective(vec, reduced, problem.radius) == pytest.approx(
            dual_objective(full, mom, problem.radius), rel=1e-12
        )
        assert worst_case_mean(vec, reduced, problem.radius) == pytest.approx(
            worst_case_mean(full, mom, problem.radius), rel=1e-12, abs=1e-15
        )


def test_problem_validation(rng):
    enc = build_encoding(2, 1, 1)
    samples = make_path_samples(rng, 20, 2, 1)
    mom = empirical_moments(samples, enc)
    with pytest.raises(ValueError):
        RobustProblem(enc, mom, 1e-4, 0.0, "daily")
    with pytest.raises(ValueError):
        RobustProblem(enc, mom, -1.0, 0.0, "constant")
