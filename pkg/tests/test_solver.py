import numpy as np
import pytest

from robustmd import entrygame
from robustmd.errors import GcvDegenerate, InvalidArgument
from robustmd.model import make_linear_model
from robustmd.solver import (
    default_gcv_grid,
    latin_hypercube,
    minimize_ridge,
    select_lambda_gcv,
)


def ridge_closed_form(design, weight, residual, lam):
    """Independent oracle: (D'WD + lam I)^-1 D'W r."""
    q = design.shape[1]
    return np.linalg.solve(design.T @ weight @ design + lam * np.eye(q),
                           design.T @ weight @ residual)


def gcv_curve(design, weight, theta_hat, theta0, n, grid):
    """Brute-force GCV scores for the linear model, via the closed form.

    The fitted estimator minimizes n r'Wr + lam |a|^2, i.e. a ridge with
    effective coefficient lam / n, and the hat trace describes that same
    smoother.
    """
    scores = {}
    for lam in grid:
        eff = lam / n
        coef = ridge_closed_form(design, weight, theta_hat - theta0, eff)
        resid = theta_hat - theta0 - design @ coef
        rss = n * float(resid @ weight @ resid)
        dtwd = design.T @ weight @ design
        hat_trace = float(np.trace(np.linalg.lstsq(
            dtwd + eff * np.eye(design.shape[1]), dtwd, rcond=None)[0]))
        scores[lam] = n * rss / (n - hat_trace) ** 2
    return scores


class TestMinimizeRidge:
    def test_zero_residual_at_truth(self):
        rng = np.random.default_rng(0)
        design = rng.standard_normal((5, 2))
        model = make_linear_model(np.zeros(5), design)
        sol = minimize_ridge(model, np.zeros(5), np.eye(5), np.zeros(1), 0.0,
                             n=100, seed=1)
        np.testing.assert_allclose(sol.alpha_hat, np.zeros(2), atol=1e-7)
        assert sol.objective == pytest.approx(0.0, abs=1e-10)
        assert sol.objective <= sol.penalized_objective + 1e-12

    @pytest.mark.parametrize("lam", [1e-4, 1e-2, 1.0])
    def test_matches_closed_form_ridge(self, lam):
        rng = np.random.default_rng(3)
        design = rng.standard_normal((6, 3))
        theta0 = rng.standard_normal(6)
        theta_hat = theta0 + 0.1 * rng.standard_normal(6)
        n = 400
        model = make_linear_model(theta0, design)
        sol = minimize_ridge(model, theta_hat, np.eye(6), np.zeros(1), lam,
                             n=n, seed=2)
        # the profile objective carries the n factor, so the effective ridge
        # penalty on the normalized problem is lam / n
        expected = ridge_closed_form(design, np.eye(6), theta_hat - theta0, lam / n)
        np.testing.assert_allclose(sol.alpha_hat, expected, atol=1e-6)

    def test_rank_deficient_design_minimum_norm_limit(self):
        # duplicated column: the ridge path converges to the minimum-norm
        # least-squares solution as the penalty vanishes
        rng = np.random.default_rng(4)
        col = rng.standard_normal(5)
        design = np.column_stack([col, col])
        theta0 = np.zeros(5)
        theta_hat = 0.3 * rng.standard_normal(5)
        model = make_linear_model(theta0, design)
        n = 200
        sol = minimize_ridge(model, theta_hat, np.eye(5), np.zeros(1), 1e-6,
                             n=n, seed=3)
        min_norm = np.linalg.pinv(design) @ theta_hat
        np.testing.assert_allclose(sol.alpha_hat, min_norm, atol=1e-4)

    def test_game_minimizer_dominates_truth(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        data = entrygame.simulate_data(params, 1000, 17)
        rf = entrygame.estimate_reduced_form(data)
        sol = minimize_ridge(model, rf.theta_hat, np.eye(6),
                             np.array([params.beta]), 0.0, n=rf.n, seed=5)
        resid = rf.theta_hat - model.g(rf.theta_hat, params.alpha,
                                       np.array([params.beta]))
        at_truth = rf.n * float(resid @ resid)
        assert sol.objective <= at_truth + 1e-9

    def test_deterministic_given_seed(self):
        params = entrygame.GameParams.unidentified()
        model = entrygame.build_model()
        data = entrygame.simulate_data(params, 500, 23)
        rf = entrygame.estimate_reduced_form(data)
        a = minimize_ridge(model, rf.theta_hat, np.eye(6),
                           np.array([params.beta]), 1e-3, n=rf.n, seed=9)
        b = minimize_ridge(model, rf.theta_hat, np.eye(6),
                           np.array([params.beta]), 1e-3, n=rf.n, seed=9)
        assert np.array_equal(a.alpha_hat, b.alpha_hat)
        assert a.objective == b.objective

    def test_penalized_objective_monotone_in_lambda(self):
        rng = np.random.default_rng(6)
        design = rng.standard_normal((5, 2))
        model = make_linear_model(np.zeros(5), design)
        theta_hat = 0.2 * rng.standard_normal(5)
        values, norms = [], []
        for lam in (0.0, 1e-3, 1e-1, 1.0, 10.0):
            sol = minimize_ridge(model, theta_hat, np.eye(5), np.zeros(1), lam,
                                 n=100, seed=7)
            values.append(sol.penalized_objective)
            norms.append(np.linalg.norm(sol.alpha_hat))
        assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))
        assert all(b <= a + 1e-8 for a, b in zip(norms, norms[1:]))

    def test_minimum_norm_selection_on_flat(self):
        # one-dimensional flat: duplicated columns make alpha0 + t(1, -1)
        # observationally equivalent; the vanishing ridge picks the
        # minimum-norm representative
        rng = np.random.default_rng(8)
        col = rng.standard_normal(6)
        design = np.column_stack([col, col])
        n = 10_000
        theta0 = design @ np.array([0.5, -0.5])  # truth on the flat, min-norm is 0
        theta_hat = theta0 + rng.standard_normal(6) / np.sqrt(n)
        model = make_linear_model(np.zeros(6), design)
        sol = minimize_ridge(model, theta_hat, np.eye(6), np.zeros(1), 1.0 / n,
                             n=n, seed=11)
        min_norm = np.linalg.pinv(design) @ theta0
        assert np.linalg.norm(sol.alpha_hat - min_norm) <= 1e-2

    def test_negative_penalty_rejected(self):
        model = make_linear_model(np.zeros(3), np.eye(3)[:, :1])
        with pytest.raises(InvalidArgument):
            minimize_ridge(model, np.zeros(3), np.eye(3), np.zeros(1), -1.0,
                           n=100)


class TestGcv:
    def test_single_element_grid(self):
        model = make_linear_model(np.zeros(4), np.eye(4)[:, :2])
        lam = select_lambda_gcv(model, 0.1 * np.ones(4), np.eye(4), np.zeros(1),
                                [0.25], n=100)
        assert lam == 0.25

    def test_well_identified_matches_brute_force(self):
        # on a well-identified problem the GCV curve is nearly flat (the
        # effective shrinkage of any grid penalty is lam / n); the contract
        # is agreement with the brute-force score curve, not a particular
        # grid position
        rng = np.random.default_rng(12)
        design = rng.standard_normal((6, 2))
        theta0 = np.zeros(6)
        n = 500
        theta_hat = design @ np.array([0.4, -0.7]) + rng.standard_normal(6) / np.sqrt(n)
        model = make_linear_model(theta0, design)
        grid = default_gcv_grid(np.eye(6), 6)
        lam = select_lambda_gcv(model, theta_hat, np.eye(6), np.zeros(1), grid,
                                n=n)
        scores = gcv_curve(design, np.eye(6), theta_hat, theta0, n, grid)
        assert scores[lam] <= min(scores.values()) * (1.0 + 1e-9)
        # the selected fit is indistinguishable from the unpenalized one
        sol = minimize_ridge(model, theta_hat, np.eye(6), np.zeros(1), lam,
                             n=n, seed=0)
        unpen = ridge_closed_form(design, np.eye(6), theta_hat - theta0, 0.0)
        assert np.linalg.norm(sol.alpha_hat - unpen) <= 1e-3

    def test_collinear_design_matches_brute_force(self):
        rng = np.random.default_rng(13)
        col = rng.standard_normal(6)
        design = np.column_stack([col, col])
        theta0 = np.zeros(6)
        n = 500
        theta_hat = col * 0.3 + rng.standard_normal(6) / np.sqrt(n)
        model = make_linear_model(theta0, design)
        grid = default_gcv_grid(np.eye(6), 6)
        lam = select_lambda_gcv(model, theta_hat, np.eye(6), np.zeros(1), grid,
                                n=n)
        assert lam > 0.0
        scores = gcv_curve(design, np.eye(6), theta_hat, theta0, n, grid)
        assert scores[lam] <= min(scores.values()) * (1.0 + 1e-9)

    def test_degenerate_when_hat_trace_exhausts_sample(self):
        rng = np.random.default_rng(14)
        design = rng.standard_normal((60, 55))
        model = make_linear_model(np.zeros(60), design)
        theta_hat = 0.1 * rng.standard_normal(60)
        with pytest.raises(GcvDegenerate):
            select_lambda_gcv(model, theta_hat, np.eye(60), np.zeros(1), [0.0],
                              n=50)

    def test_empty_grid_rejected(self):
        model = make_linear_model(np.zeros(3), np.eye(3)[:, :1])
        with pytest.raises(InvalidArgument):
            select_lambda_gcv(model, np.zeros(3), np.eye(3), np.zeros(1), [],
                              n=100)


def test_latin_hypercube_stratification():
    rng = np.random.default_rng(15)
    bounds = np.array([[0.0, 1.0], [-2.0, 2.0]])
    pts = latin_hypercube(bounds, 8, rng)
    assert pts.shape == (8, 2)
    assert np.all(pts[:, 0] >= 0.0) and np.all(pts[:, 0] <= 1.0)
    assert np.all(pts[:, 1] >= -2.0) and np.all(pts[:, 1] <= 2.0)
    # one point per stratum along each axis
    strata = np.floor((pts[:, 0]) * 8).astype(int)
    assert sorted(strata.tolist()) == list(range(8))


def test_default_grid_is_scale_free():
    grid = default_gcv_grid(2.0 * np.eye(4), 4)
    np.testing.assert_allclose(grid, 2.0 * np.power(10.0, -np.arange(9.0)))
