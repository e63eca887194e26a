import numpy as np
import pytest

from robustmd import dist, entrygame
from robustmd.errors import (
    DegreesOfFreedomError,
    DimensionError,
    InvalidArgument,
)
from robustmd.harness import run_null_dist_experiment, McConfig, default_linear_design
from robustmd.inference import (
    ReducedFormEstimate,
    TestOptions,
    invert_ci,
    oracle_test,
    robust_test,
    run_pipeline,
    t_test,
)
from robustmd.model import make_linear_model


def fixed_point_rf(params, n=800):
    """Reduced form sitting exactly on the model manifold."""
    eq = entrygame.solve_equilibrium(params)
    probs = np.asarray(params.state_probs)
    sigma = np.diag(eq.theta * (1 - eq.theta) / np.tile(probs, 2))
    return ReducedFormEstimate(theta_hat=eq.theta, sigma_hat=sigma, n=n)


class TestReducedFormEstimate:
    def test_validation(self):
        with pytest.raises(DimensionError):
            ReducedFormEstimate(np.zeros(3), np.eye(2), 100)
        with pytest.raises(InvalidArgument):
            ReducedFormEstimate(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 100)
        with pytest.raises(InvalidArgument):
            ReducedFormEstimate(np.zeros(2), np.eye(2), 1)
        with pytest.raises(InvalidArgument):
            ReducedFormEstimate(np.array([np.nan, 0.0]), np.eye(2), 50)

    def test_symmetrizes(self):
        sig = np.array([[1.0, 1e-12], [0.0, 1.0]])
        rf = ReducedFormEstimate(np.zeros(2), sig, 100)
        assert np.array_equal(rf.sigma_hat, rf.sigma_hat.T)


class TestRobustTest:
    def test_exact_fixed_point_accepts(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        res = robust_test(model, rf, np.array([params.beta]), 0.05)
        assert res.statistic <= 1e-8
        assert not res.reject
        assert res.p_value > 0.99
        assert res.df_hat == res.r_sigma_hat - res.r_alpha_hat

    def test_decision_consistency(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        data = entrygame.simulate_data(params, 600, 5)
        rf = entrygame.estimate_reduced_form(data)
        res = robust_test(model, rf, np.array([params.beta]), 0.05)
        assert res.reject == (res.statistic > res.critical_value)
        assert res.reject == (res.p_value < res.tau)
        assert res.critical_value == pytest.approx(
            dist.chisq_quantile(0.95, res.df_hat))

    def test_degrees_of_freedom_error(self):
        # covariance of rank 2 with a rank-2 nuisance Jacobian leaves no
        # degrees of freedom
        rng = np.random.default_rng(0)
        design = rng.standard_normal((4, 2))
        model = make_linear_model(np.zeros(4), design)
        root = rng.standard_normal((4, 2))
        sigma = root @ root.T
        rf = ReducedFormEstimate(0.01 * rng.standard_normal(4), sigma, 500)
        with pytest.raises(DegreesOfFreedomError):
            robust_test(model, rf, np.zeros(1), 0.05)

    def test_tau_validation(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        for tau in (0.0, 1.0, -0.1):
            with pytest.raises(InvalidArgument):
                robust_test(model, rf, np.array([params.beta]), tau)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        design = rng.standard_normal((5, 2))
        theta0 = rng.standard_normal(5)
        root = rng.standard_normal((5, 5))
        sigma = root @ root.T + 0.5 * np.eye(5)
        theta_hat = theta0 + rng.standard_normal(5) * 0.03
        perm = np.array([3, 0, 4, 1, 2])

        model = make_linear_model(theta0, design)
        rf = ReducedFormEstimate(theta_hat, sigma, 400)
        base = robust_test(model, rf, np.zeros(1), 0.05)

        model_p = make_linear_model(theta0[perm], design[perm])
        rf_p = ReducedFormEstimate(theta_hat[perm], sigma[np.ix_(perm, perm)], 400)
        permuted = robust_test(model_p, rf_p, np.zeros(1), 0.05)

        assert permuted.statistic == pytest.approx(base.statistic, abs=1e-8)
        assert permuted.reject == base.reject
        assert permuted.df_hat == base.df_hat

    def test_null_distribution_ks(self):
        # moderate-size version of the null-distribution property; the
        # acceptance suite runs the full 2000-replication study
        cfg = McConfig(experiment="null-dist", replications=400,
                       sample_sizes=(500,), master_seed=99)
        result = run_null_dist_experiment(cfg)
        row = result.rows[0]
        assert row["ks_statistic"] <= 1.628 / np.sqrt(400)
        assert row["freq_df_correct"] >= 0.95


class TestOracleTest:
    def test_same_statistic_different_critical_value(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        data = entrygame.simulate_data(params, 600, 8)
        rf = entrygame.estimate_reduced_form(data)
        opts = TestOptions(seed=4)
        robust = robust_test(model, rf, np.array([params.beta]), 0.05, opts)
        oracle = oracle_test(model, rf, np.array([params.beta]), 0.05, d=2,
                             opts=opts)
        assert oracle.statistic == pytest.approx(robust.statistic)
        assert oracle.df_hat == 2
        assert oracle.critical_value == pytest.approx(dist.chisq_quantile(0.95, 2))

    def test_d_validation(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        for d in (0, 7):
            with pytest.raises(InvalidArgument):
                oracle_test(model, rf, np.array([params.beta]), 0.05, d=d)

    def test_full_rank_no_nuisance_is_wald_distance(self):
        # with q = 0 and full-rank covariance the statistic is the plain
        # weighted distance, no minimization involved
        rng = np.random.default_rng(1)
        theta0 = rng.standard_normal(3)
        model = make_linear_model(theta0, np.zeros((3, 0)))
        sigma = np.diag([1.0, 2.0, 0.5])
        theta_hat = theta0 + np.array([0.05, -0.02, 0.01])
        rf = ReducedFormEstimate(theta_hat, sigma, 900)
        res = oracle_test(model, rf, np.zeros(1), 0.05, d=3)
        z = theta_hat - theta0
        expected = 900.0 * float(z @ np.linalg.inv(sigma) @ z)
        assert res.statistic == pytest.approx(expected, rel=1e-8)


class TestTTest:
    def test_zero_t_at_exact_fit(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        res = t_test(model, rf, np.array([params.beta]), 0.05)
        assert abs(res.t_stats[0]) <= 1e-3
        assert not res.reject_any
        assert res.std_err[0] > 0.0

    def test_degenerate_flag_under_partial_identification(self):
        params = entrygame.GameParams.unidentified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params, n=1000)
        res = t_test(model, rf, np.array([params.beta]), 0.05)
        assert res.degenerate

    def test_requires_enough_moments(self):
        rng = np.random.default_rng(2)
        model = make_linear_model(np.zeros(2), rng.standard_normal((2, 2)))
        rf = ReducedFormEstimate(np.zeros(2), np.eye(2), 100)
        with pytest.raises(InvalidArgument):
            t_test(model, rf, np.zeros(1), 0.05)


class TestInvertCi:
    def test_degenerate_grid(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        res = invert_ci(model, rf, [params.beta], 0.05)
        assert res.accepted.tolist() == [params.beta]
        assert res.lower == res.upper == params.beta

    def test_true_value_accepted_on_simulated_data(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        data = entrygame.simulate_data(params, 1000, 31)
        rf = entrygame.estimate_reduced_form(data)
        grid = np.linspace(params.beta - 0.8, params.beta + 0.8, 9)
        grid = np.sort(np.append(grid, params.beta))
        res = invert_ci(model, rf, grid, 0.05)
        assert params.beta in res.accepted.tolist()
        assert res.lower <= params.beta <= res.upper
        assert res.p_values.shape == grid.shape

    def test_uninformative_direction_accepts_everything(self):
        # beta does not enter the map, so no grid point can be rejected
        rng = np.random.default_rng(3)
        design = rng.standard_normal((4, 1))
        model = make_linear_model(np.zeros(4), design,
                                  design_beta=np.zeros((4, 1)))
        theta_hat = design[:, 0] * 0.2 + 0.02 * rng.standard_normal(4)
        rf = ReducedFormEstimate(theta_hat, np.eye(4), 400)
        res = invert_ci(model, rf, np.linspace(-3.0, 3.0, 7), 0.05)
        assert res.accepted.size == 7

    def test_scalar_beta_only(self):
        rng = np.random.default_rng(4)
        model = make_linear_model(np.zeros(5), rng.standard_normal((5, 1)),
                                  design_beta=rng.standard_normal((5, 2)))
        rf = ReducedFormEstimate(np.zeros(5), np.eye(5), 200)
        with pytest.raises(InvalidArgument):
            invert_ci(model, rf, [(0.0, 0.0)], 0.05)

    def test_empty_grid_rejected(self):
        params = entrygame.GameParams.identified()
        model = entrygame.build_model()
        rf = fixed_point_rf(params)
        with pytest.raises(InvalidArgument):
            invert_ci(model, rf, [], 0.05)


def test_pipeline_reports_min_singular_value():
    params = entrygame.GameParams.identified()
    model = entrygame.build_model()
    rf = fixed_point_rf(params)
    state = run_pipeline(model, rf, np.array([params.beta]))
    assert 0.0 < state.min_singular_imdg < 2.0


def test_pipeline_warns_on_extreme_scale():
    rng = np.random.default_rng(5)
    design = rng.standard_normal((3, 1))
    model = make_linear_model(np.zeros(3), design)
    rf = ReducedFormEstimate(np.zeros(3), 1e6 * np.eye(3), 100)
    state = run_pipeline(model, rf, np.zeros(1))
    assert any("scale" in w for w in state.warnings)
