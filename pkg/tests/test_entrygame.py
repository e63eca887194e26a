import numpy as np
import pytest

from robustmd import entrygame
from robustmd.entrygame import (
    GameParams,
    estimate_reduced_form,
    game_g,
    game_jac_alpha,
    game_jac_beta,
    game_jac_theta,
    simulate_data,
    solve_equilibrium,
)
from robustmd.errors import EquilibriumError, InsufficientData, InvalidArgument


def fd_jacobian(fn, x, step=1e-6):
    cols = []
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        cols.append((fn(hi) - fn(lo)) / (2.0 * step))
    return np.column_stack(cols)


class TestGameParams:
    def test_state_ordering_enforced(self):
        with pytest.raises(InvalidArgument):
            GameParams(beta=1.0, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                       states=(2.0, 1.0, 3.0))
        with pytest.raises(InvalidArgument):
            GameParams(beta=1.0, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                       state_probs=(0.5, 0.5, 0.2))

    def test_benchmarks(self):
        ident = GameParams.identified()
        unident = GameParams.unidentified()
        assert ident.beta == 1.5
        assert unident.beta == 0.3
        assert unident.alpha1 == -unident.beta
        assert unident.alpha3 == -unident.alpha2


class TestGameMap:
    def test_zero_payoffs(self):
        out = game_g(np.full(6, 0.5), np.zeros(3), 0.0)
        np.testing.assert_allclose(out, np.full(6, 0.5), atol=1e-15)

    def test_degenerate_rival_beliefs(self):
        # when firm 2 is believed to always enter, firm 1 faces only the
        # duopoly payoff
        from robustmd import dist
        theta = np.array([0.3, 0.3, 0.3, 1.0, 1.0, 1.0])
        alpha = np.array([0.7, 0.2, -0.1])
        states = entrygame.DEFAULT_STATES
        out = game_g(theta, alpha, 0.9, states)
        expected = dist.normal_cdf(np.asarray(states) * 0.7)
        np.testing.assert_allclose(out[:3], expected, atol=1e-14)


class TestEquilibrium:
    def test_zero_payoff_fixed_point(self):
        params = GameParams(beta=0.0, alpha1=0.0, alpha2=0.0, alpha3=0.0)
        eq = solve_equilibrium(params)
        np.testing.assert_allclose(eq.theta, np.full(6, 0.5), atol=1e-12)

    def test_residual_contract(self):
        for params in (GameParams.identified(), GameParams.unidentified()):
            eq = solve_equilibrium(params)
            resid = np.max(np.abs(eq.theta - game_g(eq.theta, params.alpha,
                                                    params.beta, params.states)))
            assert resid <= 1e-12

    def test_unidentified_benchmark_sits_at_one_half(self):
        # alpha1 = -beta and alpha3 = -alpha2 cancel every payoff argument
        # at theta = 1/2, which is therefore an exact fixed point
        eq = solve_equilibrium(GameParams.unidentified())
        np.testing.assert_allclose(eq.theta, np.full(6, 0.5), atol=1e-13)

    def test_nonconvergence_reported(self):
        # undamped iteration with a strong negative feedback loop cycles
        # when started away from the fixed point
        params = GameParams(beta=-6.0, alpha1=6.0, alpha2=8.0, alpha3=-8.0,
                            states=(1.0, 2.0, 3.0))
        with pytest.raises(EquilibriumError) as err:
            solve_equilibrium(params, theta_init=np.full(6, 0.3),
                              damping=1.0, max_iter=60)
        assert err.value.trajectory_tail is not None

    def test_bad_init_rejected(self):
        with pytest.raises(InvalidArgument):
            solve_equilibrium(GameParams.identified(), theta_init=np.full(6, 1.5))

    def test_firm_swap_symmetry(self):
        # relabeling the firms while swapping (beta, alpha1) with
        # (alpha2, alpha3) swaps the two belief blocks
        params = GameParams(beta=1.1, alpha1=-0.4, alpha2=0.6, alpha3=-0.9)
        swapped = GameParams(beta=0.6, alpha1=-0.9, alpha2=1.1, alpha3=-0.4)
        eq = solve_equilibrium(params)
        eq_swapped = solve_equilibrium(swapped)
        np.testing.assert_allclose(eq_swapped.theta[:3], eq.theta[3:], atol=1e-11)
        np.testing.assert_allclose(eq_swapped.theta[3:], eq.theta[:3], atol=1e-11)


class TestJacobians:
    def test_rank_two_exactly_at_one_half(self):
        params = GameParams.unidentified()
        theta = np.full(6, 0.5)
        jac = game_jac_alpha(theta, params.alpha, params.beta, params.states)
        singular = np.linalg.svd(jac, compute_uv=False)
        assert singular[2] <= 1e-10
        assert singular[1] > 1e-3

    def test_rank_three_at_identified_benchmark(self):
        params = GameParams.identified()
        eq = solve_equilibrium(params)
        jac = game_jac_alpha(eq.theta, params.alpha, params.beta, params.states)
        singular = np.linalg.svd(jac, compute_uv=False)
        assert singular[2] > 1e-2

    def test_rank_deficiency_tracks_one_half_condition(self):
        params = GameParams.identified()
        rng = np.random.default_rng(0)
        for _ in range(20):
            theta = rng.uniform(0.1, 0.9, 6)
            jac = game_jac_alpha(theta, params.alpha, params.beta, params.states)
            s3 = np.linalg.svd(jac, compute_uv=False)[2]
            at_half = np.max(np.abs(theta[:3] - 0.5)) <= 1e-8
            assert (s3 <= 1e-8) == at_half

    @pytest.mark.parametrize("which", ["alpha", "theta", "beta"])
    def test_closed_forms_match_finite_differences(self, which):
        params = GameParams.identified()
        states = params.states
        rng = np.random.default_rng(1)
        for _ in range(10):
            theta = rng.uniform(0.15, 0.85, 6)
            alpha = rng.uniform(-1.2, 1.2, 3)
            beta = float(rng.uniform(-0.5, 2.0))
            if which == "alpha":
                got = game_jac_alpha(theta, alpha, beta, states)
                ref = fd_jacobian(lambda a: game_g(theta, a, beta, states), alpha)
            elif which == "theta":
                got = game_jac_theta(theta, alpha, beta, states)
                ref = fd_jacobian(lambda t: game_g(t, alpha, beta, states), theta)
            else:
                got = game_jac_beta(theta, alpha, beta, states)
                ref = fd_jacobian(
                    lambda b: game_g(theta, alpha, b[0], states),
                    np.array([beta]))
            assert np.max(np.abs(got - ref)) <= 1e-6


class TestSimulation:
    def test_deterministic_given_seed(self):
        params = GameParams.identified()
        a = simulate_data(params, 400, 7)
        b = simulate_data(params, 400, 7)
        assert np.array_equal(a.state_index, b.state_index)
        assert np.array_equal(a.action1, b.action1)
        assert np.array_equal(a.action2, b.action2)
        c = simulate_data(params, 400, 8)
        assert not np.array_equal(a.action1, c.action1)

    def test_zero_payoff_entry_frequency(self):
        params = GameParams(beta=0.0, alpha1=0.0, alpha2=0.0, alpha3=0.0)
        n = 4000
        data = simulate_data(params, n, 3)
        bound = 3.0 / np.sqrt(n)
        assert abs(data.action1.mean() - 0.5) <= bound
        assert abs(data.action2.mean() - 0.5) <= bound

    def test_cell_frequencies_near_equilibrium(self):
        params = GameParams.identified()
        eq = solve_equilibrium(params)
        n = 6000
        data = simulate_data(params, n, 11)
        for s in range(3):
            mask = data.state_index == s
            n_s = mask.sum()
            for firm, actions in ((0, data.action1), (1, data.action2)):
                theta = eq.theta[3 * firm + s]
                bound = 4.0 * np.sqrt(theta * (1 - theta) / n_s)
                assert abs(actions[mask].mean() - theta) <= bound

    def test_row_export(self):
        data = simulate_data(GameParams.identified(), 5, 1)
        rows = list(data.to_rows())
        assert len(rows) == 5
        assert all(len(r) == 4 for r in rows)
        assert all(r[1] in (1, 2, 3) for r in rows)


class TestReducedForm:
    def test_hand_computed_variance(self):
        # theta = 1/2 and equal state shares give 0.25 / (1/3) on the diagonal
        state_index = np.repeat([0, 1, 2], 40)
        a1 = np.tile([0, 1], 60)
        a2 = np.tile([1, 0], 60)
        data = entrygame.GameDataset(state_index=state_index,
                                     action1=a1, action2=a2)
        rf = estimate_reduced_form(data)
        np.testing.assert_allclose(np.diag(rf.sigma_hat)[:3],
                                   0.25 / (1.0 / 3.0), atol=1e-12)
        assert rf.n == 120

    def test_sparse_state_rejected(self):
        data = entrygame.GameDataset(
            state_index=np.array([0] * 50 + [1] * 50 + [2] * 3),
            action1=np.zeros(103, dtype=np.int8),
            action2=np.zeros(103, dtype=np.int8),
        )
        with pytest.raises(InsufficientData):
            estimate_reduced_form(data)

    def test_degenerate_cell_warns(self):
        data = entrygame.GameDataset(
            state_index=np.repeat([0, 1, 2], 20),
            action1=np.ones(60, dtype=np.int8),
            action2=np.ones(60, dtype=np.int8),
        )
        with pytest.warns(RuntimeWarning):
            rf = estimate_reduced_form(data)
        np.testing.assert_allclose(rf.theta_hat, np.ones(6))
        np.testing.assert_allclose(rf.sigma_hat, np.zeros((6, 6)))

    def test_coordinate_concentration(self):
        params = GameParams.identified()
        eq = solve_equilibrium(params)
        n = 5000
        data = simulate_data(params, n, 21)
        rf = estimate_reduced_form(data)
        for i in range(6):
            sd = np.sqrt(rf.sigma_hat[i, i] / n)
            assert abs(rf.theta_hat[i] - eq.theta[i]) <= 5.0 * sd
