"""Simulation, stage costs, coupled-oracle regret, and determinism."""
import numpy as np
import pytest

from lqac import (
    AlgoConfig,
    SystemParams,
    average_regret,
    optimal_average_cost,
    run_adaptive,
    solve_dare,
    stage_cost,
    step_system,
)
from lqac.errors import DimensionMismatch, HorizonExceeded


class TestStepSystem:
    def test_pure_noise(self, stable_params):
        e1 = np.array([1.0, 0.0])
        out = step_system(stable_params, np.zeros(2), np.zeros(1), e1)
        assert np.allclose(out, e1)

    def test_identity_dynamics(self):
        params = SystemParams(A=np.eye(2), B=np.zeros((2, 1)), Q=np.eye(2), R=[[1.0]])
        out = step_system(params, [1.0, 0.0], [0.0], np.zeros(2))
        assert np.allclose(out, [1.0, 0.0])

    def test_stable_system_hand_value(self, stable_params):
        out = step_system(stable_params, [1.0, 1.0], [1.0], np.zeros(2))
        assert np.allclose(out, [0.9, 1.8])

    def test_dimension_check(self, stable_params):
        with pytest.raises(DimensionMismatch):
            step_system(stable_params, np.zeros(3), np.zeros(1), np.zeros(2))


class TestStageCost:
    def test_zero(self, stable_params):
        assert stage_cost(stable_params, np.zeros(2), np.zeros(1)) == 0.0

    def test_hand_value(self, stable_params):
        assert stage_cost(stable_params, [3.0, 4.0], [2.0]) == pytest.approx(29.0)

    def test_unstable_costs(self, unstable_params):
        got = stage_cost(unstable_params, np.ones(3), np.ones(3))
        assert got == pytest.approx(33.0)

    def test_nonnegative(self, stable_params):
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert stage_cost(stable_params, rng.standard_normal(2), rng.standard_normal(1)) >= 0


class TestOptimalAverageCost:
    def test_identity_p(self, stable_params):
        sol = solve_dare(stable_params)
        fake = type(sol)(P=np.eye(2), K=sol.K, residual=0.0)
        assert optimal_average_cost(stable_params, fake) == pytest.approx(2.0)

    def test_zero_sigma(self, stable_params):
        quiet = SystemParams(
            A=stable_params.A, B=stable_params.B, Q=stable_params.Q, R=stable_params.R, sigma=0.0
        )
        sol = solve_dare(quiet)
        assert optimal_average_cost(quiet, sol) == 0.0

    def test_long_run_oracle(self, stable_params, mc_full):
        from lqac import _engine

        sol = solve_dare(stable_params)
        T = 1_000_000 if (mc_full and _engine.HAVE_NUMBA) else 100_000
        rng = np.random.default_rng(5)
        eps = stable_params.sigma * rng.standard_normal((T + 1, 2))
        if _engine.HAVE_NUMBA:
            _, _, costs = _engine.simulate_oracle(
                stable_params.A, stable_params.B, stable_params.Q, stable_params.R,
                sol.K, np.zeros(2), eps,
            )
            avg = costs[1:].mean()
        else:
            x = np.zeros(2)
            total = 0.0
            for t in range(T):
                u = sol.K @ x
                if t >= 1:
                    total += stage_cost(stable_params, x, u)
                x = step_system(stable_params, x, u, eps[t])
            avg = total / (T - 1)
        assert avg == pytest.approx(optimal_average_cost(stable_params, sol), rel=0.02)


class TestRunRecord:
    def test_regret_zero_when_pinned_to_optimum(self, stable_params):
        # tau = 0 plus a state threshold below any reachable norm resets the
        # gain to K0 = K every step, so the adaptive run coincides with the
        # coupled oracle exactly
        sol = solve_dare(stable_params)
        config = AlgoConfig(
            beta=0.5, alpha=2.0, tau=0.0, C_x=1e-12, C_K=10.0, K0=sol.K,
            horizon=200, seed=3,
        )
        rec = run_adaptive(stable_params, config, engine="numpy")
        assert np.allclose(rec.xs, rec.xs_opt, atol=1e-12)
        for T in (1, 50, 200):
            assert average_regret(rec, T) == pytest.approx(0.0, abs=1e-12)

    def test_single_step_regret_matches_direct_recount(self, stable_params, stable_config):
        rec = run_adaptive(stable_params, stable_config)
        direct = rec.costs[1] - rec.costs_opt[1]
        assert average_regret(rec, 1) == pytest.approx(direct)
        T = stable_config.horizon
        direct_T = (np.sum(rec.costs[1 : T + 1]) - np.sum(rec.costs_opt[1 : T + 1])) / T
        assert average_regret(rec, T) == pytest.approx(direct_T)

    def test_horizon_guard(self, stable_params, stable_config):
        rec = run_adaptive(stable_params, stable_config)
        with pytest.raises(HorizonExceeded):
            average_regret(rec, stable_config.horizon + 1)
        with pytest.raises(HorizonExceeded):
            average_regret(rec, 0)

    def test_coupling_shares_noise(self, stable_params, stable_config):
        rec = run_adaptive(stable_params, stable_config)
        # both trajectories satisfy the recursion against the same eps
        for t in range(stable_config.horizon):
            lhs = rec.xs[t + 1]
            rhs = stable_params.A @ rec.xs[t] + stable_params.B @ rec.us[t] + rec.epss[t]
            assert np.allclose(lhs, rhs, atol=1e-10)
            lhs_o = rec.xs_opt[t + 1]
            rhs_o = (
                stable_params.A @ rec.xs_opt[t]
                + stable_params.B @ rec.us_opt[t]
                + rec.epss[t]
            )
            assert np.allclose(lhs_o, rhs_o, atol=1e-10)

    def test_stage_cost_identity(self, stable_params, stable_config):
        rec = run_adaptive(stable_params, stable_config)
        for t in (0, 1, 57, stable_config.horizon):
            expected = stage_cost(stable_params, rec.xs[t], rec.us[t])
            assert rec.costs[t] == pytest.approx(expected, rel=1e-12)

    def test_determinism_bit_identical(self, stable_params, stable_config):
        rec1 = run_adaptive(stable_params, stable_config, checkpoints=[300])
        rec2 = run_adaptive(stable_params, stable_config, checkpoints=[300])
        assert np.array_equal(rec1.xs, rec2.xs)
        assert np.array_equal(rec1.us, rec2.us)
        assert np.array_equal(rec1.costs, rec2.costs)
        s1, s2 = rec1.checkpoints[0], rec2.checkpoints[0]
        assert np.array_equal(s1.A_hat, s2.A_hat)
        assert np.array_equal(s1.gram, s2.gram)

    def test_steps_view(self, stable_params, stable_config):
        rec = run_adaptive(stable_params, stable_config)
        steps = rec.steps
        assert len(steps) == stable_config.horizon + 1
        assert steps[5].t == 5
        assert np.allclose(steps[5].x, rec.xs[5])
        opt = rec.optimal_steps
        assert np.allclose(opt[5].eps, rec.epss[5])
