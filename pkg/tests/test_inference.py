"""Chi-square machinery and the confidence/prediction region statistics."""
import math
from types import SimpleNamespace

import numpy as np
import pytest

from lqac import (
    SystemParams,
    ab_confidence_region,
    ab_region_statistic,
    chi2_cdf,
    chi2_quantile,
    k_region_statistic,
    mean_prediction_statistic,
    parametric_prediction_variance,
    prediction_region_statistic,
    solve_dare,
)
from lqac.errors import DomainError, NotStabilizable, SingularGram, SingularWeight

# frozen oracle values: dof=2 is -2 ln(0.05) in closed form, dof=1 is the
# squared 0.975 normal quantile, dof=6 from an independent numeric inversion
CHI2_95 = {1: 3.841458820694124, 2: 5.991464547107979, 6: 12.591587243743977}


class TestChi2:
    def test_frozen_quantiles(self):
        for dof, want in CHI2_95.items():
            assert chi2_quantile(dof, 0.95) == pytest.approx(want, abs=1e-9)

    def test_round_trip(self):
        for dof in range(1, 13):
            for p in (0.5, 0.9, 0.95, 0.99):
                x = chi2_quantile(dof, p)
                assert chi2_cdf(x, dof) == pytest.approx(p, abs=1e-8)

    def test_against_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        for dof in (1, 2, 3, 6, 9, 20, 50):
            for p in (0.01, 0.25, 0.5, 0.9, 0.95, 0.999):
                want = scipy_stats.chi2.ppf(p, dof)
                assert chi2_quantile(dof, p) == pytest.approx(want, rel=1e-9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            chi2_quantile(0, 0.5)
        with pytest.raises(DomainError):
            chi2_quantile(2, 0.0)
        with pytest.raises(DomainError):
            chi2_quantile(2, 1.0)

    def test_threshold_monotone_in_level(self):
        # membership at 0.95 implies membership at 0.99
        for dof in (1, 2, 6):
            assert chi2_quantile(dof, 0.95) < chi2_quantile(dof, 0.99)


def _toy_state(A_hat, B_hat, K_hat=None, A_prev=None, B_prev=None):
    return SimpleNamespace(
        A_hat=np.asarray(A_hat, float),
        B_hat=np.asarray(B_hat, float),
        K_hat=None if K_hat is None else np.asarray(K_hat, float),
        A_hat_prev=np.asarray(A_hat if A_prev is None else A_prev, float),
        B_hat_prev=np.asarray(B_hat if B_prev is None else B_prev, float),
    )


@pytest.fixture()
def spd_gram():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((60, 3))
    return Z.T @ Z


class TestAbRegion:
    def test_truth_gives_zero(self, stable_params, spd_gram):
        state = _toy_state(stable_params.A, stable_params.B)
        out = ab_region_statistic(state, spd_gram, stable_params.A, stable_params.B, 1.0)
        assert out.statistic == 0.0
        assert out.covered

    def test_threshold_dof6(self, stable_params, spd_gram):
        state = _toy_state(stable_params.A, stable_params.B)
        out = ab_region_statistic(state, spd_gram, stable_params.A, stable_params.B, 1.0)
        assert out.threshold == pytest.approx(CHI2_95[6], abs=1e-9)

    def test_region_object_agrees(self, stable_params, spd_gram):
        state = _toy_state(stable_params.A + 0.01, stable_params.B - 0.02)
        region = ab_confidence_region(state, spd_gram, sigma=1.0, level=0.95)
        truth = np.hstack([stable_params.A, stable_params.B])
        out = ab_region_statistic(state, spd_gram, stable_params.A, stable_params.B, 1.0)
        assert region.statistic(truth) == pytest.approx(out.statistic, rel=1e-12)
        assert region.contains(truth) == out.covered


class TestKRegion:
    def test_truth_gives_zero(self, stable_params, stable_sol, spd_gram):
        state = _toy_state(stable_params.A, stable_params.B, K_hat=stable_sol.K)
        out = k_region_statistic(
            state, spd_gram, stable_sol.K, 1.0, stable_params.Q, stable_params.R
        )
        assert out.statistic == pytest.approx(0.0, abs=1e-12)
        assert out.threshold == pytest.approx(CHI2_95[2], abs=1e-9)

    def test_rejects_unstabilizable_estimates(self, stable_params, stable_sol, spd_gram):
        state = _toy_state(
            stable_params.A, stable_params.B, K_hat=stable_sol.K,
            A_prev=2 * np.eye(2), B_prev=np.zeros((2, 1)),
        )
        with pytest.raises(NotStabilizable):
            k_region_statistic(
                state, spd_gram, stable_sol.K, 1.0, stable_params.Q, stable_params.R
            )

    def test_singular_gram_raises(self, stable_params, stable_sol):
        state = _toy_state(stable_params.A, stable_params.B, K_hat=stable_sol.K)
        with pytest.raises(SingularWeight):
            k_region_statistic(
                state, np.zeros((3, 3)), stable_sol.K, 1.0,
                stable_params.Q, stable_params.R,
            )


class TestPredictionRegions:
    def test_exact_prediction_gives_zero(self, stable_params, spd_gram):
        state = _toy_state(stable_params.A, stable_params.B)
        x = np.array([0.3, -0.4])
        u = np.array([0.2])
        x_next = state.A_hat @ x + state.B_hat @ u
        for naive in (False, True):
            out = prediction_region_statistic(
                state, spd_gram, x, u, x_next, 1.0, naive=naive
            )
            assert out.statistic == 0.0
            assert out.covered

    def test_full_never_exceeds_naive(self, stable_params, spd_gram):
        rng = np.random.default_rng(5)
        state = _toy_state(stable_params.A + 0.05, stable_params.B)
        for _ in range(50):
            x = rng.standard_normal(2)
            u = rng.standard_normal(1)
            x_next = rng.standard_normal(2)
            full = prediction_region_statistic(state, spd_gram, x, u, x_next, 1.0, naive=False)
            naive = prediction_region_statistic(state, spd_gram, x, u, x_next, 1.0, naive=True)
            assert full.statistic <= naive.statistic + 1e-12

    def test_singular_gram(self, stable_params):
        state = _toy_state(stable_params.A, stable_params.B)
        with pytest.raises(SingularGram):
            prediction_region_statistic(
                state, np.zeros((3, 3)), np.ones(2), np.ones(1), np.ones(2), 1.0
            )

    def test_mean_prediction_zero_at_truth(self, stable_params, spd_gram):
        state = _toy_state(stable_params.A, stable_params.B)
        out = mean_prediction_statistic(
            state, spd_gram, np.ones(2), np.ones(1), stable_params.A, stable_params.B, 1.0
        )
        assert out.statistic == 0.0

    def test_mean_prediction_rotation_equivariance(self, stable_params, spd_gram):
        # a simultaneous orthogonal change of state basis leaves the
        # statistic unchanged
        rng = np.random.default_rng(7)
        state = _toy_state(stable_params.A + 0.03, stable_params.B - 0.01)
        x = rng.standard_normal(2)
        u = rng.standard_normal(1)
        theta = 0.7
        U = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        T = np.zeros((3, 3))
        T[:2, :2] = U
        T[2, 2] = 1.0
        base = mean_prediction_statistic(
            state, spd_gram, x, u, stable_params.A, stable_params.B, 1.0
        )
        rot_state = _toy_state(U @ state.A_hat @ U.T, U @ state.B_hat)
        rot = mean_prediction_statistic(
            rot_state,
            T @ spd_gram @ T.T,
            U @ x,
            u,
            U @ stable_params.A @ U.T,
            U @ stable_params.B,
            1.0,
        )
        assert rot.statistic == pytest.approx(base.statistic, rel=1e-9)


class TestParametricPredictionVariance:
    def test_scalar_zero_loop(self):
        # A = 0, B = 1: K = 0 is not the gain... use A = 0, B = 1 with Q=R=1
        params = SystemParams(A=[[0.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], sigma=1.0)
        sol = solve_dare(params)
        assert np.allclose(sol.K, 0.0)
        cfgd = SimpleNamespace(beta=0.5, alpha=2.0, tau=1.0)
        t = 100
        x = np.array([0.7])
        w = np.array([0.3])
        V = parametric_prediction_variance(params, sol, cfgd, x, w, t)
        want = (0.7**2 + 0.5 * 0.3**2) / t
        assert V[0, 0] == pytest.approx(want, abs=1e-12)

    def test_degenerate_inputs_warn(self, stable_params, stable_sol):
        cfgd = SimpleNamespace(beta=0.5, alpha=2.0, tau=1.0)
        with pytest.warns(UserWarning):
            V = parametric_prediction_variance(
                stable_params, stable_sol, cfgd, np.zeros(2), np.zeros(1), 10
            )
        assert np.allclose(V, 0.0)

    def test_beta_one_variant_adds_input_term(self, stable_params, stable_sol):
        base = SimpleNamespace(beta=1.0, alpha=-1.0, tau=2.0)
        full = SimpleNamespace(beta=1.0, alpha=0.0, tau=2.0)
        x = np.array([1.0, 1.0])
        w = np.array([0.0])
        t = 50
        v_base = parametric_prediction_variance(stable_params, stable_sol, base, x, w, t)
        v_full = parametric_prediction_variance(stable_params, stable_sol, full, x, w, t)
        # the extra BB' term inflates X1, shrinking the x-quadratic part
        assert v_full[0, 0] < v_base[0, 0]
