"""Stepwise noisy certainty-equivalent adaptive controller.

Recursive least squares over (x, u) -> x', certainty-equivalent gain with
safety resets, tunable exploration-noise schedule, a logarithmic-update
variant, and a Thompson-sampling baseline with an oracle-centered prior.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import CheckpointSnapshot, RunRecord
from .errors import DimensionMismatch, NoConvergence, UnstableK0
from .lqr import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SystemParams,
    _dare_iterate,
    is_stabilizable,
    optimal_gain,
    solve_dare,
    spectral_radius,
)

INV_REFRESH_EVERY = 256
INV_COND_GATE = 1e-8


@dataclass(frozen=True)
class Stepwise:
    """Recompute the gain at every step t >= 2."""


@dataclass(frozen=True)
class Logarithmic:
    """Recompute the gain only at times 2, ceil(c*2), ceil(c*ceil(c*2)), ..."""

    ratio: float = 2.0

    def __post_init__(self):
        if not self.ratio > 1.0:
            raise ValueError("logarithmic schedule needs ratio > 1")


Schedule = Stepwise | Logarithmic


@dataclass(frozen=True)
class AlgoConfig:
    """Inputs of the adaptive controller.

    ``beta`` in [1/2, 1] tunes the exploration-noise decay (variance
    tau^2 t^{beta-1} log^alpha t); ``alpha`` must exceed 3/2 when beta = 1/2
    and be <= 0 when beta = 1. Values of beta below 1/2 are accepted for
    exploratory runs but carry no guarantees (a warning is issued).
    ``conjectural_updates`` switches to the unproven variant that uses all
    transitions through the current state and drops the safety reset.
    """

    beta: float
    alpha: float
    tau: float
    C_x: float
    C_K: float
    K0: np.ndarray
    horizon: int
    seed: int
    schedule: Schedule = Stepwise()
    conjectural_updates: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.beta < 0.5:
            warnings.warn(
                f"beta={self.beta} < 1/2 is outside the guaranteed range",
                stacklevel=2,
            )
        if self.beta == 0.5 and not self.alpha > 1.5:
            raise ValueError("beta = 1/2 requires alpha > 3/2")
        if self.beta == 1.0 and self.alpha > 0:
            raise ValueError("beta = 1 requires alpha <= 0")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.C_x <= 0 or self.C_K <= 0:
            raise ValueError("C_x and C_K must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        K0 = np.atleast_2d(np.asarray(self.K0, dtype=float))
        object.__setattr__(self, "K0", K0)

    @property
    def d(self) -> int:
        return self.K0.shape[0]

    @property
    def n(self) -> int:
        return self.K0.shape[1]


class EstimatorState:
    """Running Gram/cross moments and the current least-squares estimates.

    ``gram`` accumulates z_i z_i' over the ingested transitions and ``theta``
    holds [A_hat, B_hat] solving the normal equations (minimum-norm via
    pseudo-inverse while the Gram matrix is singular). ``t`` equals the number
    of ingested transitions, which is also the subscript of the current
    estimates. ``theta_prev`` keeps the estimates from before the most recent
    update, as the gain at step t is computed from the time-(t-1) estimates.
    """

    def __init__(self, n: int, d: int):
        self.n = n
        self.d = d
        p = n + d
        self.gram = np.zeros((p, p))
        self.cross = np.zeros((n, p))
        self.gram_inv: np.ndarray | None = None
        self.theta = np.zeros((n, p))
        self.theta_prev = np.zeros((n, p))
        self.K_hat = np.zeros((d, n))
        self.t = 0
        self.reset_count = 0
        self.fallback_count = 0
        self.sum_sq_next = 0.0
        self._P_warm: np.ndarray | None = None
        self._since_refresh = 0

    @property
    def A_hat(self) -> np.ndarray:
        return self.theta[:, : self.n]

    @property
    def B_hat(self) -> np.ndarray:
        return self.theta[:, self.n :]

    @property
    def A_hat_prev(self) -> np.ndarray:
        return self.theta_prev[:, : self.n]

    @property
    def B_hat_prev(self) -> np.ndarray:
        return self.theta_prev[:, self.n :]

    def copy(self) -> "EstimatorState":
        other = EstimatorState(self.n, self.d)
        other.gram = self.gram.copy()
        other.cross = self.cross.copy()
        other.gram_inv = None if self.gram_inv is None else self.gram_inv.copy()
        other.theta = self.theta.copy()
        other.theta_prev = self.theta_prev.copy()
        other.K_hat = self.K_hat.copy()
        other.t = self.t
        other.reset_count = self.reset_count
        other.fallback_count = self.fallback_count
        other.sum_sq_next = self.sum_sq_next
        other._P_warm = None if self._P_warm is None else self._P_warm.copy()
        other._since_refresh = self._since_refresh
        return other


def init(config: AlgoConfig, x0: np.ndarray, w0: np.ndarray) -> tuple[EstimatorState, np.ndarray]:
    """Fresh estimator plus the warm-up input u_0 = K0 x0 + tau w0."""
    return EstimatorState(config.n, config.d), warmup_input(config, x0, w0)


def warmup_input(config: AlgoConfig, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Warm-up control law used at t = 0 and t = 1."""
    return config.K0 @ np.asarray(x, dtype=float) + config.tau * np.asarray(w, dtype=float)


def rls_update(state: EstimatorState, z: np.ndarray, x_next: np.ndarray) -> EstimatorState:
    """Ingest one transition (z = [x; u], x_next) and refresh the estimates."""
    z = np.asarray(z, dtype=float).reshape(-1)
    x_next = np.asarray(x_next, dtype=float).reshape(-1)
    p = state.n + state.d
    if z.shape != (p,) or x_next.shape != (state.n,):
        raise DimensionMismatch(f"expected z: {p}, x_next: {state.n}")
    state.gram += np.outer(z, z)
    state.cross += np.outer(x_next, z)
    state.sum_sq_next += float(x_next @ x_next)
    state.theta_prev = state.theta
    if state.gram_inv is None:
        # engage the rank-one inverse chain only once the Gram matrix is
        # decently conditioned; a near-singular start poisons the recursion
        eig = np.linalg.eigvalsh(state.gram)
        if eig[0] > INV_COND_GATE * eig[-1]:
            state.gram_inv = np.linalg.inv(state.gram)
            state.theta = state.cross @ state.gram_inv
        else:
            state.theta = state.cross @ np.linalg.pinv(state.gram)
    else:
        gz = state.gram_inv @ z
        state.gram_inv = state.gram_inv - np.outer(gz, gz) / (1.0 + z @ gz)
        state._since_refresh += 1
        if state._since_refresh >= INV_REFRESH_EVERY:
            state.gram_inv = np.linalg.inv(state.gram)
            state._since_refresh = 0
        state.theta = state.cross @ state.gram_inv
    state.t += 1
    return state


def exploration_noise(config: AlgoConfig, t: int, w: np.ndarray) -> np.ndarray:
    """eta_t = tau sqrt(t^{beta-1} log^alpha t) w_t, with factor 1 at t in {0, 1}."""
    return exploration_scale(config, t) * np.asarray(w, dtype=float)


def exploration_scale(config: AlgoConfig, t: int) -> float:
    if t < 2:
        return config.tau
    return config.tau * math.sqrt(t ** (config.beta - 1.0) * math.log(t) ** config.alpha)


def _certainty_equivalent_gain(state: EstimatorState, Q, R) -> np.ndarray | None:
    """DARE gain at the current estimates, or None when not solvable."""
    n = state.n
    A_hat, B_hat = state.theta[:, :n], state.theta[:, n:]
    if not is_stabilizable(A_hat, B_hat):
        return None
    P0 = state._P_warm if state._P_warm is not None else Q
    P, _, ok = _dare_iterate(A_hat, B_hat, Q, R, P0, DEFAULT_TOL, DEFAULT_MAX_ITER)
    if not ok:
        return None
    state._P_warm = P
    return optimal_gain(A_hat, B_hat, R, P)


def compute_gain(
    state: EstimatorState,
    config: AlgoConfig,
    Q: np.ndarray,
    R: np.ndarray,
    x: np.ndarray,
    t: int,
) -> np.ndarray:
    """Certainty-equivalent gain with the safety reset applied.

    The candidate gain comes from the DARE at the current estimates when they
    pass the Hautus test (else K0); it is then reset to K0 whenever
    ||x_t|| > C_x log(t) or its operator norm exceeds C_K. Numerical DARE
    failures are routed to K0 like non-stabilizable estimates.
    """
    candidate = _certainty_equivalent_gain(state, Q, R)
    if candidate is None:
        state.fallback_count += 1
        candidate = config.K0
    K_hat = candidate
    if not config.conjectural_updates:
        if (
            np.linalg.norm(x) > config.C_x * math.log(t)
            or np.linalg.norm(candidate, 2) > config.C_K
        ):
            K_hat = config.K0
            state.reset_count += 1
    state.K_hat = K_hat
    return K_hat


def _update_times(schedule: Schedule, horizon: int) -> set[int] | None:
    """Gain-update times; None means every step."""
    if isinstance(schedule, Stepwise):
        return None
    times = set()
    t = 2
    while t <= horizon:
        times.add(t)
        t = math.ceil(schedule.ratio * t)
    return times


def _run_streams(config: AlgoConfig, n: int, d: int, sigma: float):
    """Independent counter-based substreams for eps, w, and Thompson draws."""
    root = np.random.SeedSequence(config.seed)
    eps_ss, w_ss, ts_ss = root.spawn(3)
    T = config.horizon
    eps = sigma * np.random.Generator(np.random.Philox(eps_ss)).standard_normal((T + 1, n))
    w = np.random.Generator(np.random.Philox(w_ss)).standard_normal((T + 1, d))
    ts_rng = np.random.Generator(np.random.Philox(ts_ss))
    return eps, w, ts_rng


def run_adaptive(
    params: SystemParams,
    config: AlgoConfig,
    x0: np.ndarray | None = None,
    checkpoints: list[int] | None = None,
    engine: str = "auto",
) -> RunRecord:
    """Run the adaptive controller for config.horizon steps.

    The record includes a coupled optimal-controller trajectory driven by the
    identical noise realization, and estimator snapshots at ``checkpoints``.
    ``engine`` selects the loop implementation: "numpy" (reference), "fast"
    (numba-compiled), or "auto".
    """
    return _dispatch(params, config, x0, checkpoints, thompson=False, engine=engine)


def run_thompson(
    params: SystemParams,
    config: AlgoConfig,
    x0: np.ndarray | None = None,
    checkpoints: list[int] | None = None,
    engine: str = "auto",
) -> RunRecord:
    """Thompson-sampling baseline with the oracle-centered prior N(vec[A,B], I).

    At each step the dynamics are drawn from the Gaussian posterior and
    plugged into the DARE; the safety reset still applies. This baseline uses
    the true parameters in its prior mean, exactly as published, so it is for
    comparison only.
    """
    return _dispatch(params, config, x0, checkpoints, thompson=True, engine=engine)


def _dispatch(params, config, x0, checkpoints, thompson, engine) -> RunRecord:
    from . import _engine

    if engine not in ("auto", "numpy", "fast"):
        raise ValueError(f"unknown engine {engine!r}")
    use_fast = engine == "fast" or (engine == "auto" and _engine.HAVE_NUMBA)
    if config.conjectural_updates:
        if engine == "fast":
            raise ValueError("the conjectural variant runs on the numpy engine only")
        use_fast = False
    n, d = params.n, params.d
    if config.n != n or config.d != d:
        raise DimensionMismatch("K0 shape does not match the system dimensions")
    if spectral_radius(params.A + params.B @ config.K0) >= 1.0:
        raise UnstableK0("rho(A + B K0) >= 1; K0 does not stabilize the system")
    sol = solve_dare(params)
    if np.linalg.norm(sol.K, 2) >= config.C_K:
        warnings.warn(
            f"C_K={config.C_K} does not exceed ||K||={np.linalg.norm(sol.K, 2):.3f}",
            stacklevel=2,
        )
    T = config.horizon
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    eps, w, ts_rng = _run_streams(config, n, d, params.sigma)
    ts_normals = (
        ts_rng.standard_normal((T + 1, n, n + d)) if thompson else np.zeros((1, n, n + d))
    )
    want = sorted({t for t in (checkpoints or []) if 2 <= t <= T})
    if use_fast:
        return _run_fast(params, config, sol, x0, eps, w, ts_normals, want, thompson)
    return _run_python(params, config, sol, x0, eps, w, ts_normals, want, thompson)


def _run_python(params, config, sol, x0, eps, w, ts_normals, want, thompson) -> RunRecord:
    n, d = params.n, params.d
    T = config.horizon
    update_at = _update_times(config.schedule, T)
    A, B, Q, R = params.A, params.B, params.Q, params.R

    xs = np.empty((T + 2, n))
    us = np.empty((T + 1, d))
    etas = np.empty((T + 1, d))
    costs = np.empty(T + 1)
    resets = np.empty(T + 1, dtype=int)
    xs[0] = x0

    state = EstimatorState(n, d)
    snaps: list[CheckpointSnapshot] = []
    want_set = set(want)

    # warm-up steps t = 0, 1 with u = K0 x + tau w
    for t in (0, 1):
        u = warmup_input(config, xs[t], w[t])
        us[t] = u
        etas[t] = config.tau * w[t]
        costs[t] = xs[t] @ Q @ xs[t] + u @ R @ u
        resets[t] = 0
        if t == 1:
            rls_update(state, np.concatenate([xs[0], us[0]]), xs[1])
        xs[t + 1] = A @ xs[t] + B @ u + eps[t]

    # Thompson and the conjectural variant use all transitions through x_t,
    # so they ingest before the gain; the proven variant ingests after.
    ingest_early = config.conjectural_updates or thompson
    held_K = config.K0
    held_norm = np.linalg.norm(config.K0, 2)
    for t in range(2, T + 1):
        if ingest_early:
            rls_update(state, np.concatenate([xs[t - 1], us[t - 1]]), xs[t])
        if thompson:
            K_t = _thompson_gain(state, params, config, ts_normals[t], xs[t], t)
        elif update_at is None:
            K_t = compute_gain(state, config, Q, R, xs[t], t)
        else:
            if t in update_at:
                cand = _certainty_equivalent_gain(state, Q, R)
                if cand is None:
                    state.fallback_count += 1
                    cand = config.K0
                held_K = cand
                held_norm = np.linalg.norm(held_K, 2)
            if not config.conjectural_updates and (
                np.linalg.norm(xs[t]) > config.C_x * math.log(t)
                or held_norm > config.C_K
            ):
                K_t = config.K0
                state.reset_count += 1
            else:
                K_t = held_K
            state.K_hat = K_t
        eta = exploration_scale(config, t) * w[t]
        u = K_t @ xs[t] + eta
        us[t] = u
        etas[t] = eta
        costs[t] = xs[t] @ Q @ xs[t] + u @ R @ u
        resets[t] = state.reset_count
        if not ingest_early:
            rls_update(state, np.concatenate([xs[t - 1], us[t - 1]]), xs[t])
        xs[t + 1] = A @ xs[t] + B @ u + eps[t]
        if t in want_set:
            snaps.append(
                CheckpointSnapshot(
                    t=t,
                    A_hat=state.A_hat.copy(),
                    B_hat=state.B_hat.copy(),
                    A_hat_prev=state.theta_prev[:, :n].copy(),
                    B_hat_prev=state.theta_prev[:, n:].copy(),
                    K_hat=np.array(K_t, copy=True),
                    gram=state.gram.copy(),
                    x=xs[t].copy(),
                    u=us[t].copy(),
                    w=w[t].copy(),
                    x_next=xs[t + 1].copy(),
                    reset_count=state.reset_count,
                    cost_cum=float(np.sum(costs[1 : t + 1])),
                    cost_cum_oracle=np.nan,
                )
            )

    # coupled oracle trajectory: u = K x on the identical eps sequence
    xs_opt = np.empty((T + 2, n))
    us_opt = np.empty((T + 1, d))
    costs_opt = np.empty(T + 1)
    xs_opt[0] = x0
    K_opt = sol.K
    for t in range(T + 1):
        u = K_opt @ xs_opt[t]
        us_opt[t] = u
        costs_opt[t] = xs_opt[t] @ Q @ xs_opt[t] + u @ R @ u
        xs_opt[t + 1] = A @ xs_opt[t] + B @ u + eps[t]

    return _assemble_record(
        params, config, xs, us, etas, w, eps, costs, xs_opt, us_opt, costs_opt,
        resets, snaps,
    )


def _run_fast(params, config, sol, x0, eps, w, ts_normals, want, thompson) -> RunRecord:
    from . import _engine
    from .lqr import HAUTUS_RTOL

    n, d = params.n, params.d
    T = config.horizon
    update_at = _update_times(config.schedule, T)
    update_mask = np.zeros(T + 1, dtype=bool)
    if update_at is None:
        update_mask[2:] = True
    else:
        for t in update_at:
            update_mask[t] = True
    snap_idx = np.asarray(want, dtype=np.int64)
    out = _engine.simulate(
        params.A,
        params.B,
        params.Q,
        params.R,
        config.K0,
        x0,
        eps,
        w,
        config.beta,
        config.alpha,
        config.tau,
        config.C_x,
        config.C_K,
        update_mask,
        snap_idx,
        thompson,
        ts_normals,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
        HAUTUS_RTOL,
        INV_REFRESH_EVERY,
    )
    (xs, us, etas, costs, resets, _fallbacks,
     snap_theta, snap_theta_prev, snap_gram, snap_K) = out
    xs_opt, us_opt, costs_opt = _engine.simulate_oracle(
        params.A, params.B, params.Q, params.R, sol.K, x0, eps
    )
    cum = np.concatenate([[0.0], np.cumsum(costs[1:])])
    snaps = []
    for i, t in enumerate(want):
        snaps.append(
            CheckpointSnapshot(
                t=t,
                A_hat=snap_theta[i, :, :n].copy(),
                B_hat=snap_theta[i, :, n:].copy(),
                A_hat_prev=snap_theta_prev[i, :, :n].copy(),
                B_hat_prev=snap_theta_prev[i, :, n:].copy(),
                K_hat=snap_K[i].copy(),
                gram=snap_gram[i].copy(),
                x=xs[t].copy(),
                u=us[t].copy(),
                w=w[t].copy(),
                x_next=xs[t + 1].copy(),
                reset_count=int(resets[t]),
                cost_cum=float(cum[t]),
                cost_cum_oracle=np.nan,
            )
        )
    return _assemble_record(
        params, config, xs, us, etas, w, eps, costs, xs_opt, us_opt, costs_opt,
        resets, snaps,
    )


def _assemble_record(
    params, config, xs, us, etas, w, eps, costs, xs_opt, us_opt, costs_opt, resets, snaps
) -> RunRecord:
    cum_opt = np.concatenate([[0.0], np.cumsum(costs_opt[1:])])
    for snap in snaps:
        snap.cost_cum_oracle = float(cum_opt[snap.t])
    return RunRecord(
        params=params,
        horizon=config.horizon,
        seed=config.seed,
        xs=xs,
        us=us,
        etas=etas,
        ws=w,
        epss=eps,
        costs=costs,
        xs_opt=xs_opt,
        us_opt=us_opt,
        costs_opt=costs_opt,
        reset_counts=resets,
        checkpoints=snaps,
    )


def _thompson_gain(state, params, config, draw_normals, x, t) -> np.ndarray:
    """Posterior draw of [A, B], DARE at the draw, then the safety reset."""
    n = state.n
    p = n + state.d
    prec = np.eye(p) + state.gram
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    theta_true = np.hstack([params.A, params.B])
    mean = (theta_true + state.cross) @ cov
    L_chol = np.linalg.cholesky(cov)
    draw = mean + draw_normals @ L_chol.T
    A_s, B_s = draw[:, :n], draw[:, n:]
    candidate = None
    if is_stabilizable(A_s, B_s):
        P0 = state._P_warm if state._P_warm is not None else params.Q
        P, _, ok = _dare_iterate(A_s, B_s, params.Q, params.R, P0, DEFAULT_TOL, DEFAULT_MAX_ITER)
        if ok:
            state._P_warm = P
            candidate = optimal_gain(A_s, B_s, params.R, P)
    if candidate is None:
        state.fallback_count += 1
        candidate = config.K0
    K_hat = candidate
    if (
        np.linalg.norm(x) > config.C_x * math.log(t)
        or np.linalg.norm(candidate, 2) > config.C_K
    ):
        K_hat = config.K0
        state.reset_count += 1
    state.K_hat = K_hat
    return K_hat
