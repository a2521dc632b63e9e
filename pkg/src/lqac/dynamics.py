"""Linear system simulation, quadratic stage costs, and coupled-oracle regret."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, HorizonExceeded
from .lqr import DareSolution, SystemParams


def step_system(params: SystemParams, x: np.ndarray, u: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """x_{t+1} = A x_t + B u_t + eps_t."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    eps = np.asarray(eps, dtype=float).reshape(-1)
    if x.shape != (params.n,) or u.shape != (params.d,) or eps.shape != (params.n,):
        raise DimensionMismatch(
            f"expected x: {params.n}, u: {params.d}, eps: {params.n}; "
            f"got {x.shape}, {u.shape}, {eps.shape}"
        )
    return params.A @ x + params.B @ u + eps


def stage_cost(params: SystemParams, x: np.ndarray, u: np.ndarray) -> float:
    """x'Qx + u'Ru."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (params.n,) or u.shape != (params.d,):
        raise DimensionMismatch(f"expected x: {params.n}, u: {params.d}")
    return float(x @ params.Q @ x + u @ params.R @ u)


def optimal_average_cost(params: SystemParams, sol: DareSolution) -> float:
    """Long-run average cost of the optimal controller: sigma^2 Tr(P)."""
    return params.sigma**2 * float(np.trace(sol.P))


@dataclass(frozen=True)
class TrajectoryStep:
    """One logged simulation step."""

    t: int
    x: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    w: np.ndarray
    eps: np.ndarray
    stage_cost: float


@dataclass
class CheckpointSnapshot:
    """Estimator and trajectory state captured at a requested time t.

    Estimates indexed as in the update rule: ``A_hat``/``B_hat`` use all
    transitions through x_t (Gram summed to t-1), while ``A_hat_prev``/
    ``B_hat_prev`` are the one-step-older estimates the gain at time t was
    computed from. ``gram`` is the full sum_{i=0}^{t-1} z_i z_i'.
    """

    t: int
    A_hat: np.ndarray
    B_hat: np.ndarray
    A_hat_prev: np.ndarray
    B_hat_prev: np.ndarray
    K_hat: np.ndarray
    gram: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    x_next: np.ndarray
    reset_count: int
    cost_cum: float
    cost_cum_oracle: float


@dataclass
class RunRecord:
    """Trajectory log of one adaptive run plus its coupled optimal-controller run.

    Both trajectories are driven by the identical noise realization ``epss``.
    States run t = 0..T+1 and inputs t = 0..T for horizon T.
    """

    params: SystemParams
    horizon: int
    seed: int
    xs: np.ndarray
    us: np.ndarray
    etas: np.ndarray
    ws: np.ndarray
    epss: np.ndarray
    costs: np.ndarray
    xs_opt: np.ndarray
    us_opt: np.ndarray
    costs_opt: np.ndarray
    reset_counts: np.ndarray
    checkpoints: list[CheckpointSnapshot] = field(default_factory=list)

    def __post_init__(self):
        # cumulative cost over t = 1..T; index by T directly
        self._cum = np.concatenate([[0.0], np.cumsum(self.costs[1:])])
        self._cum_opt = np.concatenate([[0.0], np.cumsum(self.costs_opt[1:])])

    def cumulative_cost(self, T: int) -> float:
        self._check_horizon(T)
        return float(self._cum[T])

    def optimal_cumulative_cost(self, T: int) -> float:
        self._check_horizon(T)
        return float(self._cum_opt[T])

    def _check_horizon(self, T: int) -> None:
        if not 0 <= T <= self.horizon:
            raise HorizonExceeded(f"T={T} outside recorded horizon {self.horizon}")

    @property
    def steps(self) -> list[TrajectoryStep]:
        return [
            TrajectoryStep(
                t=t,
                x=self.xs[t],
                u=self.us[t],
                eta=self.etas[t],
                w=self.ws[t],
                eps=self.epss[t],
                stage_cost=float(self.costs[t]),
            )
            for t in range(self.horizon + 1)
        ]

    @property
    def optimal_steps(self) -> list[TrajectoryStep]:
        zero_u = np.zeros(self.params.d)
        return [
            TrajectoryStep(
                t=t,
                x=self.xs_opt[t],
                u=self.us_opt[t],
                eta=zero_u,
                w=zero_u,
                eps=self.epss[t],
                stage_cost=float(self.costs_opt[t]),
            )
            for t in range(self.horizon + 1)
        ]


def average_regret(record: RunRecord, T: int) -> float:
    """(cumulative cost - coupled optimal cumulative cost) / T over t = 1..T."""
    if T < 1:
        raise HorizonExceeded("average regret needs T >= 1")
    return (record.cumulative_cost(T) - record.optimal_cumulative_cost(T)) / T
