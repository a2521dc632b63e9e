"""Exact asymptotic expressions: Gram-matrix normalizers, parametric and
plug-in regret formulas, and the whitening transforms for the estimation-error
limit distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizable, NotStable
from .lqr import (
    DareSolution,
    SystemParams,
    is_stabilizable,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
    vec,
)


def spd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class AsymptoticNormalizer:
    """Deterministic normalizers of the Gram matrix at time t.

    ``C`` is the state-block covariance scale and ``D`` the full normalizer:
    the Gram matrix sum z_i z_i' behaves like D D' for large t.
    """

    L: np.ndarray
    C: np.ndarray
    C_sqrt: np.ndarray
    D: np.ndarray
    t: int
    beta: float
    alpha: float
    tau: float
    sigma: float


def build_normalizer(
    params: SystemParams, sol: DareSolution, config, t: int
) -> AsymptoticNormalizer:
    """Assemble C_t and D_t for the closed loop L = A + BK at time t >= 2.

    C_t = t^{1-beta} log^{-alpha}(t) sigma^2 X1 + (tau^2/beta) X2 with
    X1 = sum_p L^p L'^p and X2 = sum_q L^q BB' L'^q; D_t stacks C_t^{1/2}
    against the exploration block sqrt(tau^2/beta) I_d through [[I,0],[K,I]].
    """
    if t < 2:
        raise ValueError("normalizer defined for t >= 2")
    A, B = params.A, params.B
    n, d = params.n, params.d
    K = sol.K
    L = A + B @ K
    if spectral_radius(L) >= 1.0:
        raise NotStable("A + BK must have spectral radius < 1")
    beta, alpha, tau, sigma = config.beta, config.alpha, config.tau, params.sigma
    X1 = solve_discrete_lyapunov(L, np.eye(n))
    X2 = solve_discrete_lyapunov(L, B @ B.T)
    logt = math.log(t)
    C = t ** (1.0 - beta) * logt ** (-alpha) * sigma**2 * X1 + (tau**2 / beta) * X2
    C_sqrt = spd_sqrt(C)
    stack = np.block([[np.eye(n), np.zeros((n, d))], [K, np.eye(d)]])
    blocks = np.zeros((n + d, n + d))
    blocks[:n, :n] = C_sqrt
    blocks[n:, n:] = math.sqrt(tau**2 / beta) * np.eye(d)
    D = t ** (beta / 2.0) * logt ** (alpha / 2.0) * stack @ blocks
    return AsymptoticNormalizer(
        L=L, C=C, C_sqrt=C_sqrt, D=D, t=t, beta=beta, alpha=alpha, tau=tau, sigma=sigma
    )


def gram_normalization_error(normalizer: AsymptoticNormalizer, gram: np.ndarray) -> float:
    """|| D^{-1} Gram D^{-T} - I ||_F, the Gram-normalization diagnostic."""
    p = gram.shape[0]
    Dinv = np.linalg.inv(normalizer.D)
    return float(np.linalg.norm(Dinv @ gram @ Dinv.T - np.eye(p)))


def estimation_error_whitened(
    A_hat: np.ndarray,
    B_hat: np.ndarray,
    params: SystemParams,
    normalizer: AsymptoticNormalizer,
) -> np.ndarray:
    """vec([A_hat - A, B_hat - B] D_t) / sigma, asymptotically iid N(0, 1)."""
    E = np.hstack([A_hat - params.A, B_hat - params.B])
    return vec(E @ normalizer.D) / params.sigma


def fast_direction_error(
    A_hat: np.ndarray,
    B_hat: np.ndarray,
    params: SystemParams,
    sol: DareSolution,
    normalizer: AsymptoticNormalizer,
) -> np.ndarray:
    """t^{beta/2} log^{alpha/2}(t) (A_hat - A + (B_hat - B)K) C_t^{1/2}.

    Entries are asymptotically N(0, sigma^2): the fast O(t^{-1/2}) direction
    of the estimation error.
    """
    E = A_hat - params.A + (B_hat - params.B) @ sol.K
    scale = normalizer.t ** (normalizer.beta / 2.0) * math.log(normalizer.t) ** (
        normalizer.alpha / 2.0
    )
    return scale * E @ normalizer.C_sqrt


def parametric_regret(params: SystemParams, sol: DareSolution, config, T: int) -> float:
    """tau^2 beta^{-1} Tr(B'PB + R) T^{beta-1} log^alpha(T)."""
    if T < 2:
        raise ValueError("parametric regret defined for T >= 2")
    B, R, P = params.B, params.R, sol.P
    core = float(np.trace(B.T @ P @ B + R))
    return (
        config.tau**2
        / config.beta
        * core
        * T ** (config.beta - 1.0)
        * math.log(T) ** config.alpha
    )


def observable_regret(state, config, Q: np.ndarray, R: np.ndarray, T: int) -> float:
    """Plug-in version of the regret expression at the current estimates.

    Solves the DARE at (A_hat, B_hat) and evaluates
    tau^2 beta^{-1} Tr(B_hat' P_hat B_hat + R) T^{beta-1} log^alpha(T);
    valid as a forecast for any T >= the estimate time.
    """
    if T < 2:
        raise ValueError("observable regret defined for T >= 2")
    A_hat = np.asarray(state.A_hat, dtype=float)
    B_hat = np.asarray(state.B_hat, dtype=float)
    if not is_stabilizable(A_hat, B_hat):
        raise NotStabilizable("estimates are not stabilizable")
    sol_hat = solve_dare(SystemParams(A=A_hat, B=B_hat, Q=Q, R=R, sigma=0.0))
    core = float(np.trace(B_hat.T @ sol_hat.P @ B_hat + R))
    return (
        config.tau**2
        / config.beta
        * core
        * T ** (config.beta - 1.0)
        * math.log(T) ** config.alpha
    )


def tradeoff_product(
    regrets: np.ndarray, B_hat_errors: np.ndarray, t: int
) -> np.ndarray:
    """Cross-run diagnostic t * R(U,t) * Cov(vec(B_hat - B)).

    ``regrets`` holds the per-run average regrets at time t and
    ``B_hat_errors`` the per-run matrices B_hat_t - B. The median regret
    stands in for the in-probability limit. The product converges to
    Tr(B'PB + R) sigma^2 I.
    """
    regrets = np.asarray(regrets, dtype=float)
    errs = np.asarray(B_hat_errors, dtype=float)
    m = errs.shape[0]
    flat = np.stack([vec(errs[i]) for i in range(m)])
    cov = np.cov(flat, rowvar=False, ddof=1)
    return t * float(np.median(regrets)) * np.atleast_2d(cov)
