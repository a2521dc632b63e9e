"""Deterministic LQR core: DARE solver, optimal gain, stabilizability,
discrete Lyapunov solver, and the gain Jacobian d vec(K) / d vec([A, B]).

All vec(.) operations use column-major stacking so that the usual Kronecker
identity vec(AXB) = (B' kron A) vec(X) holds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NotStabilizable,
    NotStable,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
HAUTUS_RTOL = 1e-9


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(m).ravel(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((rows, cols), order="F")


def _as_matrix(m, rows: int, cols: int, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must be {rows}x{cols}, got {a.shape}")
    return a


def _check_spd(m: np.ndarray, name: str) -> None:
    if not np.allclose(m, m.T, atol=1e-10):
        raise DimensionMismatch(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DimensionMismatch(f"{name} must be positive definite") from None


@dataclass(frozen=True)
class SystemParams:
    """True dynamics (A, B), quadratic costs (Q, R), and noise scale sigma."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
        d = B.shape[1]
        Q = _as_matrix(self.Q, n, n, "Q")
        R = _as_matrix(self.R, d, d, "R")
        _check_spd(Q, "Q")
        _check_spd(R, "R")
        if self.sigma < 0:
            raise DimensionMismatch("sigma must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class DareSolution:
    """Value matrix P and gain K, with the fixed-point residual achieved."""

    P: np.ndarray
    K: np.ndarray
    residual: float


@dataclass(frozen=True)
class GainJacobian:
    """d vec(K) / d vec([A, B]), shape (n*d, n*(n+d)).

    ``closed_loop_singular`` flags a rank-deficient A + BK, in which case the
    full-row-rank guarantee for the Jacobian does not apply.
    """

    matrix: np.ndarray
    closed_loop_singular: bool = False


def spectral_radius(m: np.ndarray) -> float:
    """Maximum absolute eigenvalue of a square matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {m.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def is_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = HAUTUS_RTOL) -> bool:
    """Hautus test: rank [A - lambda I, B] = n for every eigenvalue with |lambda| >= 1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    eigs = np.linalg.eigvals(A)
    bad = eigs[np.abs(eigs) >= 1.0]
    if bad.size == 0:
        return True
    eye = np.eye(n)
    for lam in bad:
        pencil = np.hstack([A - lam * eye, B.astype(complex)])
        s = np.linalg.svd(pencil, compute_uv=False)
        if s[-1] <= tol * s[0]:
            return False
    return True


def optimal_gain(A: np.ndarray, B: np.ndarray, R: np.ndarray, P: np.ndarray) -> np.ndarray:
    """K = -(R + B'PB)^{-1} B'PA."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    B = np.asarray(B, dtype=float).reshape(n, -1)
    d = B.shape[1]
    R = _as_matrix(R, d, d, "R")
    P = _as_matrix(P, n, n, "P")
    PB = P @ B
    return -np.linalg.solve(R + B.T @ PB, PB.T @ A)


def _dare_iterate(A, B, Q, R, P0, tol, max_iter):
    """Unchecked value iteration for the DARE. Returns (P, residual, converged)."""
    P = 0.5 * (P0 + P0.T)
    for _ in range(max_iter):
        PA = P @ A
        PB = P @ B
        G = np.linalg.solve(R + B.T @ PB, PB.T @ A)
        P_next = A.T @ PA - (A.T @ PB) @ G + Q
        P_next = 0.5 * (P_next + P_next.T)
        res = np.linalg.norm(P_next - P)
        P = P_next
        if res <= tol:
            return P, res, True
    return P, res, False


def solve_dare(
    params: SystemParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    P0: np.ndarray | None = None,
) -> DareSolution:
    """Solve P = A'PA - A'PB(R + B'PB)^{-1}B'PA + Q by value iteration.

    Iterates from P0 (defaults to Q), symmetrizing each iterate, until the
    fixed-point residual drops below ``tol``. Raises NotStabilizable when the
    Hautus test fails and NoConvergence when ``max_iter`` is exhausted.
    """
    A, B, Q, R = params.A, params.B, params.Q, params.R
    if not is_stabilizable(A, B):
        raise NotStabilizable("(A, B) fails the Hautus stabilizability test")
    start = Q if P0 is None else _as_matrix(P0, params.n, params.n, "P0")
    P, res, ok = _dare_iterate(A, B, Q, R, start, tol, max_iter)
    if not ok:
        raise NoConvergence(
            f"DARE value iteration residual {res:.3e} > tol {tol:.3e} "
            f"after {max_iter} iterations"
        )
    K = optimal_gain(A, B, R, P)
    # fixed-point residual of the returned P itself
    PB = P @ B
    mapped = A.T @ P @ A - (A.T @ PB) @ np.linalg.solve(R + B.T @ PB, PB.T @ A) + Q
    residual = float(np.linalg.norm(mapped - P))
    return DareSolution(P=P, K=K, residual=residual)


def solve_discrete_lyapunov(F: np.ndarray, M: np.ndarray) -> np.ndarray:
    """X = sum_{p>=0} F^p M (F')^p, i.e. the solution of X = F X F' + M.

    Uses doubling (X <- X + F_k X F_k', F_k <- F_k^2) which converges
    quadratically for spectral radius below 1.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    M = _as_matrix(M, n, n, "M")
    if spectral_radius(F) >= 1.0:
        raise NotStable("solve_discrete_lyapunov requires spectral radius(F) < 1")
    X = 0.5 * (M + M.T)
    Fk = F.copy()
    for _ in range(200):
        inc = Fk @ X @ Fk.T
        X = X + inc
        if np.linalg.norm(inc) < 1e-12 * (1.0 + np.linalg.norm(X)):
            break
        Fk = Fk @ Fk
    return 0.5 * (X + X.T)


def gain_jacobian(params: SystemParams, sol: DareSolution) -> GainJacobian:
    """Derivative of vec(K) with respect to vec([A, B]), column-major.

    For each unit perturbation (dA, dB), dP solves the transposed Lyapunov
    recursion dP = L' dP L + (dA + dB K)' P L + L' P (dA + dB K) with
    L = A + BK, and then
    dK = -(R + B'PB)^{-1} (dB' P L + B' P (dA + dB K) + B' dP L).
    """
    A, B, R = params.A, params.B, params.R
    n, d = params.n, params.d
    P, K = sol.P, sol.K
    L = A + B @ K
    if spectral_radius(L) >= 1.0:
        raise NotStable("closed loop A + BK must have spectral radius < 1")
    sing = np.linalg.matrix_rank(L) < n

    RBPB = R + B.T @ P @ B
    PL = P @ L
    BtP = B.T @ P
    cols = np.empty((n * d, n * (n + d)))
    for j in range(n * (n + d)):
        e = np.zeros(n * (n + d))
        e[j] = 1.0
        dAB = unvec(e, n, n + d)
        dA, dB = dAB[:, :n], dAB[:, n:]
        W = dA + dB @ K
        Mrhs = W.T @ PL + PL.T @ W
        dP = solve_discrete_lyapunov(L.T, Mrhs)
        dK = -np.linalg.solve(RBPB, dB.T @ PL + BtP @ W + B.T @ dP @ L)
        cols[:, j] = vec(dK)
    return GainJacobian(matrix=cols, closed_loop_singular=sing)
