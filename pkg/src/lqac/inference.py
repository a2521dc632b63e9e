"""Observable confidence and prediction regions with chi-square calibration.

The chi-square quantile is computed from scratch (Newton on the regularized
incomplete gamma with a bisection safeguard) so the package has no statistics
dependency at runtime.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from statistics import NormalDist

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    NotStable,
    SingularGram,
    SingularWeight,
)
from .lqr import (
    DareSolution,
    SystemParams,
    gain_jacobian,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
    unvec,
    vec,
)

_EPS = 1e-15


def _gammp_series(a: float, x: float) -> float:
    """Series expansion of P(a, x), accurate for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(500):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gammq_cf(a: float, x: float) -> float:
    """Continued fraction for Q(a, x) = 1 - P(a, x), accurate for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x < 0 or a <= 0:
        raise DomainError("regularized_gamma_p needs x >= 0, a > 0")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gammp_series(a, x)
    return 1.0 - _gammq_cf(a, x)


def chi2_cdf(x: float, dof: int) -> float:
    return regularized_gamma_p(dof / 2.0, x / 2.0)


def chi2_quantile(dof: int, p: float) -> float:
    """x such that P(dof/2, x/2) = p, via Newton with bisection fallback."""
    if dof < 1:
        raise DomainError("dof must be >= 1")
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    a = dof / 2.0
    # Wilson-Hilferty start on the chi-square scale
    z = NormalDist().inv_cdf(p)
    c = 2.0 / (9.0 * dof)
    x = dof * (1.0 - c + z * math.sqrt(c)) ** 3
    if x <= 0:
        x = 1e-8
    y = x / 2.0
    lo, hi = 0.0, y
    while regularized_gamma_p(a, hi) < p:
        lo = hi
        hi *= 2.0
    for _ in range(100):
        f = regularized_gamma_p(a, y) - p
        if f > 0:
            hi = y
        else:
            lo = y
        dens = math.exp((a - 1.0) * math.log(y) - y - math.lgamma(a)) if y > 0 else 0.0
        if dens > 0:
            step = f / dens
            y_new = y - step
        else:
            y_new = 0.5 * (lo + hi)
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 1e-14 * max(1.0, y):
            y = y_new
            break
        y = y_new
    return 2.0 * y


class RegionKind(str, Enum):
    AB = "AB"
    K = "K"
    PREDICT_FULL = "PredictFull"
    PREDICT_NAIVE = "PredictNaive"
    PREDICT_MEAN = "PredictMean"


@dataclass(frozen=True)
class RegionOutcome:
    """Membership test result: covered iff statistic <= threshold."""

    statistic: float
    threshold: float
    covered: bool
    t: int
    kind: RegionKind


@dataclass(frozen=True)
class QuadraticRegion:
    """Ellipsoidal region {v : quadratic form of (v - center) <= threshold}.

    For matrix-valued centers the form is Tr(Delta weight Delta'); for
    vector-valued centers it is delta' weight delta. The weight already
    includes the 1/sigma^2 scaling.
    """

    center: np.ndarray
    weight: np.ndarray
    threshold: float
    dof: int
    level: float

    def statistic(self, value: np.ndarray) -> float:
        delta = np.asarray(value, dtype=float) - self.center
        if delta.ndim == 2 and delta.shape[0] > 1:
            return float(np.trace(delta @ self.weight @ delta.T))
        d = delta.reshape(-1)
        return float(d @ self.weight @ d)

    def contains(self, value: np.ndarray) -> bool:
        return self.statistic(value) <= self.threshold


def _outcome(stat: float, dof: int, level: float, t: int, kind: RegionKind) -> RegionOutcome:
    thr = chi2_quantile(dof, level)
    return RegionOutcome(
        statistic=float(stat), threshold=thr, covered=bool(stat <= thr), t=t, kind=kind
    )


def ab_region_statistic(
    state,
    gram_full: np.ndarray,
    A_true: np.ndarray,
    B_true: np.ndarray,
    sigma: float,
    level: float = 0.95,
    t: int = 0,
) -> RegionOutcome:
    """Confidence-region statistic for the dynamics: the trace form of the
    estimation error weighted by the full Gram matrix, against chi2_{n(n+d)}.
    """
    E = np.hstack([state.A_hat - A_true, state.B_hat - B_true])
    n, p = E.shape
    if gram_full.shape != (p, p):
        raise DimensionMismatch(f"gram must be {p}x{p}")
    stat = float(np.trace(E @ gram_full @ E.T)) / sigma**2
    return _outcome(stat, n * p, level, t, RegionKind.AB)


def ab_confidence_region(
    state, gram_full: np.ndarray, sigma: float, level: float = 0.95
) -> QuadraticRegion:
    """The ellipsoid of dynamics [A, B] consistent with the data at ``level``."""
    center = np.hstack([state.A_hat, state.B_hat])
    n, p = center.shape
    return QuadraticRegion(
        center=center,
        weight=gram_full / sigma**2,
        threshold=chi2_quantile(n * p, level),
        dof=n * p,
        level=level,
    )


def k_region_statistic(
    state,
    gram_full: np.ndarray,
    K_true: np.ndarray,
    sigma: float,
    Q: np.ndarray,
    R: np.ndarray,
    level: float = 0.95,
    t: int = 0,
) -> RegionOutcome:
    """Confidence-region statistic for the optimal gain.

    The weight is W = J (gram kron I_n)^{-1} J' with J the gain Jacobian at
    the one-step-older estimates; the Kronecker inverse is applied through
    Gram solves rather than formed densely.
    """
    A_hat = np.asarray(state.A_hat_prev, dtype=float)
    B_hat = np.asarray(state.B_hat_prev, dtype=float)
    params_hat = SystemParams(A=A_hat, B=B_hat, Q=Q, R=R, sigma=0.0)
    sol_hat = solve_dare(params_hat)  # raises NotStabilizable per the Hautus test
    J = gain_jacobian(params_hat, sol_hat).matrix
    n, d = A_hat.shape[0], B_hat.shape[1]
    try:
        np.linalg.cholesky(gram_full)
    except np.linalg.LinAlgError:
        raise SingularWeight("full Gram matrix is singular") from None
    nd = n * d
    W = np.empty((nd, nd))
    rows = [unvec(J[r], n, n + d) for r in range(nd)]
    solved = [np.linalg.solve(gram_full, X.T).T for X in rows]  # X gram^{-1}
    for r in range(nd):
        for s in range(r, nd):
            W[r, s] = W[s, r] = float(np.sum(rows[r] * solved[s]))
    v = vec(np.asarray(state.K_hat, dtype=float) - np.asarray(K_true, dtype=float))
    try:
        c = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise SingularWeight("region weight matrix is numerically singular") from None
    u = np.linalg.solve(c.T, np.linalg.solve(c, v))
    stat = float(v @ u) / sigma**2
    return _outcome(stat, nd, level, t, RegionKind.K)


def prediction_region_statistic(
    state,
    gram_full: np.ndarray,
    x_t: np.ndarray,
    u_t: np.ndarray,
    x_next: np.ndarray,
    sigma: float,
    naive: bool = False,
    level: float = 0.95,
    t: int = 0,
) -> RegionOutcome:
    """Prediction-region statistic for the next state.

    The full version deflates the squared prediction error by
    1 + z' gram^{-1} z to account for estimation error; the naive version
    omits that factor. Both are calibrated against chi2_n.
    """
    z = np.concatenate([np.asarray(x_t, float).ravel(), np.asarray(u_t, float).ravel()])
    err = state.A_hat @ np.asarray(x_t, float) + state.B_hat @ np.asarray(u_t, float)
    err = err - np.asarray(x_next, float)
    n = err.shape[0]
    sq = float(err @ err)
    if naive:
        stat = sq / sigma**2
        return _outcome(stat, n, level, t, RegionKind.PREDICT_NAIVE)
    q = _gram_quadratic(gram_full, z)
    stat = sq / (sigma**2 * (1.0 + q))
    return _outcome(stat, n, level, t, RegionKind.PREDICT_FULL)


def mean_prediction_statistic(
    state,
    gram_full: np.ndarray,
    x_t: np.ndarray,
    u_t: np.ndarray,
    A_true: np.ndarray,
    B_true: np.ndarray,
    sigma: float,
    level: float = 0.95,
    t: int = 0,
) -> RegionOutcome:
    """Region statistic for the conditional mean A x_t + B u_t."""
    x_t = np.asarray(x_t, float)
    u_t = np.asarray(u_t, float)
    z = np.concatenate([x_t.ravel(), u_t.ravel()])
    err = (state.A_hat - A_true) @ x_t + (state.B_hat - B_true) @ u_t
    n = err.shape[0]
    q = _gram_quadratic(gram_full, z)
    sq = float(err @ err)
    if q <= 0.0:
        stat = 0.0 if sq == 0.0 else math.inf
    else:
        stat = sq / (sigma**2 * q)
    return _outcome(stat, n, level, t, RegionKind.PREDICT_MEAN)


def _gram_quadratic(gram: np.ndarray, z: np.ndarray) -> float:
    try:
        c = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularGram("full Gram matrix is singular") from None
    y = np.linalg.solve(c, z)
    return float(y @ y)


def parametric_prediction_variance(
    params: SystemParams,
    sol: DareSolution,
    config,
    x_t: np.ndarray,
    w_t: np.ndarray,
    t: int,
) -> np.ndarray:
    """Variance normalizer of the one-step prediction error at time t.

    Returns v/t * I_n with v = x_t' X1^{-1} x_t + beta sigma^2 ||w_t||^2 and
    X1 = sum_p L^p L'^p; the prediction error scaled by the inverse square
    root of this matrix is asymptotically standard normal. With beta = 1 and
    alpha = 0 the non-vanishing exploration enters X1 through an extra
    (tau^2/sigma^2) BB' term.
    """
    L = params.A + params.B @ sol.K
    if spectral_radius(L) >= 1.0:
        raise NotStable("A + BK must have spectral radius < 1")
    n = params.n
    core = np.eye(n)
    if config.beta == 1.0 and config.alpha == 0.0:
        core = core + (config.tau**2 / params.sigma**2) * params.B @ params.B.T
    X1 = solve_discrete_lyapunov(L, core)
    x_t = np.asarray(x_t, float).reshape(n)
    w_t = np.asarray(w_t, float).reshape(-1)
    v = float(x_t @ np.linalg.solve(X1, x_t)) + config.beta * params.sigma**2 * float(
        w_t @ w_t
    )
    if v == 0.0:
        warnings.warn("degenerate prediction normalizer (x_t = 0 and w_t = 0)", stacklevel=2)
    return v / t * np.eye(n)


def estimate_noise_variance(state) -> float:
    """Plug-in residual estimate of sigma^2 (beyond the known-sigma theory).

    Uses the accumulated residual sum of squares of the least-squares fit,
    with n (t - (n+d)) degrees of freedom.
    """
    n, d = state.n, state.d
    rss = (
        state.sum_sq_next
        - 2.0 * float(np.sum(state.theta * state.cross))
        + float(np.sum((state.theta @ state.gram) * state.theta))
    )
    dof = n * max(state.t - (n + d), 1)
    return max(rss, 0.0) / dof
