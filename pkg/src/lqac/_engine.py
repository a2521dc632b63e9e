"""Optional numba-compiled simulation engine.

Mirrors the pure-numpy run loop in controller.py with hand-rolled
small-matrix arithmetic so that long Monte-Carlo batches run at machine
speed. Both paths implement the identical algorithm; they agree to numerical
tolerance (operation ordering differs, so not bitwise).
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _gauss_solve(S, RHS, out):
    """out = S^{-1} RHS by Gaussian elimination with partial pivoting."""
    d = S.shape[0]
    m = RHS.shape[1]
    M = np.empty((d, d + m))
    for i in range(d):
        for j in range(d):
            M[i, j] = S[i, j]
        for j in range(m):
            M[i, d + j] = RHS[i, j]
    for col in range(d):
        piv = col
        best = abs(M[col, col])
        for r in range(col + 1, d):
            if abs(M[r, col]) > best:
                best = abs(M[r, col])
                piv = r
        if best == 0.0:
            return False
        if piv != col:
            for j in range(d + m):
                tmp = M[col, j]
                M[col, j] = M[piv, j]
                M[piv, j] = tmp
        inv_p = 1.0 / M[col, col]
        for r in range(col + 1, d):
            f = M[r, col] * inv_p
            if f != 0.0:
                for j in range(col, d + m):
                    M[r, j] -= f * M[col, j]
    for col in range(d - 1, -1, -1):
        for j in range(m):
            s = M[col, d + j]
            for k in range(col + 1, d):
                s -= M[col, k] * out[k, j]
            out[col, j] = s / M[col, col]
    return True


@njit(cache=True)
def _dare_vi(A, B, Q, R, P, tol, max_iter):
    """Value iteration on P in place; returns (residual, converged)."""
    n = A.shape[0]
    d = B.shape[1]
    PA = np.empty((n, n))
    PB = np.empty((n, d))
    S = np.empty((d, d))
    BtPA = np.empty((d, n))
    G = np.empty((d, n))
    Pn = np.empty((n, n))
    res = 0.0
    for _ in range(max_iter):
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += P[i, k] * A[k, j]
                PA[i, j] = s
            for j in range(d):
                s = 0.0
                for k in range(n):
                    s += P[i, k] * B[k, j]
                PB[i, j] = s
        for i in range(d):
            for j in range(d):
                s = R[i, j]
                for k in range(n):
                    s += B[k, i] * PB[k, j]
                S[i, j] = s
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += B[k, i] * PA[k, j]
                BtPA[i, j] = s
        if not _gauss_solve(S, BtPA, G):
            return 1e300, False
        # PA <- PA - PB G, then Pn = A' PA + Q
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(d):
                    s += PB[i, k] * G[k, j]
                PA[i, j] -= s
        for i in range(n):
            for j in range(n):
                s = Q[i, j]
                for k in range(n):
                    s += A[k, i] * PA[k, j]
                Pn[i, j] = s
        res = 0.0
        for i in range(n):
            for j in range(i, n):
                v = 0.5 * (Pn[i, j] + Pn[j, i])
                diff = v - P[i, j]
                if i == j:
                    res += diff * diff
                else:
                    res += 2.0 * diff * diff
                P[i, j] = v
                P[j, i] = v
        res = np.sqrt(res)
        if res <= tol:
            return res, True
    return res, False


@njit(cache=True)
def _stabilizable(A, B, tol):
    n = A.shape[0]
    d = B.shape[1]
    lam = np.linalg.eigvals(A.astype(np.complex128))
    for idx in range(n):
        l = lam[idx]
        if abs(l) >= 1.0:
            # real embedding of the complex pencil [A - lambda I, B]
            M = np.zeros((2 * n, 2 * (n + d)))
            re = l.real
            im = l.imag
            for i in range(n):
                for j in range(n):
                    x = A[i, j]
                    if i == j:
                        x -= re
                    M[i, j] = x
                    M[n + i, n + d + j] = x
                for j in range(d):
                    M[i, n + j] = B[i, j]
                    M[n + i, n + d + n + j] = B[i, j]
                M[i, n + d + i] = im
                M[n + i, i] = -im
            s = np.linalg.svd(M)[1]
            if s[2 * n - 1] <= tol * s[0]:
                return False
    return True


@njit(cache=True)
def _op_norm(K):
    d = K.shape[0]
    if d == 1:
        s = 0.0
        for j in range(K.shape[1]):
            s += K[0, j] * K[0, j]
        return np.sqrt(s)
    KKt = K @ K.T
    w = np.linalg.eigvalsh(KKt)
    top = w[w.shape[0] - 1]
    if top < 0.0:
        top = 0.0
    return np.sqrt(top)


@njit(cache=True)
def _vec_norm(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return np.sqrt(s)


@njit(cache=True)
def simulate(
    A,
    B,
    Q,
    R,
    K0,
    x0,
    eps,
    w,
    beta,
    alpha,
    tau,
    C_x,
    C_K,
    update_mask,
    snap_idx,
    thompson,
    ts_normals,
    dare_tol,
    dare_max_iter,
    hautus_tol,
    inv_refresh,
):
    """Run the adaptive controller; see controller._run for the reference."""
    n = A.shape[0]
    d = B.shape[1]
    p = n + d
    T = eps.shape[0] - 1

    xs = np.zeros((T + 2, n))
    us = np.zeros((T + 1, d))
    etas = np.zeros((T + 1, d))
    costs = np.zeros(T + 1)
    resets = np.zeros(T + 1, dtype=np.int64)

    gram = np.zeros((p, p))
    cross = np.zeros((n, p))
    gram_inv = np.zeros((p, p))
    inv_ready = False
    since_refresh = 0
    theta = np.zeros((n, p))
    theta_prev = np.zeros((n, p))
    P_warm = Q.copy()
    have_warm = False

    n_snap = snap_idx.shape[0]
    snap_theta = np.zeros((n_snap, n, p))
    snap_theta_prev = np.zeros((n_snap, n, p))
    snap_gram = np.zeros((n_snap, p, p))
    snap_K = np.zeros((n_snap, d, n))
    snap_ptr = 0

    reset_count = 0
    fallback_count = 0

    for i in range(n):
        xs[0, i] = x0[i]

    z = np.empty(p)
    held_K = K0.copy()
    held_norm = _op_norm(K0)
    K_t = K0.copy()

    for t in range(T + 1):
        if t < 2:
            # warm-up: u = K0 x + tau w
            for i in range(d):
                s = tau * w[t, i]
                for j in range(n):
                    s += K0[i, j] * xs[t, j]
                us[t, i] = s
                etas[t, i] = tau * w[t, i]
        else:
            # ingest transition (z_{t-2+1}? no: z_{t-1}, x_t) before or after
            # the gain depending on the variant; Thompson ingests first.
            if thompson:
                for j in range(n):
                    z[j] = xs[t - 1, j]
                for j in range(d):
                    z[n + j] = us[t - 1, j]
                gram, cross, gram_inv, inv_ready, since_refresh, theta, theta_prev = _rls(
                    gram, cross, gram_inv, inv_ready, since_refresh, theta,
                    z, xs[t], inv_refresh,
                )
                # posterior draw
                prec = np.eye(p) + gram
                cov = np.linalg.inv(prec)
                cov = 0.5 * (cov + cov.T)
                thetaT = np.hstack((A, B))
                mean = (thetaT + cross) @ cov
                Lch = np.linalg.cholesky(cov)
                draw = mean + ts_normals[t] @ Lch.T
                A_s = np.ascontiguousarray(draw[:, :n])
                B_s = np.ascontiguousarray(draw[:, n:])
                ok_gain = False
                if _stabilizable(A_s, B_s, hautus_tol):
                    P_try = P_warm.copy() if have_warm else Q.copy()
                    res, ok = _dare_vi(A_s, B_s, Q, R, P_try, dare_tol, dare_max_iter)
                    if ok:
                        P_warm = P_try
                        have_warm = True
                        # K = -(R + B'PB)^{-1} B'PA at the draw
                        PBm = P_try @ B_s
                        Sm = R + B_s.T @ PBm
                        RHS = PBm.T @ A_s
                        Kc = np.empty((d, n))
                        if _gauss_solve(Sm, RHS, Kc):
                            K_t = -Kc
                            ok_gain = True
                if not ok_gain:
                    fallback_count += 1
                    K_t = K0.copy()
                if _vec_norm(xs[t]) > C_x * np.log(t) or _op_norm(K_t) > C_K:
                    K_t = K0.copy()
                    reset_count += 1
            else:
                if update_mask[t]:
                    A_h = np.ascontiguousarray(theta[:, :n])
                    B_h = np.ascontiguousarray(theta[:, n:])
                    ok_gain = False
                    if _stabilizable(A_h, B_h, hautus_tol):
                        P_try = P_warm.copy() if have_warm else Q.copy()
                        res, ok = _dare_vi(A_h, B_h, Q, R, P_try, dare_tol, dare_max_iter)
                        if ok:
                            P_warm = P_try
                            have_warm = True
                            PBm = P_try @ B_h
                            Sm = R + B_h.T @ PBm
                            RHS = PBm.T @ A_h
                            Kc = np.empty((d, n))
                            if _gauss_solve(Sm, RHS, Kc):
                                held_K = -Kc
                                ok_gain = True
                    if not ok_gain:
                        fallback_count += 1
                        held_K = K0.copy()
                    held_norm = _op_norm(held_K)
                if _vec_norm(xs[t]) > C_x * np.log(t) or held_norm > C_K:
                    K_t = K0.copy()
                    reset_count += 1
                else:
                    K_t = held_K
            scale = tau * np.sqrt(float(t) ** (beta - 1.0) * np.log(float(t)) ** alpha)
            for i in range(d):
                e = scale * w[t, i]
                etas[t, i] = e
                s = e
                for j in range(n):
                    s += K_t[i, j] * xs[t, j]
                us[t, i] = s
            if not thompson:
                for j in range(n):
                    z[j] = xs[t - 1, j]
                for j in range(d):
                    z[n + j] = us[t - 1, j]
                gram, cross, gram_inv, inv_ready, since_refresh, theta, theta_prev = _rls(
                    gram, cross, gram_inv, inv_ready, since_refresh, theta,
                    z, xs[t], inv_refresh,
                )
        # stage cost and state update
        cx = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += Q[i, j] * xs[t, j]
            cx += xs[t, i] * s
        cu = 0.0
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += R[i, j] * us[t, j]
            cu += us[t, i] * s
        costs[t] = cx + cu
        resets[t] = reset_count
        for i in range(n):
            s = eps[t, i]
            for j in range(n):
                s += A[i, j] * xs[t, j]
            for j in range(d):
                s += B[i, j] * us[t, j]
            xs[t + 1, i] = s
        if t == 1:
            # first transition (z_0, x_1) becomes available after u_1
            for j in range(n):
                z[j] = xs[0, j]
            for j in range(d):
                z[n + j] = us[0, j]
            gram, cross, gram_inv, inv_ready, since_refresh, theta, theta_prev = _rls(
                gram, cross, gram_inv, inv_ready, since_refresh, theta,
                z, xs[1], inv_refresh,
            )
        if snap_ptr < n_snap and snap_idx[snap_ptr] == t:
            snap_theta[snap_ptr] = theta
            snap_theta_prev[snap_ptr] = theta_prev
            snap_gram[snap_ptr] = gram
            snap_K[snap_ptr] = K_t
            snap_ptr += 1

    return (
        xs,
        us,
        etas,
        costs,
        resets,
        fallback_count,
        snap_theta,
        snap_theta_prev,
        snap_gram,
        snap_K,
    )


@njit(cache=True)
def _rls(gram, cross, gram_inv, inv_ready, since_refresh, theta, z, x_next, inv_refresh):
    p = gram.shape[0]
    n = cross.shape[0]
    for i in range(p):
        for j in range(p):
            gram[i, j] += z[i] * z[j]
    for i in range(n):
        for j in range(p):
            cross[i, j] += x_next[i] * z[j]
    theta_prev = theta
    if not inv_ready:
        # engage the rank-one inverse chain only once the Gram matrix is
        # decently conditioned; a near-singular start poisons the recursion
        eig = np.linalg.eigvalsh(gram)
        if eig[0] > 1e-8 * eig[p - 1]:
            gram_inv = np.linalg.inv(gram)
            inv_ready = True
            theta = cross @ gram_inv
        else:
            theta = cross @ np.linalg.pinv(gram)
    else:
        gz = gram_inv @ z
        denom = 1.0
        for i in range(p):
            denom += z[i] * gz[i]
        gram_inv = gram_inv - np.outer(gz, gz) / denom
        since_refresh += 1
        if since_refresh >= inv_refresh:
            gram_inv = np.linalg.inv(gram)
            since_refresh = 0
        theta = cross @ gram_inv
    return gram, cross, gram_inv, inv_ready, since_refresh, theta, theta_prev


@njit(cache=True)
def simulate_oracle(A, B, Q, R, K, x0, eps):
    """Optimal-controller trajectory u = Kx on the given noise sequence."""
    n = A.shape[0]
    d = B.shape[1]
    T = eps.shape[0] - 1
    xs = np.zeros((T + 2, n))
    us = np.zeros((T + 1, d))
    costs = np.zeros(T + 1)
    for i in range(n):
        xs[0, i] = x0[i]
    for t in range(T + 1):
        for i in range(d):
            s = 0.0
            for j in range(n):
                s += K[i, j] * xs[t, j]
            us[t, i] = s
        cx = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += Q[i, j] * xs[t, j]
            cx += xs[t, i] * s
        cu = 0.0
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += R[i, j] * us[t, j]
            cu += us[t, i] * s
        costs[t] = cx + cu
        for i in range(n):
            s = eps[t, i]
            for j in range(n):
                s += A[i, j] * xs[t, j]
            for j in range(d):
                s += B[i, j] * us[t, j]
            xs[t + 1, i] = s
    return xs, us, costs
