"""Loop kernels compiled with numba.

Small dense algebra (n_x is 3 in the reference scenario) is written out by
hand so the inner loops never call into LAPACK.
"""

import numpy as np
from numba import njit

OK = 0
ILL_CONDITIONED = 1
COND_LIMIT = 1e12


@njit(cache=True)
def consensus_rounds(own, src, dst, gate, in_ptr, in_edge, rounds):
    n, D = own.shape
    E = src.shape[0]
    msg = np.empty((E, D))
    new = np.empty((E, D))
    for e in range(E):
        for d in range(D):
            msg[e, d] = own[src[e], d]
    agg = own.copy()
    for t in range(1, rounds + 1):
        for i in range(n):
            for d in range(D):
                agg[i, d] = own[i, d]
            for p in range(in_ptr[i], in_ptr[i + 1]):
                e = in_edge[p]
                g = gate[e]
                if g != 0.0:
                    for d in range(D):
                        agg[i, d] += g * msg[e, d]
        if t == rounds:
            break
        for e in range(E):
            i = src[e]
            j = dst[e]
            for d in range(D):
                new[e, d] = own[i, d]
            for p in range(in_ptr[i], in_ptr[i + 1]):
                e2 = in_edge[p]
                if src[e2] == j:
                    continue
                g = gate[e2]
                if g != 0.0:
                    for d in range(D):
                        new[e, d] += g * msg[e2, d]
        msg, new = new, msg
    return agg


@njit(cache=True)
def _chol_inv(A, out):
    """Inverse of SPD ``A`` into ``out``; returns False if not numerically PD."""
    m = A.shape[0]
    L = np.zeros((m, m))
    for j in range(m):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    # invert L in place of a fresh lower-triangular matrix
    Li = np.zeros((m, m))
    for i in range(m):
        Li[i, i] = 1.0 / L[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s -= L[i, k] * Li[k, j]
            Li[i, j] = s / L[i, i]
    for i in range(m):
        for j in range(i + 1):
            s = 0.0
            for k in range(i, m):
                s += Li[k, i] * Li[k, j]
            out[i, j] = s
            out[j, i] = s
    return True


@njit(cache=True)
def _sym_eig_extremes(A):
    """(lambda_min, lambda_max) of a small symmetric matrix by cyclic Jacobi."""
    m = A.shape[0]
    B = A.copy()
    for sweep in range(50):
        off = 0.0
        for p in range(m):
            for r in range(p + 1, m):
                off += B[p, r] * B[p, r]
        if off < 1e-30 * (1.0 + np.abs(B).max() ** 2):
            break
        for p in range(m):
            for r in range(p + 1, m):
                if B[p, r] == 0.0:
                    continue
                theta = (B[r, r] - B[p, p]) / (2.0 * B[p, r])
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(m):
                    bkp = B[k, p]
                    bkr = B[k, r]
                    B[k, p] = c * bkp - s * bkr
                    B[k, r] = s * bkp + c * bkr
                for k in range(m):
                    bpk = B[p, k]
                    brk = B[r, k]
                    B[p, k] = c * bpk - s * brk
                    B[r, k] = s * bpk + c * brk
    lo = B[0, 0]
    hi = B[0, 0]
    for k in range(1, m):
        lo = min(lo, B[k, k])
        hi = max(hi, B[k, k])
    return lo, hi


@njit(cache=True)
def _matmul(A, B, out):
    a, b = A.shape
    c = B.shape[1]
    for i in range(a):
        for j in range(c):
            s = 0.0
            for k in range(b):
                s += A[i, k] * B[k, j]
            out[i, j] = s


@njit(cache=True)
def _matmul_bt(A, B, out):
    """out = A @ B.T"""
    a, b = A.shape
    c = B.shape[0]
    for i in range(a):
        for j in range(c):
            s = 0.0
            for k in range(b):
                s += A[i, k] * B[j, k]
            out[i, j] = s


@njit(cache=True)
def run_filter(phi, q, mu0, p0, psi, info, src, dst, weight, in_ptr, in_edge,
               arrival, window, rounds, track_cross):
    K = psi.shape[0] - 1
    n = psi.shape[1]
    nx = mu0.shape[0]
    E = src.shape[0]
    depth = window + 2
    D = nx + nx * nx + n

    xs = np.zeros((depth, n, nx))
    ps = np.zeros((depth, n, nx, nx))
    nc = n if track_cross else 1
    es = np.zeros((depth, nc, nc, nx, nx))
    for i in range(n):
        xs[0, i] = mu0
        ps[0, i] = p0
    for i in range(nc):
        for l in range(nc):
            es[0, i, l] = p0

    x_out = np.zeros((K + 1, n, nx))
    p_out = np.zeros((K + 1, n, nx, nx))
    e_out = np.zeros((K + 1 if track_cross else 1, nc, nc, nx, nx))
    min_eig = np.full((K + 1, window + 1), np.inf)
    rounds_used = np.zeros(K + 1, dtype=np.int64)
    x_out[0] = xs[0]
    p_out[0] = ps[0]
    if track_cross:
        e_out[0] = es[0]

    own = np.empty((n, D))
    gate = np.empty(E)
    theta = np.empty((n, nx))
    omega = np.empty((n, nx, nx))
    coef = np.empty((n, n))
    amat = np.empty((n, nx, nx))
    xhat = np.empty(nx)
    phat = np.empty((nx, nx))
    phat_inv = np.empty((nx, nx))
    post_info = np.empty((nx, nx))
    pnew = np.empty((nx, nx))
    tmp = np.empty((nx, nx))
    tmp2 = np.empty((nx, nx))
    ehat = np.empty((nx, nx))
    nmat = np.empty((nx, nx))
    rhs = np.empty(nx)

    for k in range(1, K + 1):
        anchor = max(0, k - window - 1)
        for s in range(anchor + 1, k + 1):
            prev = (s - 1) % depth
            cur = s % depth
            for e in range(E):
                gate[e] = weight[e] if arrival[e, s] <= k else 0.0
            for i in range(n):
                for a in range(nx):
                    own[i, a] = psi[s, i, a]
                for a in range(nx):
                    for b in range(nx):
                        own[i, nx + a * nx + b] = info[s, i, a, b]
                for j in range(n):
                    own[i, nx + nx * nx + j] = 1.0 if i == j else 0.0
            agg = consensus_rounds(own, src, dst, gate, in_ptr, in_edge, rounds)
            rounds_used[k] += rounds
            for i in range(n):
                for a in range(nx):
                    theta[i, a] = agg[i, a]
                for a in range(nx):
                    for b in range(nx):
                        omega[i, a, b] = 0.5 * (agg[i, nx + a * nx + b] + agg[i, nx + b * nx + a])
                for j in range(n):
                    coef[i, j] = agg[i, nx + nx * nx + j]

            F = phi[s - 1]
            Q = q[s - 1]
            for i in range(n):
                # prediction
                for a in range(nx):
                    acc = 0.0
                    for b in range(nx):
                        acc += F[a, b] * xs[prev, i, b]
                    xhat[a] = acc
                _matmul(F, ps[prev, i], tmp)
                _matmul_bt(tmp, F, phat)
                for a in range(nx):
                    for b in range(nx):
                        phat[a, b] = 0.5 * (phat[a, b] + phat[b, a]) + Q[a, b]
                if not _chol_inv(phat, phat_inv):
                    return x_out, p_out, e_out, min_eig, rounds_used, ILL_CONDITIONED, k
                # information update
                for a in range(nx):
                    for b in range(nx):
                        post_info[a, b] = phat_inv[a, b] + omega[i, a, b]
                lo, hi = _sym_eig_extremes(post_info)
                if lo <= 0.0 or hi > COND_LIMIT * lo:
                    return x_out, p_out, e_out, min_eig, rounds_used, ILL_CONDITIONED, k
                off = k - s
                if lo < min_eig[k, off]:
                    min_eig[k, off] = lo
                if not _chol_inv(post_info, pnew):
                    return x_out, p_out, e_out, min_eig, rounds_used, ILL_CONDITIONED, k
                for a in range(nx):
                    acc = theta[i, a]
                    for b in range(nx):
                        acc += phat_inv[a, b] * xhat[b]
                    rhs[a] = acc
                for a in range(nx):
                    acc = 0.0
                    for b in range(nx):
                        acc += pnew[a, b] * rhs[b]
                    xs[cur, i, a] = acc
                    for b in range(nx):
                        ps[cur, i, a, b] = pnew[a, b]
                if track_cross:
                    # I - P Omega: propagates the prior error into the posterior
                    for a in range(nx):
                        for b in range(nx):
                            acc = 1.0 if a == b else 0.0
                            for c in range(nx):
                                acc -= pnew[a, c] * omega[i, c, b]
                            amat[i, a, b] = acc

            if track_cross:
                for i in range(n):
                    for l in range(i, n):
                        _matmul(F, es[prev, i, l], tmp)
                        _matmul_bt(tmp, F, ehat)
                        for a in range(nx):
                            for b in range(nx):
                                ehat[a, b] += Q[a, b]
                        _matmul(amat[i], ehat, tmp)
                        _matmul_bt(tmp, amat[l], tmp2)
                        # measurement noise shared through common contributors
                        for a in range(nx):
                            for b in range(nx):
                                nmat[a, b] = 0.0
                        for j in range(n):
                            c2 = coef[i, j] * coef[l, j]
                            if c2 != 0.0:
                                for a in range(nx):
                                    for b in range(nx):
                                        nmat[a, b] += c2 * info[s, j, a, b]
                        _matmul(ps[cur, i], nmat, tmp)
                        _matmul(tmp, ps[cur, l], ehat)
                        for a in range(nx):
                            for b in range(nx):
                                v = tmp2[a, b] + ehat[a, b]
                                es[cur, i, l, a, b] = v
                                es[cur, l, i, b, a] = v
        cur = k % depth
        x_out[k] = xs[cur]
        p_out[k] = ps[cur]
        if track_cross:
            e_out[k] = es[cur]
    return x_out, p_out, e_out, min_eig, rounds_used, OK, 0
