"""Vectorised numpy versions of the kernels (no compilation required)."""

import numpy as np

OK = 0
ILL_CONDITIONED = 1
COND_LIMIT = 1e12


def _operators(src, dst, n):
    src = np.asarray(src)
    dst = np.asarray(dst)
    into = (dst[None, :] == np.arange(n)[:, None]).astype(float)          # (n, E)
    relay = (dst[None, :] == src[:, None]) & (src[None, :] != dst[:, None])  # (E, E)
    return into, relay.astype(float)


def consensus_rounds(own, src, dst, gate, in_ptr=None, in_edge=None, rounds=1, _ops=None):
    n = own.shape[0]
    into, relay = _ops if _ops is not None else _operators(src, dst, n)
    gin = into * gate[None, :]
    grelay = relay * gate[None, :]
    own_src = own[src]
    msg = own_src.copy()
    agg = own
    for t in range(1, rounds + 1):
        agg = own + gin @ msg
        if t < rounds:
            msg = own_src + grelay @ msg
    return agg


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def run_filter(phi, q, mu0, p0, psi, info, src, dst, weight, in_ptr, in_edge,
               arrival, window, rounds, track_cross):
    K = psi.shape[0] - 1
    n = psi.shape[1]
    nx = mu0.shape[0]
    depth = window + 2
    ops = _operators(src, dst, n)
    eye_n = np.eye(n)

    xs = np.zeros((depth, n, nx))
    ps = np.zeros((depth, n, nx, nx))
    xs[0] = mu0
    ps[0] = p0
    nc = n if track_cross else 1
    es = np.zeros((depth, nc, nc, nx, nx))
    es[0] = p0

    x_out = np.zeros((K + 1, n, nx))
    p_out = np.zeros((K + 1, n, nx, nx))
    e_out = np.zeros((K + 1 if track_cross else 1, nc, nc, nx, nx))
    min_eig = np.full((K + 1, window + 1), np.inf)
    rounds_used = np.zeros(K + 1, dtype=np.int64)
    x_out[0], p_out[0] = xs[0], ps[0]
    if track_cross:
        e_out[0] = es[0]
    eye_x = np.eye(nx)

    for k in range(1, K + 1):
        anchor = max(0, k - window - 1)
        for s in range(anchor + 1, k + 1):
            prev, cur = (s - 1) % depth, s % depth
            gate = np.where(arrival[:, s] <= k, weight, 0.0)
            own = np.concatenate([psi[s], info[s].reshape(n, nx * nx), eye_n], axis=1)
            agg = consensus_rounds(own, src, dst, gate, rounds=rounds, _ops=ops)
            rounds_used[k] += rounds
            theta = agg[:, :nx]
            omega = _sym(agg[:, nx:nx + nx * nx].reshape(n, nx, nx))
            coef = agg[:, nx + nx * nx:]

            F, Q = phi[s - 1], q[s - 1]
            xhat = xs[prev] @ F.T
            phat = _sym(F @ ps[prev] @ F.T) + Q
            try:
                phat_inv = _sym(np.linalg.inv(phat))
            except np.linalg.LinAlgError:
                return x_out, p_out, e_out, min_eig, rounds_used, ILL_CONDITIONED, k
            post_info = phat_inv + omega
            ev = np.linalg.eigvalsh(post_info)
            lo, hi = ev[:, 0], ev[:, -1]
            if (lo <= 0).any() or (hi > COND_LIMIT * lo).any():
                return x_out, p_out, e_out, min_eig, rounds_used, ILL_CONDITIONED, k
            min_eig[k, k - s] = min(min_eig[k, k - s], lo.min())
            pnew = _sym(np.linalg.inv(post_info))
            rhs = np.einsum("iab,ib->ia", phat_inv, xhat) + theta
            xs[cur] = np.einsum("iab,ib->ia", pnew, rhs)
            ps[cur] = pnew
            if track_cross:
                amat = eye_x - pnew @ omega
                ehat = F @ es[prev] @ F.T + Q
                prop = np.einsum("iab,ilbc,ldc->ilad", amat, ehat, amat)
                # measurement noise shared through common contributors
                shared = np.einsum("ij,lj,jab->ilab", coef, coef, info[s])
                noise = np.einsum("iab,ilbc,lcd->ilad", pnew, shared, pnew)
                blk = prop + noise
                es[cur] = 0.5 * (blk + np.swapaxes(np.swapaxes(blk, 0, 1), -1, -2))
        cur = k % depth
        x_out[k], p_out[k] = xs[cur], ps[cur]
        if track_cross:
            e_out[k] = es[cur]
    return x_out, p_out, e_out, min_eig, rounds_used, OK, 0
