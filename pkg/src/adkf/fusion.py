"""Cross-covariances and linear-minimum-variance fusion of local estimates.

Weights are stored as the n_x x n_x matrices applied to each local estimate,
x_f = sum_i A_i x_i, with sum_i A_i = I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COND_LIMIT = 1e12


class FusionError(ArithmeticError):
    pass


@dataclass
class FusionWeights:
    blocks: np.ndarray      # (..., n, nx, nx); x_f = sum_i blocks[i] @ x_i
    fused_cov: np.ndarray   # (..., nx, nx)

    @property
    def gamma(self) -> np.ndarray:
        """Stacked (n*nx, nx) weight matrix Gamma with x_f = Gamma^T col(x_i)."""
        b = np.swapaxes(self.blocks, -1, -2)
        return b.reshape(b.shape[:-3] + (-1, b.shape[-1]))


def cross_cov_step(prev, gain_i, gain_j, H_i, H_j, transition, process_cov, shared_meas_cov=None):
    """One step of the error cross-covariance between two local Kalman filters.

    P_ij = (I - K_i H_i)(Phi P_ij Phi^T + Q)(I - K_j H_j)^T + K_i R_ij K_j^T,
    where R_ij is the covariance shared by the two measurement noises (the
    sensor's R when i and j are the same filter, zero for independent sensors).
    """
    prev = np.atleast_2d(prev)
    nx = prev.shape[0]
    H_i, H_j = np.atleast_2d(H_i), np.atleast_2d(H_j)
    gain_i, gain_j = np.atleast_2d(gain_i), np.atleast_2d(gain_j)
    for K, H in ((gain_i, H_i), (gain_j, H_j)):
        if prev.shape != (nx, nx) or K.shape != (nx, H.shape[0]) or H.shape[1] != nx:
            raise FusionError("dimension mismatch")
    A_i = np.eye(nx) - gain_i @ H_i
    A_j = np.eye(nx) - gain_j @ H_j
    out = A_i @ (transition @ prev @ transition.T + process_cov) @ A_j.T
    if shared_meas_cov is not None:
        out = out + gain_i @ np.atleast_2d(shared_meas_cov) @ gain_j.T
    return out


def assemble_xi(blocks) -> np.ndarray:
    """(..., n, n, nx, nx) blocks -> (..., n*nx, n*nx) matrix."""
    b = np.asarray(blocks, dtype=float)
    n, nx = b.shape[-4], b.shape[-1]
    return np.swapaxes(b, -3, -2).reshape(b.shape[:-4] + (n * nx, n * nx))


def _inverse(M, degenerate: str):
    """Batched inverse of symmetric PSD ``M``; near-singular entries raise or use the pseudo-inverse."""
    if degenerate not in ("raise", "pinv"):
        raise ValueError("degenerate must be 'raise' or 'pinv'")
    if not np.all(np.isfinite(M)):
        raise FusionError("cross-covariance matrix is not finite")
    vals, vecs = np.linalg.eigh(M)
    top = vals[..., -1:]
    keep = vals > top / COND_LIMIT
    if degenerate == "raise" and not keep.all():
        worst = np.max(top[..., 0] / np.maximum(vals[..., 0], np.finfo(float).tiny))
        raise FusionError(f"cross-covariance matrix is singular (condition {worst:.3g})")
    # dropped modes are differences between duplicated estimates; the
    # optimal weights live in the range of M
    inv_vals = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    return (vecs * inv_vals[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def _solve_weights(inv, e):
    """Gamma = X e (e^T X e)^{-1} for X a (pseudo-)inverse."""
    xe = inv @ e
    info = np.swapaxes(e, -1, -2) @ xe
    c = np.atleast_1d(np.linalg.cond(info))
    if not np.all(np.isfinite(c)) or np.any(c > COND_LIMIT):
        raise FusionError("fused information matrix is singular")
    return xe @ np.linalg.inv(info)


def matrix_weights(blocks, degenerate: str = "raise") -> FusionWeights:
    """Optimal matrix weights from the (n, n, nx, nx) cross-covariance blocks.

    Leading batch dimensions are allowed. With ``degenerate="pinv"`` a
    singular Xi (for example two identical local estimates) is handled with
    the pseudo-inverse, which still gives the minimum-variance combination.
    """
    b = np.asarray(blocks, dtype=float)
    n, nx = b.shape[-4], b.shape[-1]
    xi = assemble_xi(b)
    xi = 0.5 * (xi + np.swapaxes(xi, -1, -2))
    e = np.tile(np.eye(nx), (n, 1))
    e = np.broadcast_to(e, xi.shape[:-2] + e.shape)
    gamma = _solve_weights(_inverse(xi, degenerate), e)      # (..., n*nx, nx)
    fused = np.swapaxes(gamma, -1, -2) @ xi @ gamma
    fused = 0.5 * (fused + np.swapaxes(fused, -1, -2))
    blocks_out = np.swapaxes(gamma.reshape(gamma.shape[:-2] + (n, nx, nx)), -1, -2)
    return FusionWeights(blocks_out, fused)


def vector_weights(blocks, degenerate: str = "raise") -> FusionWeights:
    """Component-wise weights using only the diagonals of every cross-covariance block.

    Each state component is fused separately with scalar weights; the
    returned covariance is the true error covariance of that combination.
    """
    b = np.asarray(blocks, dtype=float)
    n, nx = b.shape[-4], b.shape[-1]
    diag = np.diagonal(b, axis1=-2, axis2=-1)                 # (..., n, n, nx)
    if np.any(np.diagonal(diag, axis1=-3, axis2=-2) <= 0):
        raise FusionError("zero variance on a diagonal block")
    S = np.moveaxis(diag, -1, -3)                             # (..., nx, n, n)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    ones = np.ones(S.shape[:-1] + (1,))
    a = _solve_weights(_inverse(S, degenerate), ones)[..., 0]  # (..., nx, n)
    # blocks[i] = diag(a[:, i])
    w = np.moveaxis(a, -2, -1)                                # (..., n, nx)
    blocks_out = w[..., :, :, None] * np.eye(nx)              # (..., n, nx, nx)
    left = np.einsum("...ia,...ijad->...jad", w, b)
    fused = np.einsum("...jad,...jd->...ad", left, w)
    fused = 0.5 * (fused + np.swapaxes(fused, -1, -2))
    return FusionWeights(blocks_out, fused)


def fuse(states, weights: FusionWeights) -> np.ndarray:
    """x_f = sum_i A_i x_i."""
    x = np.asarray(states, dtype=float)
    if x.shape[-2] != weights.blocks.shape[-3]:
        raise FusionError("number of local estimates does not match the weights")
    return np.einsum("...iab,...ib->...a", weights.blocks, x)
