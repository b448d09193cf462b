"""Factorized sparse convolution.

A dense kernel K (s_h, s_w, m, n) is replaced by a channel-mixing matrix P
plus, per input channel i, a low-rank pair (Q_i, S_i): the transformed kernel
slice R(.,.,i,.) reshaped to (s_h*s_w, n) is approximated as Q_i @ S_i with
Q_i (s_h*s_w, q1) and S_i (q1, n). The forward pass then needs only the
q1-channel correlations T_i followed by one matrix multiplication, and agrees
with the direct convolution up to the rank-q1 truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class ConvSpec:
    """Input geometry and kernel sizes; height 1 selects tabular 1 x s kernels."""

    height: int
    width: int
    channels: int
    kernel_size: int
    out_channels: int
    rank: int

    def __post_init__(self):
        if self.kernel_size < 1 or self.out_channels < 1 or self.channels < 1:
            raise ValueError("kernel_size, channels and out_channels must be positive")
        if self.height != 1 and self.height < self.kernel_size:
            raise ValueError("input height must be 1 (tabular) or at least kernel_size")
        if self.width < self.kernel_size:
            raise ValueError("input width must be at least kernel_size")
        if not 1 <= self.rank <= min(self.patch_size, self.out_channels):
            raise ValueError(
                f"rank must lie in [1, min(patch={self.patch_size}, "
                f"n={self.out_channels})], got {self.rank}"
            )

    @property
    def kernel_height(self) -> int:
        return 1 if self.height == 1 else self.kernel_size

    @property
    def patch_size(self) -> int:
        return self.kernel_height * self.kernel_size

    @property
    def out_height(self) -> int:
        return self.height - self.kernel_height + 1

    @property
    def out_width(self) -> int:
        return self.width - self.kernel_size + 1

    @property
    def positions(self) -> int:
        return self.out_height * self.out_width


def _windows(I: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Sliding patches of shape (..., H-kh+1, W-kw+1, m, kh, kw)."""
    return sliding_window_view(I, (kh, kw), axis=(I.ndim - 3, I.ndim - 2))


def direct_conv(I: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Valid (no padding), stride-1 convolution of I (h, w, m) with K (kh, kw, m, n)."""
    I = np.asarray(I, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if I.ndim != 3 or K.ndim != 4:
        raise ValueError("I must be (h, w, m) and K must be (kh, kw, m, n)")
    kh, kw, m, _ = K.shape
    if I.shape[2] != m:
        raise ValueError(f"channel mismatch: input has {I.shape[2]}, kernel has {m}")
    if kh > I.shape[0] or kw > I.shape[1]:
        raise ValueError("kernel is larger than the input")
    return np.einsum("uvij,YXiuv->YXj", K, _windows(I, kh, kw))


def transform_input(I: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Channel mixing J(y, x, i) = sum_k P(i, k) * I(y, x, k)."""
    I = np.asarray(I, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != I.shape[-1]:
        raise ValueError("P must be square with dimension equal to the channel count")
    return np.einsum("ik,...k->...i", P, I)


def transform_kernel(K: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Kernel counterpart of transform_input: the R with K = P^T-contracted R,
    so that convolving the mixed input with R reproduces direct_conv(I, K)."""
    K = np.asarray(K, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    m = K.shape[2]
    if P.shape != (m, m):
        raise ValueError("P must be square with dimension equal to the channel count")
    stacked = np.moveaxis(K, 2, 0).reshape(m, -1)
    solved = np.linalg.solve(P.T, stacked)
    return np.moveaxis(solved.reshape((m,) + K.shape[:2] + K.shape[3:]), 0, 2)


def truncated_svd(M: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best rank-`rank` factors of M by one-sided Jacobi orthogonalization.

    Returns (U, s, Vt) with U (r, rank), s descending, Vt (rank, c). Sweeps
    rotate column pairs until the Gram matrix is diagonal to round-off, which
    converges unconditionally and is deterministic.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("M must be a matrix")
    rows, cols = M.shape
    if not 1 <= rank <= min(rows, cols):
        raise ValueError(f"rank must lie in [1, {min(rows, cols)}]")
    transposed = rows < cols
    A = (M.T if transposed else M).copy()
    n = A.shape[1]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    tol = 1e-15 * max(scale, 1.0)
    for _ in range(60):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = A[:, p] @ A[:, p]
                aqq = A[:, q] @ A[:, q]
                apq = A[:, p] @ A[:, q]
                if abs(apq) <= tol * np.sqrt(max(app * aqq, np.finfo(float).tiny)):
                    continue
                zeta = (aqq - app) / (2.0 * apq)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.hypot(1.0, zeta))
                else:
                    t = 1.0 / (zeta - np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                col_p = A[:, p].copy()
                A[:, p] = c * col_p - s * A[:, q]
                A[:, q] = s * col_p + c * A[:, q]
                col_p = V[:, p].copy()
                V[:, p] = c * col_p - s * V[:, q]
                V[:, q] = s * col_p + c * V[:, q]
                rotated = True
        if not rotated:
            break
    norms = np.linalg.norm(A, axis=0)
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    A = A[:, order]
    V = V[:, order]
    U = A / np.where(norms > 0.0, norms, 1.0)
    U[:, norms == 0.0] = 0.0
    if transposed:
        U, V = V, U
    return U[:, :rank], norms[:rank], V[:, :rank].T


def factorize_kernel(
    R: np.ndarray, q1: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-channel rank-q1 factorization of R (kh, kw, m, n).

    Returns S (m, q1, n), Q (m, kh, kw, q1) and the per-channel Frobenius
    reconstruction errors. Singular values are folded into S so pruning small
    S entries removes weak basis contributions.
    """
    R = np.asarray(R, dtype=np.float64)
    kh, kw, m, n = R.shape
    patch = kh * kw
    if not 1 <= q1 <= min(patch, n):
        raise ValueError(f"q1 must lie in [1, min({patch}, {n})], got {q1}")
    S = np.zeros((m, q1, n))
    Q = np.zeros((m, kh, kw, q1))
    errors = np.zeros(m)
    for i in range(m):
        slab = R[:, :, i, :].reshape(patch, n)
        U, sing, Vt = truncated_svd(slab, q1)
        S[i] = sing[:, None] * Vt
        Q[i] = U.reshape(kh, kw, q1)
        errors[i] = float(np.linalg.norm(slab - U @ (sing[:, None] * Vt)))
    return S, Q, errors


@dataclass(frozen=True)
class FactorizedKernel:
    """Channel mixer P plus per-channel factors; see module docstring."""

    P: np.ndarray
    S: np.ndarray  # (m, q1, n)
    Q: np.ndarray  # (m, kh, kw, q1)
    recon_errors: np.ndarray

    @classmethod
    def from_kernel(cls, K: np.ndarray, P: np.ndarray, q1: int) -> "FactorizedKernel":
        R = transform_kernel(K, P)
        S, Q, errors = factorize_kernel(R, q1)
        return cls(P=np.asarray(P, dtype=np.float64), S=S, Q=Q, recon_errors=errors)


def sparse_forward(I: np.ndarray, fk: FactorizedKernel) -> np.ndarray:
    """Convolution through the factorized path: mix channels, correlate each
    channel with its q1 bases, then combine bases with the S matrices."""
    I = np.asarray(I, dtype=np.float64)
    m = fk.S.shape[0]
    if I.ndim != 3 or I.shape[2] != m:
        raise ValueError(f"input must be (h, w, {m})")
    kh, kw = fk.Q.shape[1], fk.Q.shape[2]
    if kh > I.shape[0] or kw > I.shape[1]:
        raise ValueError("kernel is larger than the input")
    J = transform_input(I, fk.P)
    T = np.einsum("iuvk,YXiuv->YXki", fk.Q, _windows(J, kh, kw))
    return np.einsum("ikj,YXki->YXj", fk.S, T)
