"""Minimal tensor operations with explicit backward passes.

All ops work on batched channels-last tensors (B, F, T, C) in whatever
float dtype the parameters carry.  Every forward returns the cache its
backward needs; backwards are hand-derived and validated against central
finite differences, which is the point of owning this layer instead of
calling a framework.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3  # fixed 3x3 filters


# ---------------------------------------------------------------------------
# Convolution, stride 1, same padding
# ---------------------------------------------------------------------------


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y[b,f,t,o] = sum_{i,j,c} w[i,j,c,o] * xpad[b,f+i,t+j,c] + b[o].

    Output spatial size equals input for any (F, T): with k=3, s=1, p=1
    the size formula floor((n + 2p - k)/s) + 1 gives back n.  Implemented
    as nine shifted matmuls, which avoids materializing the 9x window
    tensor an im2col would need.
    """
    if x.ndim == 3:
        x = x[None]
    if x.shape[-1] != w.shape[2]:
        raise ValueError(f"channel mismatch: input {x.shape[-1]}, kernel {w.shape[2]}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    bsz, f, t, _ = x.shape
    y = np.empty((bsz, f, t, w.shape[3]), dtype=x.dtype)
    y[:] = b
    for i in range(KERNEL):
        for j in range(KERNEL):
            y += np.ascontiguousarray(xp[:, i:i + f, j:j + t, :]) @ w[i, j]
    return y, (xp, w)


def conv2d_same_backward(dy: np.ndarray, cache):
    xp, w = cache
    bsz = dy.shape[0]
    f, t = dy.shape[1], dy.shape[2]
    db = dy.sum(axis=(0, 1, 2))
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    dyf = np.ascontiguousarray(dy).reshape(-1, dy.shape[3])
    for i in range(KERNEL):
        for j in range(KERNEL):
            patch = np.ascontiguousarray(xp[:, i:i + f, j:j + t, :])
            dw[i, j] = patch.reshape(-1, patch.shape[3]).T @ dyf
            dxp[:, i:i + f, j:j + t, :] += dy @ w[i, j].T
    dx = dxp[:, 1:-1, 1:-1, :]
    return dx, dw, db


# ---------------------------------------------------------------------------
# Instance normalization (per sample, per channel over F x T)
# ---------------------------------------------------------------------------


def instance_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                  eps: float = 1e-5):
    if x.ndim == 3:
        x = x[None]
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = np.maximum((x * x).mean(axis=(1, 2), keepdims=True) - mu * mu, 0.0)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * ivar
    y = gamma * xhat + beta
    return y, (xhat, ivar, gamma)


def instance_norm_backward(dy: np.ndarray, cache):
    xhat, ivar, gamma = cache
    n = xhat.shape[1] * xhat.shape[2]
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    dxhat = dy * gamma
    sum_dxhat = dxhat.sum(axis=(1, 2), keepdims=True)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
    dx = (ivar / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


def batch_norm_stats(x: np.ndarray):
    """Reference-only batch statistics (mean, std per channel over B, F, T).

    Not used in the production path; exists so tests can contrast per-batch
    statistics with the per-sample statistics instance_norm uses.
    """
    if x.ndim == 3:
        x = x[None]
    return x.mean(axis=(0, 1, 2)), x.std(axis=(0, 1, 2))


def instance_norm_stats(x: np.ndarray):
    """Per-sample, per-channel (mean, std over F, T)."""
    if x.ndim == 3:
        x = x[None]
    return x.mean(axis=(1, 2)), x.std(axis=(1, 2))


# ---------------------------------------------------------------------------
# Activation
# ---------------------------------------------------------------------------


def leaky_relu(x: np.ndarray, slope: float = 0.01):
    y = np.where(x >= 0, x, slope * x)
    return y, (x, slope)


def leaky_relu_backward(dy: np.ndarray, cache):
    x, slope = cache
    return dy * np.where(x >= 0, 1.0, slope)


# ---------------------------------------------------------------------------
# 2x2 max pooling with 2-bit argmax indices and its up-pooling inverse
# ---------------------------------------------------------------------------


def _to_windows(x: np.ndarray):
    b, f, t, c = x.shape
    if f % 2 or t % 2:
        raise ValueError(f"pooling needs even spatial dims, got {f}x{t}")
    xr = x.reshape(b, f // 2, 2, t // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    return xr.reshape(b, f // 2, t // 2, c, 4)


def _from_windows(flat: np.ndarray):
    b, f2, t2, c, _ = flat.shape
    xr = flat.reshape(b, f2, t2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return xr.reshape(b, f2 * 2, t2 * 2, c)


def max_pool_2x2(x: np.ndarray):
    """Halve both spatial dims; indices are the 2-bit in-window argmax
    (row-major, first maximum wins ties)."""
    if x.ndim == 3:
        x = x[None]
    flat = _to_windows(x)
    idx = flat.argmax(axis=-1).astype(np.uint8)
    pooled = np.take_along_axis(flat, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return pooled, idx


def max_pool_2x2_backward(dy: np.ndarray, idx: np.ndarray):
    return up_pool_2x2(dy, idx)


def up_pool_2x2(pooled: np.ndarray, idx: np.ndarray):
    """Place each pooled value at its stored argmax position, zero elsewhere."""
    if pooled.ndim == 3:
        pooled = pooled[None]
    if pooled.shape != idx.shape:
        raise ValueError(f"pooled {pooled.shape} does not match indices {idx.shape}")
    flat = np.zeros(pooled.shape + (4,), dtype=pooled.dtype)
    np.put_along_axis(flat, idx[..., None].astype(np.intp), pooled[..., None], axis=-1)
    return _from_windows(flat)


def up_pool_2x2_backward(dy: np.ndarray, idx: np.ndarray):
    flat = _to_windows(dy)
    return np.take_along_axis(flat, idx[..., None].astype(np.intp), axis=-1)[..., 0]


# ---------------------------------------------------------------------------
# Time-axis mean pooling / broadcast (encoder tail, decoder head)
# ---------------------------------------------------------------------------


def time_mean_pool(x: np.ndarray):
    t = x.shape[2]
    return x.mean(axis=2, keepdims=True), t


def time_mean_pool_backward(dy: np.ndarray, t: int):
    return np.repeat(dy / t, t, axis=2)


def time_broadcast(x: np.ndarray, t: int):
    return np.repeat(x, t, axis=2)


def time_broadcast_backward(dy: np.ndarray):
    return dy.sum(axis=2, keepdims=True)


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)
