"""Pure-numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (or forced
via SYNTHLABEL_KERNELS=python).  Same call signatures and semantics as
``_convops``; convolutions are valid (no padding), pooling windows are
non-overlapping, and max ties resolve to the first element in row-major
window order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Valid cross-correlation. x: (N,C,H,W), kernels: (K,C,kh,kw) -> (N,K,Ho,Wo)."""
    n, c, h, w = x.shape
    k, _, kh, kw = kernels.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    out = cols @ kernels.reshape(k, -1).T
    return np.ascontiguousarray(out.reshape(n, ho, wo, k).transpose(0, 3, 1, 2))


def conv2d_backward_kernels(
    x: np.ndarray, grad_out: np.ndarray, stride: int, kh: int, kw: int
) -> np.ndarray:
    """Gradient w.r.t. kernels. grad_out: (N,K,Ho,Wo) -> (K,C,kh,kw)."""
    n, c, _, _ = x.shape
    _, k, ho, wo = grad_out.shape
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    g = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1)).reshape(n * ho * wo, k)
    return (g.T @ cols).reshape(k, c, kh, kw)


def conv2d_backward_input(
    grad_out: np.ndarray, kernels: np.ndarray, stride: int, h: int, w: int
) -> np.ndarray:
    """Gradient w.r.t. the input. grad_out: (N,K,Ho,Wo) -> (N,C,H,W)."""
    n, k, ho, wo = grad_out.shape
    _, c, kh, kw = kernels.shape
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    # Scatter one kernel tap at a time; kh*kw small matmuls, windows may overlap.
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(grad_out, kernels[:, :, i, j], axes=([1], [0]))
            dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    return dx


def maxpool2d_forward(x: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pool; trailing rows/cols beyond a full window are dropped.

    Returns (out, idx) where idx holds the within-window row-major argmax
    (first maximum wins), int64, shape (N,C,Ho,Wo).
    """
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    cropped = x[:, :, : ho * size, : wo * size]
    win = cropped.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    flat = np.ascontiguousarray(win).reshape(n, c, ho, wo, size * size)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int64)


def maxpool2d_backward(
    grad_out: np.ndarray, idx: np.ndarray, size: int, h: int, w: int
) -> np.ndarray:
    """Route each output gradient to its window argmax position."""
    n, c, ho, wo = grad_out.shape
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    ni, ci, hi, wi = np.indices((n, c, ho, wo), sparse=True)
    rows = hi * size + idx // size
    cols = wi * size + idx % size
    dx[ni, ci, rows, cols] = grad_out
    return dx
