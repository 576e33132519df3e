"""Independent reference implementations used only by the tests.

Everything here is deliberately naive (explicit loops, no stability tricks,
no shared code with the package) so it can serve as an oracle for the real
implementations.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_naive(x: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Quadruple-loop valid cross-correlation. x: (N,C,H,W), kernels: (K,C,kh,kw)."""
    n, c, h, w = x.shape
    k, _, kh, kw = kernels.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    for ni in range(n):
        for ki in range(k):
            for oi in range(ho):
                for oj in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (
                                    x[ni, ci, oi * stride + i, oj * stride + j]
                                    * kernels[ki, ci, i, j]
                                )
                    out[ni, ki, oi, oj] = acc
    return out


def maxpool2d_naive(x: np.ndarray, size: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    out = np.zeros((n, c, ho, wo))
    for ni in range(n):
        for ci in range(c):
            for oi in range(ho):
                for oj in range(wo):
                    out[ni, ci, oi, oj] = x[
                        ni, ci, oi * size : (oi + 1) * size, oj * size : (oj + 1) * size
                    ].max()
    return out


def nt_xent_brute_force(z: np.ndarray, tau: float) -> float:
    """Double loop over ordered positive pairs, plain exp, no max subtraction."""

    def sim(a, b):
        return float(a @ b) / (math.sqrt(float(a @ a)) * math.sqrt(float(b @ b)))

    two_n = z.shape[0]
    n = two_n // 2
    total = 0.0
    for k in range(n):
        for (i, j) in ((2 * k, 2 * k + 1), (2 * k + 1, 2 * k)):
            num = math.exp(sim(z[i], z[j]) / tau)
            den = 0.0
            for m in range(two_n):
                if m != i:
                    den += math.exp(sim(z[i], z[m]) / tau)
            total += -math.log(num / den)
    return total / (2 * n)


def svm_dual_objective(
    alpha: np.ndarray, gram: np.ndarray, y: np.ndarray
) -> float:
    """Soft-margin dual objective: sum(alpha) - 0.5 alpha^T Q alpha, Q = yy^T * K."""
    q = (y[:, None] * y[None, :]) * gram
    return float(alpha.sum() - 0.5 * alpha @ q @ alpha)


def svm_dual_reference(
    gram: np.ndarray,
    y: np.ndarray,
    c: float,
    iters: int = 200_000,
    step: float | None = None,
) -> np.ndarray:
    """Projected-gradient ascent on the SVM dual over the feasible set
    {0 <= alpha <= C, sum(alpha * y) = 0}.  Dense and deliberately simple;
    stops early once the objective stalls to machine precision.
    """
    m = gram.shape[0]
    q = (y[:, None] * y[None, :]) * gram
    if step is None:
        eig = np.linalg.eigvalsh(q)
        lip = max(float(eig[-1]), 1e-12)
        step = 1.0 / lip
    alpha = _project_box_hyperplane(np.full(m, min(c / 2, 1e-3)), y, c)
    last_obj = -np.inf
    for it in range(iters):
        grad = 1.0 - q @ alpha
        alpha = _project_box_hyperplane(alpha + step * grad, y, c)
        if it % 500 == 499:
            obj = svm_dual_objective(alpha, gram, y)
            if obj - last_obj < 1e-13 * max(1.0, abs(obj)):
                break
            last_obj = obj
    return alpha


def _project_box_hyperplane(v: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """Exact Euclidean projection of v onto {0 <= a <= C, a.y = 0}, y in {-1,+1}.

    g(lam) = clip(v - lam*y, 0, C).y is piecewise linear and nonincreasing in
    lam; find the bracketing pair of breakpoints, then solve the linear
    segment exactly.  Breakpoints: v_i - lam*y_i hits 0 at lam = v_i*y_i and
    hits C at lam = (v_i - C)*y_i.
    """
    bps = np.sort(np.concatenate([v * y, (v - c) * y]))
    values = np.clip(v[None, :] - bps[:, None] * y[None, :], 0.0, c) @ y
    if values[-1] >= 0.0:  # g stays non-negative: constant tail past last bp
        lam = bps[-1]
    elif values[0] <= 0.0:  # g(-inf) = C * (#positives) >= 0, so root <= bps[0]
        lam = bps[0]
    else:
        k = int(np.searchsorted(-values, 0.0, side="left"))
        left, right, gl, gr = bps[k - 1], bps[k], values[k - 1], values[k]
        lam = left if gl == gr else left + (right - left) * gl / (gl - gr)
    return np.clip(v - lam * y, 0.0, c)


def f1_from(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
