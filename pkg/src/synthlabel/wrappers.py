"""Embedding-space wrapper classifiers: RBF-kernel SVM, kNN, logistic regression.

The SVM is trained with sequential minimal optimization using second-order
(maximal objective decrease) working-set selection.  One "sweep" is M pair
updates for M training points; training fails loudly if the KKT gap is still
above tol after ``max_passes`` sweeps.  SVM labels live in {-1,+1}; kNN and
logistic regression use {0,1}.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import kvtext, tnsr
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    DivergedError,
    FormatError,
    ParameterError,
    ShapeError,
)

_TAU = 1e-12  # curvature floor for degenerate pair directions
_PRUNE = 1e-8  # alphas at or below this are not support vectors


# ---------------------------------------------------------------------------
# RBF kernel


def rbf_kernel(u: np.ndarray, v: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||u - v||^2); equals 1.0 exactly at zero distance."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ShapeError(f"rbf_kernel: dims {u.shape} and {v.shape} differ")
    if gamma <= 0.0:
        raise ParameterError(f"rbf_kernel: gamma must be > 0, got {gamma}")
    d = u - v
    return float(np.exp(-gamma * (d @ d)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise kernel matrix K[i, j] = exp(-gamma ||a_i - b_j||^2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"rbf_gram: incompatible shapes {a.shape}, {b.shape}")
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    if a is b:
        np.fill_diagonal(sq, 0.0)
    return np.exp(-gamma * sq)


def default_gamma(h: np.ndarray) -> float:
    """Scale-aware heuristic 1 / (dim * var(H))."""
    h = np.asarray(h, dtype=np.float64)
    var = float(h.var())
    if var == 0.0:
        raise DegenerateInputError("default_gamma: embeddings have zero variance")
    return 1.0 / (h.shape[1] * var)


# ---------------------------------------------------------------------------
# SVM


@dataclass(frozen=True)
class SvmModel:
    """Pruned dual solution: only vectors with alpha > 1e-8 are kept."""

    support_vectors: np.ndarray  # (S, dim)
    alphas: np.ndarray  # (S,)
    labels: np.ndarray  # (S,) in {-1, +1}
    bias: float
    gamma: float
    c: float

    def __post_init__(self):
        s = self.support_vectors.shape[0]
        if self.alphas.shape != (s,) or self.labels.shape != (s,):
            raise ShapeError("SvmModel: field lengths disagree")
        if s and (self.alphas.min() <= _PRUNE or self.alphas.max() > self.c + 1e-12):
            raise ParameterError("SvmModel: alphas outside (1e-8, C]")
        if abs(float(self.alphas @ self.labels)) > 1e-6:
            raise ParameterError("SvmModel: sum(alpha * y) exceeds 1e-6")


def _check_binary_pm1(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ParameterError("svm labels must be in {-1, +1}")
    if (y > 0).all() or (y < 0).all():
        raise DegenerateInputError("svm_train needs at least one sample per class")
    return y


def smo_solve(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_passes: int,
) -> tuple[np.ndarray, float, float]:
    """Maximize the dual soft-margin objective; returns (alpha, bias, kkt_gap).

    Pair selection follows the second-order rule: the first index maximizes
    the KKT violation over the up set, the second minimizes the predicted
    objective change over the violating down set.  Each update clips the pair
    onto the box while preserving sum(alpha * y) exactly.
    """
    m = y.shape[0]
    q = (y[:, None] * y[None, :]) * kernel
    diag = np.ascontiguousarray(np.diag(kernel))
    alpha = np.zeros(m)
    grad = np.full(m, -1.0)  # gradient of 0.5 a'Qa - sum(a)
    max_updates = max_passes * m

    gap = np.inf
    for _ in range(max_updates):
        yg = y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            gap = 0.0
            break
        neg_yg = -yg
        i = int(np.argmax(np.where(up, neg_yg, -np.inf)))
        gmax = neg_yg[i]
        gmax2 = float(np.max(np.where(low, yg, -np.inf)))
        gap = gmax + gmax2
        if gap < tol:
            break
        grad_diff = gmax + yg
        quad = diag[i] + diag - 2.0 * kernel[i]
        np.maximum(quad, _TAU, out=quad)
        eligible = low & (grad_diff > 0.0)
        if not eligible.any():
            break
        score = np.where(eligible, -(grad_diff * grad_diff) / quad, np.inf)
        j = int(np.argmin(score))

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad[j]
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            else:
                if aj > c:
                    aj, ai = c, c + diff
        else:
            delta = (grad[i] - grad[j]) / quad[j]
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > c:
                if ai > c:
                    ai, aj = c, total - c
            else:
                if aj < 0:
                    aj, ai = 0.0, total
            if total > c:
                if aj > c:
                    aj, ai = c, total - c
            else:
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += q[:, i] * (ai - old_i) + q[:, j] * (aj - old_j)
    else:
        raise ConvergenceError(
            f"SMO did not converge in {max_passes} sweeps; KKT gap {gap:.3e}"
        )

    bias = _svm_bias(alpha, y, grad, c)
    return alpha, bias, float(max(gap, 0.0))


def _svm_bias(alpha: np.ndarray, y: np.ndarray, grad: np.ndarray, c: float) -> float:
    """Mean over free vectors of -y*grad; midpoint of the KKT bounds otherwise."""
    yg = y * grad
    free = (alpha > _PRUNE) & (alpha < c - _PRUNE)
    if free.any():
        return float(-yg[free].mean())
    at_upper = alpha >= c - _PRUNE
    at_lower = alpha <= _PRUNE
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = float(np.min(yg[ub_mask])) if ub_mask.any() else 0.0
    lb = float(np.max(yg[lb_mask])) if lb_mask.any() else 0.0
    return -(ub + lb) / 2.0


def svm_train(
    h: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_passes: int = 200,
) -> SvmModel:
    """Fit the RBF soft-margin SVM on embeddings ``h`` with labels in {-1,+1}."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ShapeError(f"svm_train: embeddings must be (M>=2, dim), got {h.shape}")
    y = _check_binary_pm1(y)
    if y.shape[0] != h.shape[0]:
        raise ShapeError("svm_train: embeddings and labels disagree in length")
    if c <= 0.0:
        raise ParameterError(f"svm_train: C must be > 0, got {c}")
    if not (0.0 < tol <= 1e-1):
        raise ParameterError(f"svm_train: tol must be in (0, 1e-1], got {tol}")
    if gamma is None:
        gamma = default_gamma(h)
    elif gamma <= 0.0:
        raise ParameterError(f"svm_train: gamma must be > 0, got {gamma}")

    kernel = rbf_gram(h, h, gamma)
    alpha, bias, _ = smo_solve(kernel, y, c, tol, max_passes)
    keep = alpha > _PRUNE
    return SvmModel(
        support_vectors=h[keep].copy(),
        alphas=alpha[keep].copy(),
        labels=y[keep].copy(),
        bias=bias,
        gamma=gamma,
        c=c,
    )


def svm_decision(model: SvmModel, h: np.ndarray) -> np.ndarray:
    """Decision values for a batch (N, dim) of embeddings."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.shape[1] != model.support_vectors.shape[1]:
        raise ShapeError(
            f"svm_decision: dim {h.shape[1]} does not match model "
            f"{model.support_vectors.shape[1]}"
        )
    k = rbf_gram(h, model.support_vectors, model.gamma)
    return k @ (model.alphas * model.labels) + model.bias


def svm_predict(model: SvmModel, h: np.ndarray) -> tuple[int, float]:
    """(label in {-1,+1}, decision value); sign(0) counts as +1."""
    score = float(svm_decision(model, h)[0])
    return (1 if score >= 0.0 else -1), score


def dual_objective(model: SvmModel) -> float:
    """sum(alpha) - 0.5 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)."""
    k = rbf_gram(model.support_vectors, model.support_vectors, model.gamma)
    ay = model.alphas * model.labels
    return float(model.alphas.sum() - 0.5 * ay @ k @ ay)


# ---------------------------------------------------------------------------
# kNN


@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray  # (M, dim)
    labels: np.ndarray  # (M,) class ids in {0, 1}
    k: int

    def __post_init__(self):
        if self.points.ndim != 2 or self.labels.shape != (self.points.shape[0],):
            raise ShapeError("KnnModel: points and labels disagree")
        if self.k < 1 or self.k > self.points.shape[0]:
            raise ParameterError(f"KnnModel: k={self.k} outside 1..{self.points.shape[0]}")
        if self.k % 2 == 0:
            raise ParameterError(f"KnnModel: k must be odd, got {self.k}")


def knn_fit(h: np.ndarray, y: np.ndarray, k: int = 5) -> KnnModel:
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if not np.isin(y, (0, 1)).all():
        raise ParameterError("knn labels must be in {0, 1}")
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"knn_fit: k must be odd and positive, got {k}")
    k_eff = min(k, h.shape[0])
    if k_eff % 2 == 0:  # clamping to the dataset size may land on even
        k_eff -= 1
    return KnnModel(points=h.copy(), labels=y.copy(), k=k_eff)


def knn_predict(model: KnnModel, h: np.ndarray) -> tuple[int, float]:
    """(majority label, vote share of the predicted label).

    Neighbors are ranked by (distance, index), so equidistant points resolve
    deterministically in favor of the earlier training point.
    """
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if h.shape[0] != model.points.shape[1]:
        raise ShapeError(
            f"knn_predict: dim {h.shape[0]} does not match model {model.points.shape[1]}"
        )
    d2 = ((model.points - h) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(d2.shape[0]), d2))[: model.k]
    votes = np.bincount(model.labels[order], minlength=2)
    label = int(np.argmax(votes))
    return label, float(votes[label] / model.k)


# ---------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray  # (dim,)
    bias: float

    def __post_init__(self):
        if self.weights.ndim != 1:
            raise ShapeError("LogRegModel: weights must be 1-D")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias)):
            raise ParameterError("LogRegModel: non-finite parameters")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logreg_loss(h: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float) -> float:
    """Mean cross-entropy plus (l2/2)||w||^2; the penalty spares the bias."""
    t = h @ w + b
    ce = np.logaddexp(0.0, t) - y * t
    return float(ce.mean() + 0.5 * l2 * (w @ w))


def logreg_train(
    h: np.ndarray,
    y: np.ndarray,
    learning_rate: float = 0.5,
    epochs: int = 500,
    l2: float = 0.0,
) -> LogRegModel:
    """Full-batch gradient descent from w=0, b=0 on the regularized loss.

    Features are standardized internally (per-column mean/std of H) so one
    default learning rate works across embedding scales; the affine transform
    is folded back into the returned weights, which act on raw features.  The
    L2 penalty therefore applies to the standardized-space weights.
    """
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if h.ndim != 2 or y.shape[0] != h.shape[0]:
        raise ShapeError(f"logreg_train: got {h.shape} embeddings, {y.shape} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ParameterError("logreg labels must be in {0, 1}")
    if learning_rate <= 0.0 or epochs < 1 or l2 < 0.0:
        raise ParameterError("logreg_train: bad learning_rate/epochs/l2")

    mu = h.mean(axis=0)
    sd = h.std(axis=0)
    sd[sd == 0.0] = 1.0  # constant columns carry no signal; leave them centered
    hs = (h - mu) / sd

    m = h.shape[0]
    w = np.zeros(h.shape[1])
    b = 0.0
    initial = logreg_loss(hs, y, w, b, l2)
    for _ in range(epochs):
        p = _sigmoid(hs @ w + b)
        residual = p - y
        w -= learning_rate * (hs.T @ residual / m + l2 * w)
        b -= learning_rate * float(residual.mean())
        loss = logreg_loss(hs, y, w, b, l2)
        if not np.isfinite(loss) or loss > initial * 10.0:
            raise DivergedError(
                f"logistic regression diverged (loss {loss:.3e} from {initial:.3e}); "
                "try a smaller learning rate"
            )
    w_raw = w / sd
    return LogRegModel(weights=w_raw, bias=b - float(w_raw @ mu))


def logreg_predict(model: LogRegModel, h: np.ndarray) -> tuple[int, float]:
    """(label, P(class 1)); the 0.5 tie goes to class 1."""
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if h.shape[0] != model.weights.shape[0]:
        raise ShapeError(
            f"logreg_predict: dim {h.shape[0]} does not match model "
            f"{model.weights.shape[0]}"
        )
    score = float(_sigmoid(np.array([h @ model.weights + model.bias]))[0])
    return (1 if score >= 0.5 else 0), score


# ---------------------------------------------------------------------------
# serialization: kind tag + canonical KV hyperparameters + TNSR tensors


def _payload(model: SvmModel | KnnModel | LogRegModel) -> tuple[str, list[np.ndarray]]:
    if isinstance(model, SvmModel):
        header = kvtext.dumps_flat(
            {
                "kind": "svm",
                "bias": repr(model.bias),
                "gamma": repr(model.gamma),
                "c": repr(model.c),
            }
        )
        arrays = [model.support_vectors, model.alphas, model.labels]
    elif isinstance(model, KnnModel):
        header = kvtext.dumps_flat({"kind": "knn", "k": str(model.k)})
        arrays = [model.points, model.labels.astype(np.float64)]
    elif isinstance(model, LogRegModel):
        header = kvtext.dumps_flat({"kind": "logreg", "bias": repr(model.bias)})
        arrays = [model.weights]
    else:
        raise ParameterError(f"save_wrapper: unknown model type {type(model).__name__}")
    return header, arrays


def wrapper_kind(model: SvmModel | KnnModel | LogRegModel) -> str:
    return kvtext.loads_flat(_payload(model)[0])["kind"]


def wrapper_hash(model: SvmModel | KnnModel | LogRegModel) -> str:
    """Identifies kind + hyperparameters + exact fitted values (16 hex chars)."""
    header, arrays = _payload(model)
    digest = hashlib.sha256(header.encode("utf-8"))
    for arr in arrays:
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()[:16]


def save_wrapper(path, model: SvmModel | KnnModel | LogRegModel) -> None:
    header, arrays = _payload(model)
    tnsr.save_tensors(path, header, arrays)


def load_wrapper(path) -> SvmModel | KnnModel | LogRegModel:
    header, arrays = tnsr.load_tensors(path)
    kv = kvtext.loads_flat(header)
    kind = kv.get("kind")
    if kind == "svm":
        if len(arrays) != 3:
            raise FormatError(f"svm wrapper file holds {len(arrays)} tensors, want 3")
        return SvmModel(
            support_vectors=arrays[0],
            alphas=arrays[1],
            labels=arrays[2],
            bias=float(kv["bias"]),
            gamma=float(kv["gamma"]),
            c=float(kv["c"]),
        )
    if kind == "knn":
        if len(arrays) != 2:
            raise FormatError(f"knn wrapper file holds {len(arrays)} tensors, want 2")
        return KnnModel(
            points=arrays[0], labels=arrays[1].astype(np.int64), k=int(kv["k"])
        )
    if kind == "logreg":
        if len(arrays) != 1:
            raise FormatError(f"logreg wrapper file holds {len(arrays)} tensors, want 1")
        return LogRegModel(weights=arrays[0], bias=float(kv["bias"]))
    raise FormatError(f"unknown wrapper kind {kind!r}")
