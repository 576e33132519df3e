"""Dense float64 tensors with reverse-mode automatic differentiation.

The tape is define-by-run: every op returns a new ``Tensor`` holding parent
links and one vector-Jacobian closure per parent, so the graph is exactly
the data structure built by a forward pass and is rebuilt on the next one.
``backward()`` re-initializes the gradients of the reachable subgraph before
accumulating, which makes repeated backward calls on one graph idempotent.

Ops never mutate their Tensor inputs (batch_norm2d updates its running-stat
side channel, which is plain arrays, never on the tape).  Every public op
validates that its output is finite and raises ``NonFiniteError`` otherwise.
Tensors always have at least one dimension; scalar results are shape ``(1,)``.

Hot kernels (conv2d, max_pool2d) dispatch to the backend selected in
``synthlabel.kernels``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateInputError, NonFiniteError, ParameterError, ShapeError

Vjp = Callable[[np.ndarray], np.ndarray]


def _as_f64(data) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(s <= 0 for s in arr.shape):
        raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
    return arr


def _finite_or_raise(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """Immutable-by-convention f64 array, optionally a node on the autodiff tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjps: tuple[Vjp | None, ...] = ()
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op})"

    def backward(self) -> None:
        """Reverse-mode pass from this scalar; fills ``.grad`` on reachable nodes.

        Gradients of the reachable subgraph are reset first, so calling twice
        yields identical results.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topo_order(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if vjp is None:
                    continue
                g = vjp(node.grad)
                if g.shape != parent.data.shape:
                    raise ShapeError(
                        f"{node._op}: gradient shape {g.shape} != value shape "
                        f"{parent.data.shape}"
                    )
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def _topo_order(root: Tensor) -> list[Tensor]:
    """Post-order over the reachable graph, iterative to spare the stack."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _make(
    data: np.ndarray,
    op: str,
    links: Sequence[tuple[Tensor, Vjp | None]],
) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _finite_or_raise(np.ascontiguousarray(data), op)
    out.requires_grad = any(p.requires_grad for p, _ in links)
    out.grad = None
    if out.requires_grad:
        out._parents = tuple(p for p, _ in links)
        out._vjps = tuple(v if p.requires_grad else None for p, v in links)
    else:
        out._parents = ()
        out._vjps = ()
    out._op = op
    return out


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _make(a.data + b.data, "add", [(a, lambda g: g), (b, lambda g: g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _make(
        a.data * b.data,
        "mul",
        [(a, lambda g: g * b.data), (b, lambda g: g * a.data)],
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, "scale", [(a, lambda g: g * c)])


def reshape(a: Tensor, shape: Iterable[int]) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape
    return _make(a.data.reshape(shape), "reshape", [(a, lambda g: g.reshape(old))])


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: need a matrix, got shape {a.shape}")
    return _make(
        np.ascontiguousarray(a.data.T),
        "transpose",
        [(a, lambda g: np.ascontiguousarray(g.T))],
    )


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _make(
        np.array([a.data.sum()]),
        "sum_all",
        [(a, lambda g: np.full(shape, g[0]))],
    )


def mean_reduce(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size
    return _make(
        np.array([a.data.mean()]),
        "mean_reduce",
        [(a, lambda g: np.full(shape, g[0] / n))],
    )


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), "relu", [(a, lambda g: g * mask)])


def leaky_relu(a: Tensor, alpha: float = 0.1) -> Tensor:
    """max(x, alpha*x); alpha in (0, 1) keeps negative units trainable."""
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"leaky_relu: alpha must be in (0, 1), got {alpha}")
    slope = np.where(a.data > 0, 1.0, alpha)
    return _make(a.data * slope, "leaky_relu", [(a, lambda g: g * slope)])


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: tuple[np.ndarray, np.ndarray],
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of (N, C, H, W) with a learnable affine.

    In training mode the batch statistics normalize, and ``running``
    (mean, biased variance — plain arrays, not tape nodes) is updated in
    place as an exponential moving average.  In eval mode the running
    statistics normalize, making the op a fixed per-channel affine so
    outputs do not depend on batch composition.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm2d: need (N,C,H,W), got shape {x.shape}")
    c = x.data.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm2d: gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}"
        )
    run_mean, run_var = running
    if run_mean.shape != (c,) or run_var.shape != (c,):
        raise ShapeError(f"batch_norm2d: running stats must be ({c},)")

    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        run_mean *= momentum
        run_mean += (1.0 - momentum) * mu
        run_var *= momentum
        run_var += (1.0 - momentum) * var
    else:
        mu = run_mean.copy()
        var = run_var.copy()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    centered = x.data - mu[None, :, None, None]

    def dx(g: np.ndarray) -> np.ndarray:
        dxhat = g * gamma.data[None, :, None, None]
        if not training:
            return dxhat * inv[None, :, None, None]
        # batch statistics are functions of x, so their gradients fold in
        dvar = (dxhat * centered).sum(axis=axes) * (-0.5) * inv**3
        dmu = -inv * dxhat.sum(axis=axes)
        return (
            dxhat * inv[None, :, None, None]
            + dvar[None, :, None, None] * 2.0 * centered / m
            + dmu[None, :, None, None] / m
        )

    def dgamma(g: np.ndarray) -> np.ndarray:
        return (g * xhat).sum(axis=axes)

    def dbeta(g: np.ndarray) -> np.ndarray:
        return g.sum(axis=axes)

    return _make(out, "batch_norm2d", [(x, dx), (gamma, dgamma), (beta, dbeta)])


def mean_spatial(a: Tensor) -> Tensor:
    """Average an (N, C, H, W) feature map over its spatial axes to (N, C)."""
    if a.data.ndim != 4:
        raise ShapeError(f"mean_spatial: need (N,C,H,W), got shape {a.shape}")
    n, c, h, w = a.data.shape
    return _make(
        a.data.mean(axis=(2, 3)),
        "mean_spatial",
        [(a, lambda g: np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)))],
    )


def batch_center(a: Tensor) -> Tensor:
    """Subtract the per-column mean of an (N, F) batch.

    Removes the direction shared by all rows, which otherwise dominates
    cosine similarities; a single row would center to zero, so N >= 2.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"batch_center: need (N, F), got shape {a.shape}")
    if a.shape[0] < 2:
        raise DegenerateInputError("batch_center: a single row centers to zero")
    mu = a.data.mean(axis=0, keepdims=True)
    return _make(
        a.data - mu,
        "batch_center",
        [(a, lambda g: g - g.mean(axis=0, keepdims=True))],
    )


def shift(a: Tensor, c: float) -> Tensor:
    """Add a scalar constant elementwise; gradient passes through unchanged."""
    c = float(c)
    return _make(a.data + c, "shift", [(a, lambda g: g)])


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul: need matrices, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions disagree for {a.shape} x {b.shape}"
        )
    return _make(
        a.data @ b.data,
        "matmul",
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a bias vector: to rows of (N,F), per-channel on (N,K,H,W), or to (F,)."""
    if b.data.ndim != 1:
        raise ShapeError(f"add_bias: bias must be 1-D, got shape {b.shape}")
    if x.data.ndim == 1:
        if x.shape != b.shape:
            raise ShapeError(f"add_bias: {x.shape} vs bias {b.shape}")
        out = x.data + b.data
        bvjp: Vjp = lambda g: g
    elif x.data.ndim == 2:
        if x.shape[1] != b.shape[0]:
            raise ShapeError(f"add_bias: {x.shape} vs bias {b.shape}")
        out = x.data + b.data
        bvjp = lambda g: g.sum(axis=0)
    elif x.data.ndim == 4:
        if x.shape[1] != b.shape[0]:
            raise ShapeError(f"add_bias: {x.shape} vs bias {b.shape}")
        out = x.data + b.data[None, :, None, None]
        bvjp = lambda g: g.sum(axis=(0, 2, 3))
    else:
        raise ShapeError(f"add_bias: unsupported input rank {x.data.ndim}")
    return _make(out, "add_bias", [(x, lambda g: g), (b, bvjp)])


# ---------------------------------------------------------------------------
# convolution and pooling (backend-dispatched)


def conv2d(x: Tensor, kern: Tensor, stride: int = 1) -> Tensor:
    """Valid cross-correlation of (C,H,W) or (N,C,H,W) input with (K,C,kh,kw) kernels."""
    if not isinstance(stride, int) or stride < 1:
        raise ParameterError(f"conv2d: stride must be a positive int, got {stride}")
    if kern.data.ndim != 4:
        raise ShapeError(f"conv2d: kernels must be (K,C,kh,kw), got {kern.shape}")
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d: input must be (C,H,W) or (N,C,H,W), got {x.shape}")
    n, c, h, w = xd.shape
    k, ck, kh, kw = kern.shape
    if ck != c:
        raise ShapeError(
            f"conv2d: input channels {c} != kernel channels {ck} "
            f"(input {x.shape}, kernels {kern.shape})"
        )
    if kh > h or kw > w:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than input {h}x{w} "
            f"(input {x.shape}, kernels {kern.shape})"
        )
    out = kernels.conv2d_forward(xd, kern.data, stride)

    def dx(g: np.ndarray) -> np.ndarray:
        g4 = g[None] if squeeze else g
        r = kernels.conv2d_backward_input(
            np.ascontiguousarray(g4), kern.data, stride, h, w
        )
        return r[0] if squeeze else r

    def dk(g: np.ndarray) -> np.ndarray:
        g4 = g[None] if squeeze else g
        return kernels.conv2d_backward_kernels(
            xd, np.ascontiguousarray(g4), stride, kh, kw
        )

    return _make(out[0] if squeeze else out, "conv2d", [(x, dx), (kern, dk)])


def max_pool2d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling with window ``size`` on (C,H,W) or (N,C,H,W)."""
    if not isinstance(size, int) or size < 1:
        raise ParameterError(f"max_pool2d: size must be a positive int, got {size}")
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(
            f"max_pool2d: input must be (C,H,W) or (N,C,H,W), got {x.shape}"
        )
    n, c, h, w = xd.shape
    if size > h or size > w:
        raise ShapeError(f"max_pool2d: window {size} larger than input {h}x{w}")
    out, idx = kernels.maxpool2d_forward(xd, size)

    def dx(g: np.ndarray) -> np.ndarray:
        g4 = g[None] if squeeze else g
        r = kernels.maxpool2d_backward(np.ascontiguousarray(g4), idx, size, h, w)
        return r[0] if squeeze else r

    return _make(out[0] if squeeze else out, "max_pool2d", [(x, dx)])


# ---------------------------------------------------------------------------
# losses and normalization


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer class labels."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be (N,C), got {logits.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != logits.shape[0]:
        raise ShapeError(
            f"softmax_cross_entropy: labels shape {y.shape} does not match "
            f"logits {logits.shape}"
        )
    if not np.issubdtype(y.dtype, np.integer):
        raise ParameterError("softmax_cross_entropy: labels must be integers")
    n, c = logits.shape
    if y.min() < 0 or y.max() >= c:
        raise ParameterError(
            f"softmax_cross_entropy: class index out of range for {c} classes"
        )
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=1, keepdims=True)
    logp = (z - m) - np.log(s)
    loss = -logp[np.arange(n), y].mean()

    def dz(g: np.ndarray) -> np.ndarray:
        p = e / s
        p[np.arange(n), y] -= 1.0
        return (g[0] / n) * p

    return _make(np.array([loss]), "softmax_cross_entropy", [(logits, dz)])


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row of (M,d) to unit L2 norm; zero rows are degenerate."""
    if a.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: need (M,d), got {a.shape}")
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    if (norms == 0.0).any():
        rows = np.flatnonzero(norms[:, 0] == 0.0).tolist()
        raise DegenerateInputError(f"l2_normalize_rows: zero rows at {rows}")
    y = a.data / norms

    def dx(g: np.ndarray) -> np.ndarray:
        inner = (g * y).sum(axis=1, keepdims=True)
        return (g - y * inner) / norms

    return _make(y, "l2_normalize_rows", [(a, dx)])


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    scalar_fn: Callable[[Tensor], Tensor],
    point,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``point`` is a Tensor or array-like.  Per coordinate the error is
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if not (0.0 < epsilon <= 1e-2):
        raise ParameterError(f"grad_check: epsilon must be in (0, 1e-2], got {epsilon}")
    base_arr = np.array(
        point.data if isinstance(point, Tensor) else point, dtype=np.float64
    )
    x = Tensor(base_arr.copy(), requires_grad=True)
    out = scalar_fn(x)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: scalar_fn returned shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NonFiniteError("grad_check: scalar_fn value is non-finite at point")
    out.backward()
    analytic = (
        x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    ).reshape(-1)

    base = base_arr.reshape(-1)
    max_err = 0.0
    for i in range(base.size):
        plus = base.copy()
        plus[i] += epsilon
        minus = base.copy()
        minus[i] -= epsilon
        f_plus = scalar_fn(Tensor(plus.reshape(base_arr.shape))).item()
        f_minus = scalar_fn(Tensor(minus.reshape(base_arr.shape))).item()
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError("grad_check: scalar_fn non-finite at perturbed point")
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]), abs(numeric))
        if err > max_err:
            max_err = err
    return max_err
