"""Normalized temperature-scaled cross-entropy loss and the pretraining loop.

A batch holds 2N projection vectors ordered so rows (2k, 2k+1) are the two
views of sample k.  The loss of an ordered pair (i, j) is

    l(i, j) = -log( exp(sim(z_i, z_j)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )

and the batch loss averages l over all 2N ordered positive pairs.  The
log-sum-exp is computed with max subtraction.  Gradients flow through the
cosine similarities, including the row normalization.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import AugmentationSpec, make_pair
from .encoder import EncoderModel, encode_batch, project
from .errors import DegenerateInputError, DivergedError, ParameterError, ShapeError
from .parallel import ordered_map
from .seeds import derive, rng_from
from .tensor import Tensor

log = logging.getLogger(__name__)


def _pair_views(
    spec: AugmentationSpec,
    images: list[np.ndarray],
    idx: np.ndarray,
    view_seed: int,
) -> list[np.ndarray]:
    """Both views for each sample in ``idx``, in batch order.

    View generation is a pure function of (seed, sample index), so the
    worker pool (SYNTHLABEL_THREADS) cannot change the result.
    """

    def one(sample_index: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = make_pair(spec, Tensor(images[sample_index]), view_seed, sample_index)
        return a.data, b.data

    views: list[np.ndarray] = []
    for a, b in ordered_map(one, [int(i) for i in idx]):
        views.append(a)
        views.append(b)
    return views


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); zero vectors are degenerate."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ShapeError(f"cosine_sim: shapes {u.shape} and {v.shape} differ")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine_sim: zero vector")
    return float(u @ v) / (nu * nv)


@dataclass(frozen=True)
class ContrastiveBatch:
    """2N projection rows, pairs adjacent: rows (2k, 2k+1) belong to sample k."""

    z: Tensor
    n_pairs: int

    def __post_init__(self):
        if self.z.data.ndim != 2:
            raise ShapeError(f"batch z must be (2N, d), got {self.z.shape}")
        if self.n_pairs < 1 or self.z.shape[0] != 2 * self.n_pairs:
            raise ShapeError(
                f"batch has {self.z.shape[0]} rows, expected 2*{self.n_pairs}"
            )


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.2
    batch_pairs: int = 16
    epochs: int = 30
    learning_rate: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 disables periodic checkpoints

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_pairs < 2:
            raise ParameterError(
                f"batch_pairs must be >= 2 (N=1 makes the loss identically 0), "
                f"got {self.batch_pairs}"
            )
        if self.epochs < 0 or self.learning_rate < 0.0:
            raise ParameterError("epochs and learning_rate must be non-negative")
        if not (0.0 <= self.momentum < 1.0):
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")


def _pairwise_loss_from_sims(sims: Tensor) -> Tensor:
    """Mean over rows i of [logsumexp_{k != i} S[i,k] - S[i, partner(i)]].

    ``sims`` is the (2N, 2N) similarity matrix already divided by tau;
    partner(i) = i XOR 1.  Gradient per row is the masked softmax minus the
    positive-pair indicator, scaled by 1/(2N).
    """
    s = sims.data
    n2 = s.shape[0]
    if s.shape != (n2, n2) or n2 % 2 != 0 or n2 < 4:
        raise ShapeError(f"similarity matrix must be (2N, 2N), N >= 2, got {sims.shape}")
    partner = np.arange(n2) ^ 1
    masked = s.copy()
    np.fill_diagonal(masked, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    denom = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    losses = lse - s[np.arange(n2), partner]
    value = np.array([losses.mean()])

    def dsims(g: np.ndarray) -> np.ndarray:
        p = e / denom
        p[np.arange(n2), partner] -= 1.0
        return (g[0] / n2) * p

    return T._make(value, "nt_xent_pairs", [(sims, dsims)])


def nt_xent_loss(batch: ContrastiveBatch, temperature: float) -> Tensor:
    """Differentiable batch loss; raises on zero rows (see pretrain for handling)."""
    if temperature <= 0.0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    zn = T.l2_normalize_rows(batch.z)
    sims = T.scale(T.matmul(zn, T.transpose(zn)), 1.0 / temperature)
    return _pairwise_loss_from_sims(sims)


def nt_xent_value(z: np.ndarray, temperature: float) -> float:
    """Loss value on a plain array (no graph)."""
    return nt_xent_loss(
        ContrastiveBatch(z=Tensor(z), n_pairs=z.shape[0] // 2), temperature
    ).item()


@dataclass
class LossTrace:
    """Per-epoch mean training loss."""

    epochs: list[int] = field(default_factory=list)
    mean_losses: list[float] = field(default_factory=list)

    def append(self, epoch: int, mean_loss: float) -> None:
        self.epochs.append(epoch)
        self.mean_losses.append(mean_loss)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "mean_loss"])
            for e, v in zip(self.epochs, self.mean_losses):
                writer.writerow([e, repr(v)])


class SgdOptimizer:
    """Plain SGD with optional momentum over a fixed parameter list."""

    def __init__(self, params: list[Tensor], learning_rate: float, momentum: float):
        self.params = params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            v *= self.momentum
            v += g
            p.data = p.data - self.learning_rate * v


def _desparsify(z: Tensor, rng: np.random.Generator, where: str) -> Tensor:
    """Replace all-zero rows with tiny uniform noise; loud, never silent.

    Replaced rows become constants: no gradient flows back through them.
    """
    norms = np.sqrt((z.data * z.data).sum(axis=1))
    dead = np.flatnonzero(norms == 0.0)
    if dead.size == 0:
        return z
    log.warning("%s: %d dead (all-zero) projection rows perturbed", where, dead.size)
    out = z.data.copy()
    out[dead] = rng.uniform(-1e-6, 1e-6, size=(dead.size, z.data.shape[1]))

    def dz(g: np.ndarray) -> np.ndarray:
        g2 = g.copy()
        g2[dead] = 0.0
        return g2

    return T._make(out, "desparsify", [(z, dz)])


def pretrain(
    images: list[np.ndarray],
    spec: AugmentationSpec,
    model: EncoderModel,
    cfg: TrainConfig,
    checkpoint_fn=None,
) -> tuple[EncoderModel, LossTrace]:
    """Contrastive pretraining over labeled + unlabeled images (labels unused).

    Each epoch: seeded shuffle, batches of ``batch_pairs`` samples (last
    incomplete batch dropped), two views per sample, one SGD step per batch.
    ``checkpoint_fn(epoch, model)`` fires every ``cfg.checkpoint_every`` epochs.
    """
    n = len(images)
    if n < cfg.batch_pairs:
        raise ParameterError(
            f"dataset size {n} is below batch_pairs {cfg.batch_pairs}"
        )
    params = model.parameters()
    opt = SgdOptimizer(params, cfg.learning_rate, cfg.momentum)
    trace = LossTrace()
    shuffle_rng = rng_from(cfg.seed, "pretrain-shuffle")
    dead_rng = rng_from(cfg.seed, "pretrain-dead-rows")

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        view_seed = derive(cfg.seed, "pretrain-views", epoch)
        batch_losses: list[float] = []
        for start in range(0, n - cfg.batch_pairs + 1, cfg.batch_pairs):
            idx = order[start : start + cfg.batch_pairs]
            views = _pair_views(spec, images, idx, view_seed)
            stack = Tensor(np.stack(views))
            h = encode_batch(model, stack, training=True)
            # center h across the batch before projecting: the conv stack
            # gives every image a large shared component, and cosine
            # similarities saturate (loss plateaus at the uniform level)
            # unless that common direction is removed during training
            z = project(model, T.batch_center(h))
            z = _desparsify(z, dead_rng, f"pretrain epoch {epoch}")
            loss = nt_xent_loss(
                ContrastiveBatch(z=z, n_pairs=cfg.batch_pairs), cfg.temperature
            )
            value = loss.item()
            if not np.isfinite(value):
                raise DivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_pairs}"
                )
            loss.backward()
            opt.step()
            batch_losses.append(value)
        trace.append(epoch, float(np.mean(batch_losses)))
        if checkpoint_fn and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint_fn(epoch, model)
    return model, trace
