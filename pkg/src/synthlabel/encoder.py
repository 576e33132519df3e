"""Configurable conv-stack encoder and its projection head.

``encode`` maps an image to the embedding ``h`` consumed by every downstream
classifier; ``project`` maps ``h`` to the vector ``z`` used only inside the
contrastive loss.  The same conv-stack builder also backs the inductive
classifier in the pipeline module.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kvtext, tensor as T, tnsr
from .errors import FormatError, ParameterError, ShapeError
from .seeds import rng_from
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    input_size: tuple[int, int, int] = (3, 32, 32)
    conv_layers: tuple[tuple[int, int, int, int], ...] = (
        (8, 5, 1, 2),  # 5x5 first: the receptive field must span a texture element
        (16, 3, 1, 2),
        (32, 3, 1, 2),
    )  # (out_channels, kernel, stride, pool) per layer
    embed_dim: int = 64
    proj_hidden_dim: int = 64
    proj_out_dim: int = 32
    # average the final feature map over space instead of flattening it:
    # channel statistics are stable under crops and flips, a flattened grid
    # is not, and that stability is what the view-matching task trains on
    global_pool: bool = True

    def __post_init__(self):
        c, h, w = self.input_size
        if c not in (1, 3) or h < 1 or w < 1:
            raise ParameterError(f"bad input_size {self.input_size}")
        for dim_name in ("embed_dim", "proj_hidden_dim", "proj_out_dim"):
            if getattr(self, dim_name) < 1:
                raise ParameterError(f"{dim_name} must be positive")
        self.feature_shape()  # validates spatial flow

    def feature_shape(self) -> tuple[int, int, int]:
        """(C,H,W) after the conv stack; every stage must stay >= 1 px."""
        c, h, w = self.input_size
        for i, (out_c, k, stride, pool) in enumerate(self.conv_layers):
            if out_c < 1 or k < 1 or stride < 1 or pool < 1:
                raise ParameterError(f"conv layer {i}: non-positive field in {(out_c, k, stride, pool)}")
            if k > h or k > w:
                raise ParameterError(
                    f"conv layer {i}: kernel {k} exceeds spatial size {h}x{w}"
                )
            h = (h - k) // stride + 1
            w = (w - k) // stride + 1
            h //= pool
            w //= pool
            if h < 1 or w < 1:
                raise ParameterError(f"conv layer {i}: spatial size collapsed to {h}x{w}")
            c = out_c
        return c, h, w

    def flat_dim(self) -> int:
        c, h, w = self.feature_shape()
        return c if self.global_pool else c * h * w

    def to_kv(self) -> dict[str, str]:
        return {
            "input_size": "x".join(str(v) for v in self.input_size),
            "conv_layers": ",".join(
                f"{o}k{k}s{s}p{p}" for o, k, s, p in self.conv_layers
            ),
            "embed_dim": str(self.embed_dim),
            "proj_hidden_dim": str(self.proj_hidden_dim),
            "proj_out_dim": str(self.proj_out_dim),
            "global_pool": "1" if self.global_pool else "0",
        }

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "EncoderConfig":
        try:
            input_size = tuple(int(v) for v in kv["input_size"].split("x"))
            conv_layers = tuple(
                _parse_layer(s) for s in kv["conv_layers"].split(",") if s
            )
            return cls(
                input_size=input_size,  # type: ignore[arg-type]
                conv_layers=conv_layers,
                embed_dim=int(kv["embed_dim"]),
                proj_hidden_dim=int(kv["proj_hidden_dim"]),
                proj_out_dim=int(kv["proj_out_dim"]),
                global_pool=kv["global_pool"] == "1",
            )
        except KeyError as exc:
            raise FormatError(f"encoder config missing key {exc}") from exc


def _parse_layer(text: str) -> tuple[int, int, int, int]:
    # "8k3s1p2" -> (8, 3, 1, 2)
    try:
        out_c, rest = text.split("k")
        k, rest = rest.split("s")
        s, p = rest.split("p")
        return int(out_c), int(k), int(s), int(p)
    except ValueError as exc:
        raise FormatError(f"bad conv layer spec {text!r}, want e.g. 8k3s1p2") from exc


@dataclass
class EncoderModel:
    """Conv-stack parameters plus the two dense projection layers."""

    config: EncoderConfig
    theta: list[Tensor] = field(repr=False)  # per conv layer: kernel, bn gamma, bn beta; then embed dense w, b
    w_proj: list[Tensor] = field(repr=False)  # projection MLP weights/biases
    # running (mean, var) per conv layer, flat [m0, v0, m1, v1, ...]; updated
    # in place during training forwards, frozen (and read) at eval
    bn_stats: list[np.ndarray] = field(repr=False)

    def parameters(self) -> list[Tensor]:
        """Trainable tensors only; bn_stats are data, not parameters."""
        return [*self.theta, *self.w_proj]

    def content_hash(self) -> str:
        """Identifies config + exact parameter values (first 16 hex chars)."""
        digest = hashlib.sha256()
        digest.update(kvtext.dumps_flat(self.config.to_kv()).encode("utf-8"))
        for p in self.parameters():
            digest.update(p.data.tobytes())
        for s in self.bn_stats:
            digest.update(s.tobytes())
        return digest.hexdigest()[:16]


def _xavier(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=shape)


def init(config: EncoderConfig, seed: int) -> EncoderModel:
    """Xavier-uniform weights, zero biases, deterministic per seed.

    Conv layers carry no bias: each is followed by a batch norm whose beta
    plays that role after the per-channel recentering.
    """
    rng = rng_from(seed, "encoder-init")
    theta: list[Tensor] = []
    bn_stats: list[np.ndarray] = []
    c_in = config.input_size[0]
    for out_c, k, _stride, _pool in config.conv_layers:
        fan_in = c_in * k * k
        fan_out = out_c * k * k
        theta.append(Tensor(_xavier(rng, (out_c, c_in, k, k), fan_in, fan_out), requires_grad=True))
        theta.append(Tensor(np.ones(out_c), requires_grad=True))   # bn gamma
        theta.append(Tensor(np.zeros(out_c), requires_grad=True))  # bn beta
        bn_stats.extend([np.zeros(out_c), np.ones(out_c)])
        c_in = out_c
    flat = config.flat_dim()
    theta.append(Tensor(_xavier(rng, (flat, config.embed_dim), flat, config.embed_dim), requires_grad=True))
    theta.append(Tensor(np.zeros(config.embed_dim), requires_grad=True))
    w_proj = [
        Tensor(
            _xavier(rng, (config.embed_dim, config.proj_hidden_dim), config.embed_dim, config.proj_hidden_dim),
            requires_grad=True,
        ),
        Tensor(np.zeros(config.proj_hidden_dim), requires_grad=True),
        Tensor(
            _xavier(rng, (config.proj_hidden_dim, config.proj_out_dim), config.proj_hidden_dim, config.proj_out_dim),
            requires_grad=True,
        ),
        Tensor(np.zeros(config.proj_out_dim), requires_grad=True),
    ]
    return EncoderModel(config=config, theta=theta, w_proj=w_proj, bn_stats=bn_stats)


def encode_batch(model: EncoderModel, images: Tensor, training: bool = False) -> Tensor:
    """Forward a (N,C,H,W) batch to (N, embed_dim) embeddings.

    ``training=True`` normalizes with current-batch statistics and folds them
    into the running estimates; the default eval mode reads the frozen stats,
    so a sample's embedding does not depend on what it was batched with.
    """
    if images.data.ndim != 4 or images.data.shape[1:] != model.config.input_size:
        raise ShapeError(
            f"encode: batch shape {images.shape} does not match input size "
            f"{model.config.input_size}"
        )
    # center pixels: an all-positive input drives early activations toward a
    # one-sided collapse; leaky units keep the stack trainable either way
    x = T.shift(images, -0.5)
    it = iter(model.theta[: 3 * len(model.config.conv_layers)])
    for i, (_out_c, _k, stride, pool) in enumerate(model.config.conv_layers):
        kern = next(it)
        gamma = next(it)
        beta = next(it)
        x = T.conv2d(x, kern, stride)
        running = (model.bn_stats[2 * i], model.bn_stats[2 * i + 1])
        x = T.leaky_relu(T.batch_norm2d(x, gamma, beta, running, training))
        x = T.max_pool2d(x, pool)
    n = images.data.shape[0]
    if model.config.global_pool:
        x = T.mean_spatial(x)
    else:
        x = T.reshape(x, (n, model.config.flat_dim()))
    w, b = model.theta[-2], model.theta[-1]
    return T.add_bias(T.matmul(x, w), b)


def encode(model: EncoderModel, image: Tensor) -> Tensor:
    """Embedding h of a single (C,H,W) image."""
    if image.data.ndim != 3:
        raise ShapeError(f"encode: image must be (C,H,W), got {image.shape}")
    h = encode_batch(model, T.reshape(image, (1, *image.shape)))
    return T.reshape(h, (model.config.embed_dim,))


def project(model: EncoderModel, h: Tensor) -> Tensor:
    """Projection z = W2 relu(W1 h + b1) + b2 of (embed_dim,) or (N, embed_dim)."""
    single = h.data.ndim == 1
    hb = T.reshape(h, (1, *h.shape)) if single else h
    if hb.data.ndim != 2 or hb.shape[1] != model.config.embed_dim:
        raise ShapeError(f"project: got {h.shape}, want embed_dim {model.config.embed_dim}")
    w1, b1, w2, b2 = model.w_proj
    z = T.add_bias(T.matmul(T.leaky_relu(T.add_bias(T.matmul(hb, w1), b1)), w2), b2)
    return T.reshape(z, (model.config.proj_out_dim,)) if single else z


def embed_images(model: EncoderModel, arrays: list[np.ndarray], batch: int = 64) -> np.ndarray:
    """Plain-array convenience: stack, forward in batches, return (N, embed_dim)."""
    outs = []
    for start in range(0, len(arrays), batch):
        chunk = np.stack(arrays[start : start + batch])
        outs.append(encode_batch(model, Tensor(chunk)).data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, model.config.embed_dim))


def save_checkpoint(path, model: EncoderModel) -> None:
    header = kvtext.dumps_flat(model.config.to_kv())
    arrays = [p.data for p in model.parameters()] + list(model.bn_stats)
    tnsr.save_tensors(path, header, arrays)


def load_checkpoint(path) -> EncoderModel:
    header, arrays = tnsr.load_tensors(path)
    config = EncoderConfig.from_kv(kvtext.loads_flat(header))
    n_layers = len(config.conv_layers)
    n_theta = 3 * n_layers + 2
    want = n_theta + 4 + 2 * n_layers
    if len(arrays) != want:
        raise FormatError(
            f"checkpoint holds {len(arrays)} tensors, config wants {want}"
        )
    params = [Tensor(a, requires_grad=True) for a in arrays[: n_theta + 4]]
    return EncoderModel(
        config=config,
        theta=params[:n_theta],
        w_proj=params[n_theta:],
        bn_stats=list(arrays[n_theta + 4 :]),
    )
