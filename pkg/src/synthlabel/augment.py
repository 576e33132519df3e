"""Stochastic image augmentation producing correlated views for contrastive pairs.

The transformation is a composition crop -> resize -> flips -> rot90 ->
color jitter, each gated by a parameter sampled from an RNG derived from
``(seed, stream_id)`` alone, so the same ``AugSeed`` always reproduces the
same transformation bit-for-bit.  Pixel values stay in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .seeds import derive
from .tensor import Tensor


@dataclass(frozen=True)
class AugmentationSpec:
    """Parameters of the augmentation family.

    crop_scale_range: side-length fraction (lo, hi) sampled uniformly.
    flip_h_prob / flip_v_prob / rot90_prob: gate probabilities.
    jitter_strength: per-channel scale in [1-s, 1+s] and shift in [-s, +s].
    output_size: (H, W) after resize; must be square if rot90_prob > 0.
    """

    # defaults tuned at desk scale: milder crops than the usual recipe, and a
    # light jitter — strong per-channel jitter leaves this data with too
    # little view overlap for the matching task to get off the ground
    crop_scale_range: tuple[float, float] = (0.75, 1.0)
    flip_h_prob: float = 0.5
    flip_v_prob: float = 0.5
    rot90_prob: float = 0.5
    jitter_strength: float = 0.05
    output_size: tuple[int, int] = (32, 32)

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ParameterError(f"crop_scale_range must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        for name in ("flip_h_prob", "flip_v_prob", "rot90_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1], got {p}")
        if self.jitter_strength < 0.0:
            raise ParameterError(f"jitter_strength must be >= 0, got {self.jitter_strength}")
        h, w = self.output_size
        if h < 1 or w < 1:
            raise ParameterError(f"output_size must be positive, got {self.output_size}")
        if self.rot90_prob > 0.0 and h != w:
            raise ParameterError(
                "rot90_prob > 0 requires square output_size; "
                f"got {self.output_size}"
            )


@dataclass(frozen=True)
class AugSeed:
    """Identity of one random view: (run seed, per-view stream id)."""

    seed: int
    stream_id: int

    def rng(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(derive(self.seed, "augment", self.stream_id))
        )


def _check_image(image: Tensor) -> np.ndarray:
    arr = image.data
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeError(f"image must be (C,H,W) with C in {{1,3}}, got {image.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ParameterError("image pixel values must lie in [0, 1]")
    return arr


def flip_h(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, :, ::-1])


def flip_v(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1, :])


def rot90(image: np.ndarray) -> np.ndarray:
    """One counter-clockwise quarter turn over the spatial axes."""
    return np.ascontiguousarray(np.rot90(image, k=1, axes=(1, 2)))


def resize_bilinear(image: Tensor, target: tuple[int, int]) -> Tensor:
    """Corner-aligned bilinear resize to (H, W).

    A target axis of length 1 samples the source center.  Exact identity
    when target equals the source size, and exact on constant images (the
    interpolation is written as v0 + w*(v1 - v0)).
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise ParameterError(f"resize target must be positive, got {target}")
    arr = image.data
    if arr.ndim != 3:
        raise ShapeError(f"resize_bilinear: image must be (C,H,W), got {image.shape}")
    return Tensor(_resize_array(arr, th, tw))


def _axis_positions(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.array([(src - 1) / 2.0])
    return np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))


def _resize_array(arr: np.ndarray, th: int, tw: int) -> np.ndarray:
    _, h, w = arr.shape
    py = _axis_positions(h, th)
    px = _axis_positions(w, tw)
    y0 = np.floor(py).astype(np.intp)
    x0 = np.floor(px).astype(np.intp)
    y0 = np.minimum(y0, h - 1)
    x0 = np.minimum(x0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (py - y0)[None, :, None]
    wx = (px - x0)[None, None, :]
    g00 = arr[:, y0][:, :, x0]
    g01 = arr[:, y0][:, :, x1]
    g10 = arr[:, y1][:, :, x0]
    g11 = arr[:, y1][:, :, x1]
    top = g00 + wx * (g01 - g00)
    bot = g10 + wx * (g11 - g10)
    return np.ascontiguousarray(top + wy * (bot - top))


def apply(spec: AugmentationSpec, image: Tensor, seed: AugSeed) -> Tensor:
    """One random view of ``image``.

    All random parameters are drawn in a fixed order regardless of gating, so
    the draw sequence (and hence determinism) does not depend on outcomes.
    """
    arr = _check_image(image)
    _, h, w = arr.shape
    rng = seed.rng()

    scale = rng.uniform(spec.crop_scale_range[0], spec.crop_scale_range[1])
    top_u = rng.uniform()
    left_u = rng.uniform()
    u_fh = rng.uniform()
    u_fv = rng.uniform()
    u_rot = rng.uniform()
    s = spec.jitter_strength
    alphas = rng.uniform(1.0 - s, 1.0 + s, size=arr.shape[0])
    betas = rng.uniform(-s, s, size=arr.shape[0])

    crop_h = int(np.floor(scale * h))
    crop_w = int(np.floor(scale * w))
    if crop_h < 1 or crop_w < 1:
        raise ParameterError(
            f"crop window degenerate: scale {scale:.4f} of {h}x{w} is below 1 px"
        )
    top = int(np.floor(top_u * (h - crop_h + 1)))
    left = int(np.floor(left_u * (w - crop_w + 1)))
    top = min(top, h - crop_h)
    left = min(left, w - crop_w)
    out = arr[:, top : top + crop_h, left : left + crop_w]

    out = _resize_array(out, spec.output_size[0], spec.output_size[1])
    if u_fh < spec.flip_h_prob:
        out = flip_h(out)
    if u_fv < spec.flip_v_prob:
        out = flip_v(out)
    if u_rot < spec.rot90_prob:
        out = rot90(out)
    out = alphas[:, None, None] * out + betas[:, None, None]
    out = np.clip(out, 0.0, 1.0)
    return Tensor(out)


def make_pair(
    spec: AugmentationSpec, image: Tensor, seed: int, sample_index: int
) -> tuple[Tensor, Tensor]:
    """Two independent views of sample ``sample_index`` (0-based).

    Stream ids are 2k+1 and 2k+2, i.e. the (2k-1, 2k) convention for
    1-indexed sample k.
    """
    a = apply(spec, image, AugSeed(seed, 2 * sample_index + 1))
    b = apply(spec, image, AugSeed(seed, 2 * sample_index + 2))
    return a, b
