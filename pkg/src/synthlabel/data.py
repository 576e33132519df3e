"""Datasets: PNG ingestion, a deterministic procedural generator, and splits.

The procedural generator produces two texture classes on a shared base-color
palette: "plantation" (a regular dot grid) and "forest" (correlated blob
noise).  Brightness statistics overlap by construction, so the classes are
separable by texture, not by a global pixel threshold.

Splitting hides the labels of the unlabeled partition behind a sealed handle
that only the evaluation harness is meant to open; pipeline code sees those
samples as label-free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DegenerateInputError,
    FormatError,
    ParameterError,
    ShapeError,
)
from .parallel import ordered_map
from .seeds import rng_from
from .tensor import Tensor

CLASS_NAMES = ("plantation", "forest")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image: Tensor  # (C, H, W) in [0, 1]
    label: int | None


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[Sample, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ParameterError(f"duplicate sample ids: {dupes[:5]}")
        shapes = {s.image.shape for s in self.samples}
        if len(shapes) > 1:
            raise ShapeError(f"mixed image shapes in sample set: {sorted(shapes)}")
        for s in self.samples:
            arr = s.image.data
            if arr.ndim != 3 or arr.shape[0] not in (1, 3):
                raise ShapeError(
                    f"sample {s.sample_id}: image must be (C,H,W), got {s.image.shape}"
                )
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ParameterError(f"sample {s.sample_id}: pixels outside [0, 1]")
            if s.label is not None and not (0 <= s.label < len(self.class_names)):
                raise ParameterError(
                    f"sample {s.sample_id}: label {s.label} outside class range"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def image_arrays(self) -> list[np.ndarray]:
        return [s.image.data for s in self.samples]

    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def label_array(self) -> np.ndarray:
        """Labels as int64; raises if any sample is unlabeled."""
        labels = []
        for s in self.samples:
            if s.label is None:
                raise ParameterError(f"sample {s.sample_id} has no label")
            labels.append(s.label)
        return np.array(labels, dtype=np.int64)

    def fully_labeled(self) -> bool:
        return all(s.label is not None for s in self.samples)


class SealedLabels:
    """Ground truth of the unlabeled partition, kept out of pipeline reach.

    Only the evaluation harness may call ``unseal_for_evaluation``; anything
    else touching this object is a label leak.
    """

    def __init__(self, mapping: dict[str, int]):
        self.__mapping = dict(mapping)

    def __len__(self) -> int:
        return len(self.__mapping)

    def unseal_for_evaluation(self) -> dict[str, int]:
        return dict(self.__mapping)


@dataclass(frozen=True)
class SplitResult:
    labeled_train: SampleSet
    unlabeled_train: SampleSet
    test: SampleSet
    sealed: SealedLabels


@dataclass(frozen=True)
class SplitSpec:
    labeled_fraction: float = 0.1
    test_fraction: float = 1.0 / 6.0
    seed: int = 0
    balance: bool = True

    def __post_init__(self):
        if not (0.0 < self.labeled_fraction <= 1.0):
            raise ParameterError(
                f"labeled_fraction must be in (0, 1], got {self.labeled_fraction}"
            )
        if not (0.0 < self.test_fraction < 1.0):
            raise ParameterError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}"
            )


@dataclass(frozen=True)
class ProceduralSpec:
    """Two-class texture dataset; defaults are the calibrated desk-scale set."""

    n_per_class: int = 600
    image_size: int = 32
    seed: int = 0
    grid_spacing: tuple[int, int] = (4, 8)  # plantation: dot pitch range (px)
    dot_radius: float = 1.6  # plantation: dot radius (px)
    dot_depth: tuple[float, float] = (0.25, 0.60)  # plantation: darkening factor
    blob_scale: tuple[int, int] = (2, 6)  # forest: noise correlation length (px)
    blob_contrast: tuple[float, float] = (0.08, 0.40)  # forest: noise amplitude
    # narrow palettes on purpose: per-image color must not carry enough
    # identity to win the view-matching game on its own, or the encoder
    # never touches the texture statistics that actually separate classes
    base_red: tuple[float, float] = (0.22, 0.34)
    base_green: tuple[float, float] = (0.42, 0.54)
    base_blue: tuple[float, float] = (0.16, 0.28)
    pixel_noise: float = 0.01

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ParameterError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.image_size < 8:
            raise ParameterError(f"image_size must be >= 8, got {self.image_size}")
        if self.dot_radius >= self.grid_spacing[0]:
            raise ParameterError(
                f"dot radius {self.dot_radius} must be below the minimum grid "
                f"spacing {self.grid_spacing[0]}"
            )
        for name in ("grid_spacing", "dot_depth", "blob_scale", "blob_contrast",
                     "base_red", "base_green", "base_blue"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ParameterError(f"{name} range ({lo}, {hi}) is invalid")
        if self.pixel_noise < 0.0:
            raise ParameterError("pixel_noise must be >= 0")


def _quantize(img: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid k/255 so PNG round-trips are exact."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _base_color(spec: ProceduralSpec, rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [
            rng.uniform(*spec.base_red),
            rng.uniform(*spec.base_green),
            rng.uniform(*spec.base_blue),
        ]
    )


def _plantation_image(spec: ProceduralSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.image_size
    base = _base_color(spec, rng)
    spacing = int(rng.integers(spec.grid_spacing[0], spec.grid_spacing[1] + 1))
    phase_y = rng.uniform(0.0, spacing)
    phase_x = rng.uniform(0.0, spacing)
    depth = rng.uniform(*spec.dot_depth)

    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    # distance to the nearest grid node, wrapped over one spacing period
    dy = (yy - phase_y) % spacing
    dx = (xx - phase_x) % spacing
    dy = np.minimum(dy, spacing - dy)
    dx = np.minimum(dx, spacing - dx)
    dist = np.sqrt(dy * dy + dx * dx)
    # soft-edged dots; per-dot brightness jitter via low-frequency noise
    dot = np.clip(1.0 - dist / spec.dot_radius, 0.0, 1.0)
    shade = 1.0 - depth * dot
    # the dots darken the image, so lift the base to keep the mean on the
    # shared palette (texture, not brightness, should separate the classes)
    lift = depth * float(dot.mean())
    img = (base[:, None, None] * (1.0 + lift)) * shade[None, :, :]
    img += rng.normal(0.0, spec.pixel_noise, size=img.shape)
    return _quantize(img)


def _smooth_noise(rng: np.random.Generator, n: int, scale: int) -> np.ndarray:
    """Zero-mean correlated noise: upsampled coarse white noise, box-smoothed."""
    coarse = rng.normal(size=(n // scale + 2, n // scale + 2))
    up = np.repeat(np.repeat(coarse, scale, axis=0), scale, axis=1)[:n, :n]
    # one box-blur pass softens the block edges
    padded = np.pad(up, 1, mode="edge")
    out = sum(
        padded[1 + dy : 1 + dy + n, 1 + dx : 1 + dx + n]
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
    ) / 9.0
    out -= out.mean()
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def _forest_image(spec: ProceduralSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.image_size
    base = _base_color(spec, rng)
    scale = int(rng.integers(spec.blob_scale[0], spec.blob_scale[1] + 1))
    contrast = rng.uniform(*spec.blob_contrast)
    blobs = _smooth_noise(rng, n, scale) * contrast
    img = base[:, None, None] * (1.0 + blobs[None, :, :])
    img += rng.normal(0.0, spec.pixel_noise, size=img.shape)
    return _quantize(img)


def generate_procedural(spec: ProceduralSpec) -> SampleSet:
    """Deterministic per (spec.seed, class, index); class-balanced."""

    def one(task: tuple[int, int]) -> Sample:
        class_id, index = task
        rng = rng_from(spec.seed, "procedural", class_id, index)
        make = _plantation_image if class_id == 0 else _forest_image
        return Sample(
            sample_id=f"proc-{CLASS_NAMES[class_id]}-{index:04d}",
            image=Tensor(make(spec, rng)),
            label=class_id,
        )

    tasks = [(c, i) for c in (0, 1) for i in range(spec.n_per_class)]
    return SampleSet(samples=tuple(ordered_map(one, tasks)), class_names=CLASS_NAMES)


# ---------------------------------------------------------------------------
# PNG ingestion / export


def load_image_dir(directory, labels_csv=None, class_names=None) -> SampleSet:
    """PNG files (sorted by name) plus an optional `filename,label` CSV.

    Files absent from the CSV load as unlabeled.  When ``class_names`` is
    omitted it becomes the sorted set of label strings in the CSV.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise FormatError(f"no PNG files in {directory}")

    raw_labels: dict[str, str] = {}
    if labels_csv is not None:
        raw_labels = _read_labels_csv(labels_csv)
    if class_names is None:
        class_names = tuple(sorted(set(raw_labels.values())))
    else:
        class_names = tuple(class_names)
        unknown = sorted(set(raw_labels.values()) - set(class_names))
        if unknown:
            raise FormatError(f"unknown label strings in CSV: {unknown}")
    index = {name: i for i, name in enumerate(class_names)}

    def one(path: Path) -> Sample:
        arr = _read_png(path)
        name = raw_labels.get(path.name)
        return Sample(
            sample_id=path.name,
            image=Tensor(arr),
            label=None if name is None else index[name],
        )

    samples = ordered_map(one, paths)
    shapes = {s.image.shape for s in samples}
    if len(shapes) > 1:
        offenders = sorted(
            s.sample_id for s in samples if s.image.shape != samples[0].image.shape
        )
        raise ShapeError(
            f"mixed image sizes: {sorted(shapes)}; offending files {offenders[:5]}"
        )
    return SampleSet(samples=tuple(samples), class_names=class_names)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in ("RGB", "L"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except OSError as exc:
        raise FormatError(f"unreadable image {path.name}: {exc}") from exc
    if arr.ndim == 2:
        return arr[None, :, :]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _read_labels_csv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["filename", "label"]:
            raise FormatError(
                f"labels CSV must start with a 'filename,label' header, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise FormatError(f"labels CSV line {lineno}: expected 2 columns")
            filename, label = row[0].strip(), row[1].strip()
            if filename in out:
                raise FormatError(
                    f"labels CSV line {lineno}: duplicate filename {filename!r}"
                )
            if label:
                out[filename] = label
    return out


def save_image_dir(directory, sample_set: SampleSet) -> None:
    """Write samples as 8-bit PNGs plus labels.csv (`filename,label`)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in sample_set.samples:
        arr = s.image.data
        byte = np.round(arr * 255.0).astype(np.uint8)
        if byte.shape[0] == 1:
            img = Image.fromarray(byte[0], mode="L")
        else:
            img = Image.fromarray(byte.transpose(1, 2, 0), mode="RGB")
        filename = f"{s.sample_id}.png"
        img.save(directory / filename)
        label = "" if s.label is None else sample_set.class_names[s.label]
        rows.append((filename, label))
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# splitting


def _per_class_ids(sample_set: SampleSet) -> dict[int, list[str]]:
    by_class: dict[int, list[str]] = {}
    for s in sample_set.samples:
        by_class.setdefault(s.label, []).append(s.sample_id)
    return by_class


def split(sample_set: SampleSet, spec: SplitSpec) -> SplitResult:
    """Partition into labeled train / unlabeled train / test.

    Test is drawn first (per class when balance is set), then
    ``labeled_fraction`` of the per-class remainder keeps its labels; the
    rest has labels sealed away.  Deterministic per spec.seed.
    """
    if not sample_set.fully_labeled():
        raise ParameterError("split requires a fully labeled sample set")
    if len(sample_set) == 0:
        raise DegenerateInputError("cannot split an empty sample set")

    if spec.balance:
        groups = _per_class_ids(sample_set)
    else:
        groups = {0: [s.sample_id for s in sample_set.samples]}

    test_ids: set[str] = set()
    labeled_ids: set[str] = set()
    for class_id in sorted(groups):
        ids = sorted(groups[class_id])
        rng = rng_from(spec.seed, "split", class_id)
        order = [ids[i] for i in rng.permutation(len(ids))]
        n_test = int(round(spec.test_fraction * len(order)))
        if n_test == 0:
            raise ParameterError(
                f"test_fraction {spec.test_fraction} leaves class {class_id} "
                "with an empty test partition"
            )
        rest = order[n_test:]
        if not rest:
            raise ParameterError(
                f"test_fraction {spec.test_fraction} consumes all of class {class_id}"
            )
        if spec.labeled_fraction == 1.0:
            n_lab = len(rest)
        else:
            n_lab = int(round(spec.labeled_fraction * len(rest)))
            if n_lab == 0:
                raise ParameterError(
                    f"labeled_fraction {spec.labeled_fraction} leaves class "
                    f"{class_id} with no labeled training samples"
                )
            if n_lab == len(rest):
                raise ParameterError(
                    f"labeled_fraction {spec.labeled_fraction} leaves class "
                    f"{class_id} with no unlabeled training samples"
                )
        test_ids.update(order[:n_test])
        labeled_ids.update(rest[:n_lab])

    labeled, unlabeled, test, hidden = [], [], [], {}
    for s in sample_set.samples:  # preserve input order in every partition
        if s.sample_id in test_ids:
            test.append(s)
        elif s.sample_id in labeled_ids:
            labeled.append(s)
        else:
            hidden[s.sample_id] = s.label
            unlabeled.append(Sample(sample_id=s.sample_id, image=s.image, label=None))
    names = sample_set.class_names
    return SplitResult(
        labeled_train=SampleSet(samples=tuple(labeled), class_names=names),
        unlabeled_train=SampleSet(samples=tuple(unlabeled), class_names=names),
        test=SampleSet(samples=tuple(test), class_names=names),
        sealed=SealedLabels(hidden),
    )
