"""Pipeline stages downstream of pretraining.

Three operations compose the full run: ``fit_wrapper`` trains a classical
classifier on the labeled embeddings, ``synthesize_labels`` applies it to the
unlabeled set, and ``train_inductive`` fits a small CNN on the union of real
and synthetic labels.  ``transfer`` is the same composition driven by an
encoder pretrained elsewhere.  Every stage is deterministic under its seed,
and every training sample of the inductive classifier carries a provenance
string ("real" or "synthetic:<kind>:<model hash>").
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import augment, kvtext, tensor as T, tnsr, wrappers
from .augment import AugmentationSpec, AugSeed
from .contrastive import LossTrace, SgdOptimizer
from .data import Sample, SampleSet
from .encoder import EncoderConfig, EncoderModel, embed_images, encode_batch, init
from .errors import (
    DivergedError,
    FormatError,
    ParameterError,
    ProvenanceError,
    ShapeError,
)
from .parallel import ordered_map
from .seeds import derive, rng_from
from .tensor import Tensor


# ---------------------------------------------------------------------------
# wrapper stage


@dataclass(frozen=True)
class WrapperConfig:
    kind: str = "svm"  # svm | knn | logreg
    svm_c: float = 10.0
    svm_gamma: float | None = None  # None: 1/(dim*var) heuristic at fit time
    knn_k: int = 3
    logreg_learning_rate: float = 0.5
    logreg_epochs: int = 500
    # ~100 labeled embeddings in 64 dims: a linear model wants real shrinkage
    logreg_l2: float = 5e-2

    def __post_init__(self):
        if self.kind not in ("svm", "knn", "logreg"):
            raise ParameterError(
                f"wrapper kind must be svm, knn or logreg, got {self.kind!r}"
            )


@dataclass(frozen=True)
class FittedWrapper:
    """A trained wrapper plus the hash of the encoder it was fitted against."""

    kind: str
    model: wrappers.SvmModel | wrappers.KnnModel | wrappers.LogRegModel
    encoder_hash: str

    def model_hash(self) -> str:
        return wrappers.wrapper_hash(self.model)

    def provenance(self) -> str:
        return f"{self.kind}:{self.model_hash()}"

    def input_dim(self) -> int:
        return _wrapper_dim(self.model)


def _wrapper_dim(model) -> int:
    if isinstance(model, wrappers.SvmModel):
        return model.support_vectors.shape[1]
    if isinstance(model, wrappers.KnnModel):
        return model.points.shape[1]
    return model.weights.shape[0]


def fit_wrapper(
    encoder: EncoderModel, labeled: SampleSet, cfg: WrapperConfig
) -> FittedWrapper:
    """Embed the labeled set and train the configured wrapper on (h, y)."""
    if len(labeled) < 2:
        raise ParameterError(f"fit_wrapper: need >= 2 labeled samples, got {len(labeled)}")
    if len(labeled.class_names) != 2:
        raise ParameterError(
            f"wrappers are binary; sample set has {len(labeled.class_names)} classes"
        )
    y01 = labeled.label_array()
    h = embed_images(encoder, labeled.image_arrays())
    if cfg.kind == "svm":
        model = wrappers.svm_train(
            h, 2 * y01 - 1, c=cfg.svm_c, gamma=cfg.svm_gamma
        )
    elif cfg.kind == "knn":
        model = wrappers.knn_fit(h, y01, k=cfg.knn_k)
    else:
        model = wrappers.logreg_train(
            h,
            y01,
            learning_rate=cfg.logreg_learning_rate,
            epochs=cfg.logreg_epochs,
            l2=cfg.logreg_l2,
        )
    return FittedWrapper(kind=cfg.kind, model=model, encoder_hash=encoder.content_hash())


def _predict_one(wrapper: FittedWrapper, h: np.ndarray) -> tuple[int, float]:
    """(class id in {0,1}, wrapper score).

    Score semantics differ by kind: svm = signed decision value, knn = vote
    share of the winning class, logreg = P(class 1).
    """
    if wrapper.kind == "svm":
        label_pm, score = wrappers.svm_predict(wrapper.model, h)
        return (label_pm + 1) // 2, score
    if wrapper.kind == "knn":
        return wrappers.knn_predict(wrapper.model, h)
    return wrappers.logreg_predict(wrapper.model, h)


# ---------------------------------------------------------------------------
# synthetic labels


@dataclass(frozen=True)
class LabelEntry:
    sample_id: str
    label: int
    score: float
    provenance: str


@dataclass(frozen=True)
class SyntheticLabelSet:
    entries: tuple[LabelEntry, ...]

    def __post_init__(self):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ParameterError("synthetic label set has duplicate sample ids")
        for e in self.entries:
            if e.label < 0:
                raise ParameterError(f"negative label for {e.sample_id}")

    def __len__(self) -> int:
        return len(self.entries)

    def labels_by_id(self) -> dict[str, int]:
        return {e.sample_id: e.label for e in self.entries}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["sample_id", "label", "score", "provenance"])
            for e in self.entries:
                writer.writerow([e.sample_id, e.label, repr(e.score), e.provenance])

    @classmethod
    def read_csv(cls, path) -> "SyntheticLabelSet":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != ["sample_id", "label", "score", "provenance"]:
            raise FormatError(f"{path}: expected header sample_id,label,score,provenance")
        entries = []
        for row in rows[1:]:
            if len(row) != 4:
                raise FormatError(f"{path}: malformed row {row!r}")
            entries.append(
                LabelEntry(
                    sample_id=row[0],
                    label=int(row[1]),
                    score=float(row[2]),
                    provenance=row[3],
                )
            )
        return cls(entries=tuple(entries))


def synthesize_labels(
    encoder: EncoderModel,
    wrapper: FittedWrapper,
    unlabeled: SampleSet,
    allow_mismatch: bool = False,
) -> SyntheticLabelSet:
    """Predict one hard label per unlabeled sample; entries sorted by id.

    Refuses to label with a wrapper fitted against a different encoder
    (parameter or config drift) unless ``allow_mismatch`` is set.
    """
    current = encoder.content_hash()
    if wrapper.encoder_hash != current and not allow_mismatch:
        raise ProvenanceError(
            f"wrapper was fitted against encoder {wrapper.encoder_hash}, current "
            f"encoder is {current}; pass allow_mismatch=True to label anyway"
        )
    if wrapper.input_dim() != encoder.config.embed_dim:
        raise ShapeError(
            f"wrapper expects {wrapper.input_dim()}-dim embeddings, encoder "
            f"produces {encoder.config.embed_dim}"
        )
    samples = sorted(unlabeled.samples, key=lambda s: s.sample_id)
    h = embed_images(encoder, [s.image.data for s in samples])
    provenance = wrapper.provenance()

    def label_row(i: int) -> LabelEntry:
        label, score = _predict_one(wrapper, h[i])
        return LabelEntry(
            sample_id=samples[i].sample_id,
            label=label,
            score=score,
            provenance=provenance,
        )

    return SyntheticLabelSet(entries=tuple(ordered_map(label_row, range(len(samples)))))


# ---------------------------------------------------------------------------
# inductive classifier


@dataclass(frozen=True)
class InductiveConfig:
    conv_layers: tuple[tuple[int, int, int, int], ...] = (
        (8, 5, 1, 2),
        (16, 3, 1, 2),
        (32, 3, 1, 2),
    )
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    augment: AugmentationSpec | None = None  # None: train on raw images

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0.0:
            raise ParameterError("epochs and learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.momentum < 1.0):
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class InductiveClassifier:
    """Conv stack + linear logit head; same builder as the encoder, own weights.

    ``net.w_proj`` is empty — the classifier has no projection head, its
    embed layer *is* the logit layer (embed_dim == n_classes).
    """

    net: EncoderModel
    provenance: tuple[tuple[str, str], ...] = field(repr=False)  # (sample_id, origin)

    @property
    def n_classes(self) -> int:
        return self.net.config.embed_dim

    def logits(self, arrays: list[np.ndarray], batch: int = 64) -> np.ndarray:
        return embed_images(self.net, arrays, batch=batch)

    def predict(self, arrays: list[np.ndarray], batch: int = 64) -> np.ndarray:
        return np.argmax(self.logits(arrays, batch=batch), axis=1)

    def content_hash(self) -> str:
        return self.net.content_hash()


def _logit_net_config(
    input_size: tuple[int, int, int], cfg: InductiveConfig, n_classes: int
) -> EncoderConfig:
    # proj dims are irrelevant (w_proj stays empty) but must validate
    return EncoderConfig(
        input_size=input_size,
        conv_layers=cfg.conv_layers,
        embed_dim=n_classes,
        proj_hidden_dim=1,
        proj_out_dim=1,
    )


def train_inductive(
    labeled: SampleSet,
    synthetic: SyntheticLabelSet,
    unlabeled: SampleSet,
    cfg: InductiveConfig,
) -> tuple[InductiveClassifier, LossTrace]:
    """SGD + softmax cross-entropy on real and synthetic labels pooled.

    Synthetic ids resolve to images through ``unlabeled``.  Real and
    synthetic samples are shuffled together each epoch with equal weight; an
    empty synthetic set degenerates to plain supervised training on the
    labeled set.
    """
    if not labeled.fully_labeled():
        raise ParameterError("train_inductive: labeled set has unlabeled samples")
    n_classes = len(labeled.class_names)
    by_id = {s.sample_id: s for s in unlabeled.samples}
    stack: list[tuple[np.ndarray, int, str, str]] = [
        (s.image.data, s.label, "real", s.sample_id) for s in labeled.samples
    ]
    for e in synthetic.entries:
        if e.sample_id not in by_id:
            raise ParameterError(
                f"synthetic label for {e.sample_id!r} has no image in the unlabeled set"
            )
        if e.label >= n_classes:
            raise ParameterError(
                f"synthetic label {e.label} for {e.sample_id!r} outside "
                f"{n_classes}-class alphabet"
            )
        stack.append(
            (by_id[e.sample_id].image.data, e.label, f"synthetic:{e.provenance}", e.sample_id)
        )
    if not stack:
        raise ParameterError("train_inductive: no training samples at all")

    input_size = stack[0][0].shape
    net_cfg = _logit_net_config(input_size, cfg, n_classes)
    seeded = init(net_cfg, derive(cfg.seed, "inductive-init"))
    net = EncoderModel(config=net_cfg, theta=seeded.theta, w_proj=[], bn_stats=seeded.bn_stats)

    images = [row[0] for row in stack]
    labels = np.array([row[1] for row in stack], dtype=np.int64)
    opt = SgdOptimizer(net.parameters(), cfg.learning_rate, cfg.momentum)
    trace = LossTrace()
    shuffle_rng = rng_from(cfg.seed, "inductive-shuffle")
    n = len(stack)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        aug_seed = derive(cfg.seed, "inductive-aug", epoch)
        batch_losses: list[float] = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.augment is None:
                batch_arrays = [images[i] for i in idx]
            else:
                batch_arrays = [
                    augment.apply(
                        cfg.augment, Tensor(images[i]), AugSeed(aug_seed, int(i) + 1)
                    ).data
                    for i in idx
                ]
            logits = encode_batch(net, Tensor(np.stack(batch_arrays)), training=True)
            loss = T.softmax_cross_entropy(logits, labels[idx])
            value = loss.item()
            if not np.isfinite(value):
                err = DivergedError(
                    f"inductive training diverged at epoch {epoch} "
                    f"(batch starting at {start})"
                )
                err.trace = trace
                raise err
            loss.backward()
            opt.step()
            batch_losses.append(value)
        trace.append(epoch, float(np.mean(batch_losses)))

    classifier = InductiveClassifier(
        net=net, provenance=tuple((row[3], row[2]) for row in stack)
    )
    return classifier, trace


def save_classifier(path, clf: InductiveClassifier) -> None:
    header = kvtext.dumps_flat(clf.net.config.to_kv())
    arrays = [p.data for p in clf.net.parameters()] + list(clf.net.bn_stats)
    tnsr.save_tensors(path, header, arrays)


def load_classifier(path) -> InductiveClassifier:
    """Parameters and architecture only; training provenance lives in the
    synthetic-label CSV, not the checkpoint."""
    header, arrays = tnsr.load_tensors(path)
    config = EncoderConfig.from_kv(kvtext.loads_flat(header))
    n_layers = len(config.conv_layers)
    n_theta = 3 * n_layers + 2
    want = n_theta + 2 * n_layers
    if len(arrays) != want:
        raise FormatError(
            f"classifier checkpoint holds {len(arrays)} tensors, config wants {want}"
        )
    params = [Tensor(a, requires_grad=True) for a in arrays[:n_theta]]
    net = EncoderModel(
        config=config, theta=params, w_proj=[], bn_stats=list(arrays[n_theta:])
    )
    return InductiveClassifier(net=net, provenance=())


def write_provenance_csv(path, clf: InductiveClassifier) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "origin"])
        for sample_id, origin in clf.provenance:
            writer.writerow([sample_id, origin])


# ---------------------------------------------------------------------------
# transfer


@dataclass(frozen=True)
class TransferResult:
    wrapper: FittedWrapper
    synthetic: SyntheticLabelSet
    classifier: InductiveClassifier
    trace: LossTrace


def _resize_set(sample_set: SampleSet, size: tuple[int, int]) -> SampleSet:
    resized = tuple(
        Sample(
            sample_id=s.sample_id,
            image=augment.resize_bilinear(s.image, size),
            label=s.label,
        )
        for s in sample_set.samples
    )
    return SampleSet(samples=resized, class_names=sample_set.class_names)


def transfer(
    encoder: EncoderModel,
    labeled: SampleSet,
    unlabeled: SampleSet,
    wrapper_cfg: WrapperConfig,
    inductive_cfg: InductiveConfig,
) -> TransferResult:
    """Run wrapper fit, labeling and inductive training on dataset B using an
    encoder pretrained on dataset A — no re-pretraining.

    Images are bilinearly resized to the encoder's input size when the
    spatial dimensions differ; a channel-count mismatch is an error.  With
    A = B this is exactly the non-transfer pipeline.
    """
    c_in, h_in, w_in = encoder.config.input_size
    for name, part in (("labeled", labeled), ("unlabeled", unlabeled)):
        if len(part) and part.samples[0].image.shape[0] != c_in:
            raise ShapeError(
                f"transfer: {name} set has {part.samples[0].image.shape[0]} "
                f"channels, encoder wants {c_in}"
            )
    if len(labeled) and labeled.samples[0].image.shape[1:] != (h_in, w_in):
        labeled = _resize_set(labeled, (h_in, w_in))
    if len(unlabeled) and unlabeled.samples[0].image.shape[1:] != (h_in, w_in):
        unlabeled = _resize_set(unlabeled, (h_in, w_in))
    wrapper = fit_wrapper(encoder, labeled, wrapper_cfg)
    synthetic = synthesize_labels(encoder, wrapper, unlabeled)
    classifier, trace = train_inductive(labeled, synthetic, unlabeled, inductive_cfg)
    return TransferResult(
        wrapper=wrapper, synthetic=synthetic, classifier=classifier, trace=trace
    )


# ---------------------------------------------------------------------------
# embedding export


def export_embeddings(
    encoder: EncoderModel, samples: SampleSet, tensor_path, ids_path
) -> tuple[list[str], np.ndarray]:
    """Write the (N, embed_dim) embedding matrix (TNSR) and a parallel id CSV.

    Rows are ordered by sample_id; the same ordering is returned.
    """
    ordered = sorted(samples.samples, key=lambda s: s.sample_id)
    ids = [s.sample_id for s in ordered]
    h = embed_images(encoder, [s.image.data for s in ordered])
    header = kvtext.dumps_flat(
        {"kind": "embeddings", "encoder": encoder.content_hash(), "rows": str(len(ids))}
    )
    tnsr.save_tensors(tensor_path, header, [h])
    with open(ids_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id"])
        for sample_id in ids:
            writer.writerow([sample_id])
    return ids, h
