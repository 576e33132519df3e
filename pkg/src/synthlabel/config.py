"""Run configuration: one sectioned key-value file drives every stage.

Sections: [dataset] [split] [augment] [encoder] [pretrain] [wrapper]
[inductive] [run].  Missing keys fall back to defaults; unknown keys and
unknown sections are errors.  ``canonical()`` re-emits every key of every
section in sorted order, so the SHA-256 config hash does not depend on how
the file happened to be written.  The output directory is excluded from the
hash: it says where artifacts land, not what they are.

There is one seed.  ``[run] master_seed`` is copied into every stage config
at load time; per-stage keys never carry their own seeds, so a ``--seed``
override re-seeds the whole run coherently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from . import kvtext
from .augment import AugmentationSpec
from .contrastive import TrainConfig
from .data import ProceduralSpec, SplitSpec
from .encoder import EncoderConfig
from .errors import FormatError, ParameterError
from .pipeline import InductiveConfig, WrapperConfig

SECTIONS = (
    "dataset",
    "split",
    "augment",
    "encoder",
    "pretrain",
    "wrapper",
    "inductive",
    "run",
)


# ---------------------------------------------------------------------------
# scalar codecs: parse errors carry section and key


def _fail(section: str, key: str, text: str, want: str) -> FormatError:
    return FormatError(f"[{section}] {key} = {text!r}: expected {want}")


def _get_int(kv: dict[str, str], section: str, key: str, default: int) -> int:
    text = kv.pop(key, None)
    if text is None:
        return default
    try:
        return int(text)
    except ValueError:
        raise _fail(section, key, text, "an integer") from None


def _get_float(kv: dict[str, str], section: str, key: str, default: float) -> float:
    text = kv.pop(key, None)
    if text is None:
        return default
    try:
        return float(text)
    except ValueError:
        raise _fail(section, key, text, "a number") from None


def _get_bool(kv: dict[str, str], section: str, key: str, default: bool) -> bool:
    text = kv.pop(key, None)
    if text is None:
        return default
    if text not in ("0", "1"):
        raise _fail(section, key, text, "0 or 1")
    return text == "1"


def _get_str(kv: dict[str, str], section: str, key: str, default: str) -> str:
    return kv.pop(key, default)


def _get_pair(
    kv: dict[str, str], section: str, key: str, default: tuple, cast=float
) -> tuple:
    """``lo:hi`` ranges, e.g. ``grid_spacing = 4:8``."""
    text = kv.pop(key, None)
    if text is None:
        return default
    parts = text.split(":")
    if len(parts) != 2:
        raise _fail(section, key, text, "a 'lo:hi' pair")
    try:
        return (cast(parts[0]), cast(parts[1]))
    except ValueError:
        raise _fail(section, key, text, f"a 'lo:hi' pair of {cast.__name__}s") from None


def _get_size(
    kv: dict[str, str], section: str, key: str, default: tuple[int, int]
) -> tuple[int, int]:
    """``HxW`` sizes, e.g. ``output_size = 32x32``."""
    text = kv.pop(key, None)
    if text is None:
        return default
    parts = text.split("x")
    if len(parts) != 2:
        raise _fail(section, key, text, "an 'HxW' size")
    try:
        return (int(parts[0]), int(parts[1]))
    except ValueError:
        raise _fail(section, key, text, "an 'HxW' size") from None


def _num(x: float) -> str:
    """Canonical float text: repr() is the shortest round-trip form."""
    return repr(float(x))


def _pair(p: tuple, render=_num) -> str:
    return f"{render(p[0])}:{render(p[1])}"


def _reject_leftovers(section: str, kv: dict[str, str]) -> None:
    if kv:
        raise FormatError(f"[{section}] has unknown keys: {', '.join(sorted(kv))}")


# ---------------------------------------------------------------------------
# dataset section: procedural generation or an external image directory


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "procedural"  # procedural | images
    procedural: ProceduralSpec = ProceduralSpec()
    image_dir: str = ""
    labels_csv: str = ""

    def __post_init__(self):
        if self.source not in ("procedural", "images"):
            raise ParameterError(
                f"[dataset] source must be procedural or images, got {self.source!r}"
            )
        if self.source == "images" and not (self.image_dir and self.labels_csv):
            raise ParameterError(
                "[dataset] source = images requires image_dir and labels_csv"
            )


_PROCEDURAL_KEYS = (
    "n_per_class",
    "image_size",
    "grid_spacing",
    "dot_radius",
    "dot_depth",
    "blob_scale",
    "blob_contrast",
    "base_red",
    "base_green",
    "base_blue",
    "pixel_noise",
)


def _load_dataset(kv: dict[str, str], master_seed: int) -> DatasetConfig:
    kv = dict(kv)
    source = _get_str(kv, "dataset", "source", "procedural")
    if source == "images":
        for key in _PROCEDURAL_KEYS:
            if key in kv:
                raise FormatError(
                    f"[dataset] {key} only applies to source = procedural"
                )
        cfg = DatasetConfig(
            source="images",
            procedural=ProceduralSpec(seed=master_seed),
            image_dir=_get_str(kv, "dataset", "image_dir", ""),
            labels_csv=_get_str(kv, "dataset", "labels_csv", ""),
        )
    else:
        for key in ("image_dir", "labels_csv"):
            if key in kv:
                raise FormatError(f"[dataset] {key} only applies to source = images")
        d = ProceduralSpec()  # defaults
        spec = ProceduralSpec(
            n_per_class=_get_int(kv, "dataset", "n_per_class", d.n_per_class),
            image_size=_get_int(kv, "dataset", "image_size", d.image_size),
            seed=master_seed,
            grid_spacing=_get_pair(kv, "dataset", "grid_spacing", d.grid_spacing, int),
            dot_radius=_get_float(kv, "dataset", "dot_radius", d.dot_radius),
            dot_depth=_get_pair(kv, "dataset", "dot_depth", d.dot_depth),
            blob_scale=_get_pair(kv, "dataset", "blob_scale", d.blob_scale, int),
            blob_contrast=_get_pair(kv, "dataset", "blob_contrast", d.blob_contrast),
            base_red=_get_pair(kv, "dataset", "base_red", d.base_red),
            base_green=_get_pair(kv, "dataset", "base_green", d.base_green),
            base_blue=_get_pair(kv, "dataset", "base_blue", d.base_blue),
            pixel_noise=_get_float(kv, "dataset", "pixel_noise", d.pixel_noise),
        )
        cfg = DatasetConfig(source="procedural", procedural=spec)
    _reject_leftovers("dataset", kv)
    return cfg


def _dump_dataset(cfg: DatasetConfig) -> dict[str, str]:
    if cfg.source == "images":
        return {
            "source": "images",
            "image_dir": cfg.image_dir,
            "labels_csv": cfg.labels_csv,
        }
    p = cfg.procedural
    return {
        "source": "procedural",
        "n_per_class": str(p.n_per_class),
        "image_size": str(p.image_size),
        "grid_spacing": _pair(p.grid_spacing, str),
        "dot_radius": _num(p.dot_radius),
        "dot_depth": _pair(p.dot_depth),
        "blob_scale": _pair(p.blob_scale, str),
        "blob_contrast": _pair(p.blob_contrast),
        "base_red": _pair(p.base_red),
        "base_green": _pair(p.base_green),
        "base_blue": _pair(p.base_blue),
        "pixel_noise": _num(p.pixel_noise),
    }


# ---------------------------------------------------------------------------
# remaining sections


def _load_split(kv: dict[str, str], master_seed: int) -> SplitSpec:
    kv = dict(kv)
    d = SplitSpec()
    spec = SplitSpec(
        labeled_fraction=_get_float(kv, "split", "labeled_fraction", d.labeled_fraction),
        test_fraction=_get_float(kv, "split", "test_fraction", d.test_fraction),
        seed=master_seed,
        balance=_get_bool(kv, "split", "balance", d.balance),
    )
    _reject_leftovers("split", kv)
    return spec


def _dump_split(spec: SplitSpec) -> dict[str, str]:
    return {
        "labeled_fraction": _num(spec.labeled_fraction),
        "test_fraction": _num(spec.test_fraction),
        "balance": "1" if spec.balance else "0",
    }


def _load_augment(kv: dict[str, str]) -> AugmentationSpec:
    kv = dict(kv)
    d = AugmentationSpec()
    spec = AugmentationSpec(
        crop_scale_range=_get_pair(kv, "augment", "crop_scale", d.crop_scale_range),
        flip_h_prob=_get_float(kv, "augment", "flip_h_prob", d.flip_h_prob),
        flip_v_prob=_get_float(kv, "augment", "flip_v_prob", d.flip_v_prob),
        rot90_prob=_get_float(kv, "augment", "rot90_prob", d.rot90_prob),
        jitter_strength=_get_float(kv, "augment", "jitter_strength", d.jitter_strength),
        output_size=_get_size(kv, "augment", "output_size", d.output_size),
    )
    _reject_leftovers("augment", kv)
    return spec


def _dump_augment(spec: AugmentationSpec) -> dict[str, str]:
    return {
        "crop_scale": _pair(spec.crop_scale_range),
        "flip_h_prob": _num(spec.flip_h_prob),
        "flip_v_prob": _num(spec.flip_v_prob),
        "rot90_prob": _num(spec.rot90_prob),
        "jitter_strength": _num(spec.jitter_strength),
        "output_size": f"{spec.output_size[0]}x{spec.output_size[1]}",
    }


def _load_encoder(kv: dict[str, str]) -> EncoderConfig:
    # EncoderConfig already has a canonical KV form (checkpoint headers use
    # it); merge user keys over the defaults and reuse it.
    defaults = EncoderConfig().to_kv()
    unknown = sorted(set(kv) - set(defaults))
    if unknown:
        raise FormatError(f"[encoder] has unknown keys: {', '.join(unknown)}")
    return EncoderConfig.from_kv({**defaults, **kv})


def _load_pretrain(kv: dict[str, str], master_seed: int) -> TrainConfig:
    kv = dict(kv)
    d = TrainConfig()
    cfg = TrainConfig(
        temperature=_get_float(kv, "pretrain", "temperature", d.temperature),
        batch_pairs=_get_int(kv, "pretrain", "batch_pairs", d.batch_pairs),
        epochs=_get_int(kv, "pretrain", "epochs", d.epochs),
        learning_rate=_get_float(kv, "pretrain", "learning_rate", d.learning_rate),
        momentum=_get_float(kv, "pretrain", "momentum", d.momentum),
        seed=master_seed,
        checkpoint_every=_get_int(kv, "pretrain", "checkpoint_every", d.checkpoint_every),
    )
    _reject_leftovers("pretrain", kv)
    return cfg


def _dump_pretrain(cfg: TrainConfig) -> dict[str, str]:
    return {
        "temperature": _num(cfg.temperature),
        "batch_pairs": str(cfg.batch_pairs),
        "epochs": str(cfg.epochs),
        "learning_rate": _num(cfg.learning_rate),
        "momentum": _num(cfg.momentum),
        "checkpoint_every": str(cfg.checkpoint_every),
    }


def _load_wrapper(kv: dict[str, str]) -> WrapperConfig:
    kv = dict(kv)
    d = WrapperConfig()
    gamma_text = kv.pop("svm_gamma", "auto")
    if gamma_text == "auto":
        gamma = None
    else:
        try:
            gamma = float(gamma_text)
        except ValueError:
            raise _fail("wrapper", "svm_gamma", gamma_text, "a number or 'auto'") from None
    cfg = WrapperConfig(
        kind=_get_str(kv, "wrapper", "kind", d.kind),
        svm_c=_get_float(kv, "wrapper", "svm_c", d.svm_c),
        svm_gamma=gamma,
        knn_k=_get_int(kv, "wrapper", "knn_k", d.knn_k),
        logreg_learning_rate=_get_float(
            kv, "wrapper", "logreg_learning_rate", d.logreg_learning_rate
        ),
        logreg_epochs=_get_int(kv, "wrapper", "logreg_epochs", d.logreg_epochs),
        logreg_l2=_get_float(kv, "wrapper", "logreg_l2", d.logreg_l2),
    )
    _reject_leftovers("wrapper", kv)
    return cfg


def _dump_wrapper(cfg: WrapperConfig) -> dict[str, str]:
    return {
        "kind": cfg.kind,
        "svm_c": _num(cfg.svm_c),
        "svm_gamma": "auto" if cfg.svm_gamma is None else _num(cfg.svm_gamma),
        "knn_k": str(cfg.knn_k),
        "logreg_learning_rate": _num(cfg.logreg_learning_rate),
        "logreg_epochs": str(cfg.logreg_epochs),
        "logreg_l2": _num(cfg.logreg_l2),
    }


def _load_inductive(
    kv: dict[str, str], master_seed: int, augment_spec: AugmentationSpec
) -> InductiveConfig:
    kv = dict(kv)
    d = InductiveConfig()
    layers_text = kv.pop("conv_layers", None)
    if layers_text is None:
        layers = d.conv_layers
    else:
        layers = EncoderConfig.from_kv(
            {**EncoderConfig().to_kv(), "conv_layers": layers_text}
        ).conv_layers
    cfg = InductiveConfig(
        conv_layers=layers,
        epochs=_get_int(kv, "inductive", "epochs", d.epochs),
        batch_size=_get_int(kv, "inductive", "batch_size", d.batch_size),
        learning_rate=_get_float(kv, "inductive", "learning_rate", d.learning_rate),
        momentum=_get_float(kv, "inductive", "momentum", d.momentum),
        seed=master_seed,
        augment=augment_spec if _get_bool(kv, "inductive", "augment", False) else None,
    )
    _reject_leftovers("inductive", kv)
    return cfg


def _dump_inductive(cfg: InductiveConfig) -> dict[str, str]:
    return {
        "conv_layers": ",".join(f"{o}k{k}s{s}p{p}" for o, k, s, p in cfg.conv_layers),
        "epochs": str(cfg.epochs),
        "batch_size": str(cfg.batch_size),
        "learning_rate": _num(cfg.learning_rate),
        "momentum": _num(cfg.momentum),
        "augment": "0" if cfg.augment is None else "1",
    }


# ---------------------------------------------------------------------------
# the whole run


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    split: SplitSpec
    augment: AugmentationSpec
    encoder: EncoderConfig
    pretrain: TrainConfig
    wrapper: WrapperConfig
    inductive: InductiveConfig
    out: str
    master_seed: int

    def __post_init__(self):
        # whole-config validation: catch cross-section mismatches before any
        # stage burns time on them
        c, h, w = self.encoder.input_size
        if self.dataset.source == "procedural":
            size = self.dataset.procedural.image_size
            if (c, h, w) != (3, size, size):
                raise ParameterError(
                    f"[encoder] input_size {c}x{h}x{w} does not match the "
                    f"procedural dataset (3x{size}x{size})"
                )
        if self.augment.output_size != (h, w):
            raise ParameterError(
                f"[augment] output_size {self.augment.output_size} does not "
                f"match the encoder input {h}x{w}"
            )
        for name, seed in (
            ("dataset", self.dataset.procedural.seed),
            ("split", self.split.seed),
            ("pretrain", self.pretrain.seed),
            ("inductive", self.inductive.seed),
        ):
            if seed != self.master_seed:
                raise ParameterError(
                    f"{name} seed {seed} drifted from master seed {self.master_seed}"
                )

    @classmethod
    def default(cls, master_seed: int = 0, out: str = "runs") -> "RunConfig":
        return cls.from_text(f"[run]\nmaster_seed = {master_seed}\nout = {out}\n")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        sections = kvtext.loads_sections(text)
        unknown = sorted(set(sections) - set(SECTIONS))
        if unknown:
            raise FormatError(f"unknown config sections: {', '.join(unknown)}")
        run = dict(sections.get("run", {}))
        master_seed = _get_int(run, "run", "master_seed", 0)
        out = _get_str(run, "run", "out", "runs")
        _reject_leftovers("run", run)
        aug = _load_augment(sections.get("augment", {}))
        return cls(
            dataset=_load_dataset(sections.get("dataset", {}), master_seed),
            split=_load_split(sections.get("split", {}), master_seed),
            augment=aug,
            encoder=_load_encoder(sections.get("encoder", {})),
            pretrain=_load_pretrain(sections.get("pretrain", {}), master_seed),
            wrapper=_load_wrapper(sections.get("wrapper", {})),
            inductive=_load_inductive(sections.get("inductive", {}), master_seed, aug),
            out=out,
            master_seed=master_seed,
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def _sections(self) -> dict[str, dict[str, str]]:
        return {
            "dataset": _dump_dataset(self.dataset),
            "split": _dump_split(self.split),
            "augment": _dump_augment(self.augment),
            "encoder": self.encoder.to_kv(),
            "pretrain": _dump_pretrain(self.pretrain),
            "wrapper": _dump_wrapper(self.wrapper),
            "inductive": _dump_inductive(self.inductive),
            "run": {"master_seed": str(self.master_seed), "out": self.out},
        }

    def canonical(self) -> str:
        """Full sectioned dump, every key present, sorted."""
        return kvtext.dumps_sections(self._sections())

    def hashed_text(self) -> str:
        """Canonical text minus [run] out — the hash ignores artifact location."""
        sections = self._sections()
        del sections["run"]["out"]
        return kvtext.dumps_sections(sections)

    def config_hash(self) -> str:
        return kvtext.sha256_text(self.hashed_text())

    def short_hash(self) -> str:
        return self.config_hash()[:12]

    def with_overrides(
        self,
        seed: int | None = None,
        labeled_fraction: float | None = None,
        wrapper: str | None = None,
        out: str | None = None,
    ) -> "RunConfig":
        """Apply CLI flag overrides; a new seed re-seeds every stage."""
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(
                cfg,
                master_seed=seed,
                dataset=dataclasses.replace(
                    cfg.dataset,
                    procedural=dataclasses.replace(cfg.dataset.procedural, seed=seed),
                ),
                split=dataclasses.replace(cfg.split, seed=seed),
                pretrain=dataclasses.replace(cfg.pretrain, seed=seed),
                inductive=dataclasses.replace(cfg.inductive, seed=seed),
            )
        if labeled_fraction is not None:
            cfg = dataclasses.replace(
                cfg, split=dataclasses.replace(cfg.split, labeled_fraction=labeled_fraction)
            )
        if wrapper is not None:
            cfg = dataclasses.replace(
                cfg, wrapper=dataclasses.replace(cfg.wrapper, kind=wrapper)
            )
        if out is not None:
            cfg = dataclasses.replace(cfg, out=out)
        return cfg
