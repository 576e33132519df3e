"""Command-line driver: one config file in, artifacts plus manifests out.

Every stage writes into ``<out>/<stage>/<config-hash-prefix>/`` — outputs are
content-addressed by the hash of the effective configuration, so artifacts
from different configs can never be mixed silently.  A stage directory is
complete once its ``manifest.json`` exists (the manifest is written last);
directories without one are wiped and rebuilt, completed ones are reused.

Manifests carry no timestamps and no absolute paths: the same config and
seed produce bit-identical output trees wherever they run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from contextlib import contextmanager
from pathlib import Path

from . import kvtext, metrics, pipeline, verify
from . import wrappers as wrapperlib
from .config import RunConfig
from .contrastive import pretrain
from .data import SampleSet, generate_procedural, load_image_dir, save_image_dir, split
from .encoder import init, load_checkpoint, save_checkpoint
from .errors import (
    LockError,
    MissingArtifactError,
    ParameterError,
    ProvenanceError,
    SynthLabelError,
)
from .pipeline import FittedWrapper, SyntheticLabelSet

PIPELINE_STAGES = (
    "gen-data",
    "pretrain",
    "embed",
    "fit-wrapper",
    "label",
    "train-inductive",
    "eval",
)


# ---------------------------------------------------------------------------
# plumbing: hashing, locking, stage directories, manifests


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@contextmanager
def _locked(out: Path):
    """One subcommand per output directory; the lock holds our pid."""
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(
            f"output directory {out} is locked by another synthlabel process; "
            f"remove {lock} if that process is gone"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _stage_dir(cfg: RunConfig, stage: str, suffix: str = "") -> Path:
    return Path(cfg.out) / stage / (cfg.short_hash() + suffix)


def _is_complete(stage_dir: Path) -> bool:
    return (stage_dir / "manifest.json").exists()


def _fresh_dir(stage_dir: Path) -> Path:
    """Wipe a partial stage directory (no manifest) and start over."""
    if stage_dir.exists():
        shutil.rmtree(stage_dir)
    stage_dir.mkdir(parents=True)
    return stage_dir


def _input_entries(cfg: RunConfig, paths: list[Path]) -> dict[str, str]:
    """{path: sha256} with paths relative to the output root when inside it,
    so manifests compare equal across output locations."""
    out_root = Path(cfg.out).resolve()
    entries: dict[str, str] = {}
    for p in paths:
        try:
            key = str(p.resolve().relative_to(out_root))
        except ValueError:
            key = str(p)
        entries[key] = _sha256_file(p)
    return entries


def _write_manifest(
    cfg: RunConfig,
    stage_dir: Path,
    stage: str,
    inputs: dict[str, str],
    extra: dict | None = None,
) -> Path:
    outputs = {
        str(p.relative_to(stage_dir)): _sha256_file(p)
        for p in sorted(stage_dir.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    doc = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "config": cfg.hashed_text(),
        "inputs": inputs,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    path = stage_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _find_artifact(
    cfg: RunConfig, stage: str, rel_file: str, what: str, force: bool, producer: str | None = None
) -> Path:
    """Resolve a prior stage's artifact for the current config hash.

    Only completed stage directories (manifest present) count.  A hash
    mismatch is refused unless --force, which takes the newest candidate.
    """
    producer = producer or stage
    root = Path(cfg.out) / stage
    exact_dir = root / cfg.short_hash()
    exact = exact_dir / rel_file
    if exact.exists() and _is_complete(exact_dir):
        return exact
    candidates = [
        p
        for p in sorted(root.glob(f"*/{rel_file}"))
        if p.is_file() and _is_complete(root / p.relative_to(root).parts[0])
    ]
    if not candidates:
        raise MissingArtifactError(f"missing {what}; run {producer}")
    if not force:
        hashes = ", ".join(sorted({p.relative_to(root).parts[0] for p in candidates}))
        raise ProvenanceError(
            f"{what} exists for config hash(es) {hashes}, but the current config "
            f"hash is {cfg.short_hash()}; re-run {producer} with this config or "
            f"pass --force to use the newest mismatched artifact"
        )
    return max(candidates, key=lambda p: p.stat().st_mtime)


def _load_run_dataset(cfg: RunConfig, force: bool):
    """Dataset (from gen-data's artifacts) plus its split and manifest path."""
    manifest = _find_artifact(cfg, "gen-data", "manifest.json", "dataset", force)
    images = manifest.parent / "images"
    dataset = load_image_dir(images, labels_csv=images / "labels.csv")
    return manifest, dataset, split(dataset, cfg.split)


def _percent(x: float) -> str:
    return f"{x:.1%}"


# ---------------------------------------------------------------------------
# stages


def do_gen_data(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "gen-data")
    if _is_complete(stage_dir):
        print(f"gen-data: reusing {stage_dir} (config hash matches)")
        return stage_dir
    inputs: list[Path] = []
    if cfg.dataset.source == "procedural":
        dataset = generate_procedural(cfg.dataset.procedural)
    else:
        source_dir = Path(cfg.dataset.image_dir)
        labels_csv = Path(cfg.dataset.labels_csv)
        dataset = load_image_dir(source_dir, labels_csv=labels_csv)
        if not dataset.fully_labeled():
            raise ParameterError(
                "gen-data: every image needs a label in the CSV — the split "
                "stage cannot partition unlabeled samples"
            )
        inputs = [labels_csv] + sorted(source_dir.glob("*.png"))
    _fresh_dir(stage_dir)
    save_image_dir(stage_dir / "images", dataset)
    _write_manifest(cfg, stage_dir, "gen-data", _input_entries(cfg, inputs))
    print(f"gen-data: {len(dataset)} samples -> {stage_dir}")
    return stage_dir


def do_pretrain(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "pretrain")
    if _is_complete(stage_dir):
        print(f"pretrain: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    train_images = (
        res.labeled_train.image_arrays() + res.unlabeled_train.image_arrays()
    )
    model = init(cfg.encoder, seed=cfg.master_seed)
    model, trace = pretrain(train_images, cfg.augment, model, cfg.pretrain)
    _fresh_dir(stage_dir)
    save_checkpoint(stage_dir / "encoder.tnsr", model)
    trace.write_csv(stage_dir / "loss.csv")
    _write_manifest(cfg, stage_dir, "pretrain", _input_entries(cfg, [ds_manifest]))
    if trace.mean_losses:
        print(
            f"pretrain: {len(trace.epochs)} epochs on {len(train_images)} images, "
            f"loss {trace.mean_losses[0]:.4f} -> {trace.mean_losses[-1]:.4f}"
        )
    else:
        print("pretrain: 0 epochs (checkpoint is the initialization)")
    return stage_dir


def do_embed(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "embed")
    if _is_complete(stage_dir):
        print(f"embed: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    enc_path = _find_artifact(cfg, "pretrain", "encoder.tnsr", "encoder checkpoint", force)
    model = load_checkpoint(enc_path)
    _fresh_dir(stage_dir)
    counts = []
    for name, part in (
        ("labeled", res.labeled_train),
        ("unlabeled", res.unlabeled_train),
        ("test", res.test),
    ):
        pipeline.export_embeddings(
            model, part, stage_dir / f"{name}.tnsr", stage_dir / f"{name}_ids.csv"
        )
        counts.append(f"{len(part)} {name}")
    _write_manifest(
        cfg, stage_dir, "embed", _input_entries(cfg, [ds_manifest, enc_path])
    )
    print(f"embed: {', '.join(counts)} -> {stage_dir}")
    return stage_dir


def do_fit_wrapper(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "fit-wrapper")
    if _is_complete(stage_dir):
        print(f"fit-wrapper: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    enc_path = _find_artifact(cfg, "pretrain", "encoder.tnsr", "encoder checkpoint", force)
    model = load_checkpoint(enc_path)
    fitted = pipeline.fit_wrapper(model, res.labeled_train, cfg.wrapper)
    _fresh_dir(stage_dir)
    wrapperlib.save_wrapper(stage_dir / "wrapper.tnsr", fitted.model)
    (stage_dir / "wrapper.meta").write_text(
        kvtext.dumps_flat(
            {
                "kind": fitted.kind,
                "encoder_hash": fitted.encoder_hash,
                "model_hash": fitted.model_hash(),
            }
        ),
        encoding="utf-8",
    )
    _write_manifest(
        cfg, stage_dir, "fit-wrapper", _input_entries(cfg, [ds_manifest, enc_path])
    )
    print(
        f"fit-wrapper: {fitted.kind} fitted on {len(res.labeled_train)} labeled samples"
    )
    return stage_dir


def do_label(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "label")
    if _is_complete(stage_dir):
        print(f"label: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    enc_path = _find_artifact(cfg, "pretrain", "encoder.tnsr", "encoder checkpoint", force)
    wrap_path = _find_artifact(cfg, "fit-wrapper", "wrapper.tnsr", "wrapper model", force)
    meta_path = wrap_path.parent / "wrapper.meta"
    meta = kvtext.loads_flat(meta_path.read_text(encoding="utf-8"))
    fitted = FittedWrapper(
        kind=meta["kind"],
        model=wrapperlib.load_wrapper(wrap_path),
        encoder_hash=meta["encoder_hash"],
    )
    model = load_checkpoint(enc_path)
    synthetic = pipeline.synthesize_labels(
        model, fitted, res.unlabeled_train, allow_mismatch=force
    )
    _fresh_dir(stage_dir)
    synthetic.write_csv(stage_dir / "synthetic_labels.csv")
    _write_manifest(
        cfg,
        stage_dir,
        "label",
        _input_entries(cfg, [ds_manifest, enc_path, wrap_path, meta_path]),
    )
    print(f"label: {len(synthetic)} synthetic labels from the {fitted.kind} wrapper")
    return stage_dir


def do_train_inductive(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "train-inductive")
    if _is_complete(stage_dir):
        print(f"train-inductive: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    labels_path = _find_artifact(cfg, "label", "synthetic_labels.csv", "synthetic labels", force)
    synthetic = SyntheticLabelSet.read_csv(labels_path)
    clf, trace = pipeline.train_inductive(
        res.labeled_train, synthetic, res.unlabeled_train, cfg.inductive
    )
    _fresh_dir(stage_dir)
    pipeline.save_classifier(stage_dir / "classifier.tnsr", clf)
    trace.write_csv(stage_dir / "loss.csv")
    pipeline.write_provenance_csv(stage_dir / "provenance.csv", clf)
    _write_manifest(
        cfg,
        stage_dir,
        "train-inductive",
        _input_entries(cfg, [ds_manifest, labels_path]),
    )
    n_real = len(res.labeled_train)
    print(
        f"train-inductive: {len(trace.epochs)} epochs on {n_real} real + "
        f"{len(synthetic)} synthetic labels"
    )
    return stage_dir


def do_eval(cfg: RunConfig, force: bool = False) -> Path:
    stage_dir = _stage_dir(cfg, "eval")
    if _is_complete(stage_dir):
        print(f"eval: reusing {stage_dir} (config hash matches)")
        return stage_dir
    ds_manifest, _, res = _load_run_dataset(cfg, force)
    clf_path = _find_artifact(
        cfg, "train-inductive", "classifier.tnsr", "inductive classifier", force
    )
    labels_path = _find_artifact(cfg, "label", "synthetic_labels.csv", "synthetic labels", force)
    clf = pipeline.load_classifier(clf_path)
    predictions = clf.predict(res.test.image_arrays())
    report = metrics.evaluate(
        list(predictions), list(res.test.label_array()), positive_class=1
    )
    synthetic = SyntheticLabelSet.read_csv(labels_path)
    quality = metrics.synthetic_label_quality(synthetic.labels_by_id(), res.sealed)
    _fresh_dir(stage_dir)
    (stage_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (stage_dir / "synthetic_quality.json").write_text(quality.to_json(), encoding="utf-8")
    _write_manifest(
        cfg,
        stage_dir,
        "eval",
        _input_entries(cfg, [ds_manifest, clf_path, labels_path]),
    )
    print(
        f"eval: test accuracy {_percent(report.accuracy)}  "
        f"precision {_percent(report.precision)}  recall {_percent(report.recall)}  "
        f"f1 {_percent(report.f1)}  (n={report.confusion.n})"
    )
    print(f"eval: synthetic-label accuracy {_percent(quality.accuracy)}")
    return stage_dir


# ---------------------------------------------------------------------------
# eval --sweep: the labeled-fraction curve


def _parse_sweep(text: str) -> list[float]:
    key, _, values = text.partition("=")
    if key.strip() != "labeled-fraction" or not values.strip():
        raise ParameterError(
            f"--sweep expects labeled-fraction=F1,F2,..., got {text!r}"
        )
    try:
        fractions = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"--sweep has a non-numeric fraction in {text!r}") from None
    if not fractions:
        raise ParameterError(f"--sweep lists no fractions: {text!r}")
    return fractions


def _parse_seeds(text: str | None, default: int) -> list[int]:
    if text is None:
        return [default]
    try:
        seeds = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"--seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ParameterError(f"--seeds lists no seeds: {text!r}")
    return seeds


def _subset(dataset: SampleSet, drop_ids: set[str]) -> SampleSet:
    kept = tuple(s for s in dataset.samples if s.sample_id not in drop_ids)
    return SampleSet(samples=kept, class_names=dataset.class_names)


def do_eval_sweep(
    cfg: RunConfig, sweep: str, seeds_text: str | None, force: bool = False
) -> Path:
    """One CSV row per (labeled fraction, seed): full pipeline in memory.

    The encoder never sees labels, so it is pretrained once per seed on the
    fraction-independent train partition and shared across fractions; only
    the wrapper, labeling and inductive stages re-run per fraction.
    """
    fractions = _parse_sweep(sweep)
    seeds = _parse_seeds(seeds_text, cfg.master_seed)
    suffix = "-" + kvtext.sha256_text(
        f"fractions={fractions};seeds={seeds}"
    )[:12]
    stage_dir = _stage_dir(cfg, "eval-sweep", suffix)
    if _is_complete(stage_dir):
        print(f"eval-sweep: reusing {stage_dir} (config and sweep match)")
        return stage_dir

    input_paths: list[Path] = []
    rows: list[tuple] = []
    for seed in seeds:
        scfg = cfg.with_overrides(seed=seed)
        if cfg.dataset.source == "procedural":
            dataset = generate_procedural(scfg.dataset.procedural)
        else:
            manifest = _find_artifact(scfg, "gen-data", "manifest.json", "dataset", force)
            images = manifest.parent / "images"
            dataset = load_image_dir(images, labels_csv=images / "labels.csv")
            input_paths.append(manifest)
        base = split(dataset, scfg.split)
        test_ids = set(base.test.sample_ids())
        train_part = _subset(dataset, test_ids)
        model = init(scfg.encoder, seed=seed)
        model, _ = pretrain(
            train_part.image_arrays(), scfg.augment, model, scfg.pretrain
        )
        for fraction in fractions:
            fcfg = scfg.with_overrides(labeled_fraction=fraction)
            res = split(dataset, fcfg.split)
            fitted = pipeline.fit_wrapper(model, res.labeled_train, fcfg.wrapper)
            if len(res.unlabeled_train):
                synthetic = pipeline.synthesize_labels(model, fitted, res.unlabeled_train)
                quality = metrics.synthetic_label_quality(
                    synthetic.labels_by_id(), res.sealed
                ).accuracy
            else:
                synthetic = SyntheticLabelSet(entries=())
                quality = None  # fraction 1.0: nothing left to label
            semi, _ = pipeline.train_inductive(
                res.labeled_train, synthetic, res.unlabeled_train, fcfg.inductive
            )
            baseline, _ = pipeline.train_inductive(
                res.labeled_train,
                SyntheticLabelSet(entries=()),
                res.unlabeled_train,
                fcfg.inductive,
            )
            truth = list(res.test.label_array())
            arrays = res.test.image_arrays()
            semi_acc = metrics.evaluate(list(semi.predict(arrays)), truth).accuracy
            base_acc = metrics.evaluate(list(baseline.predict(arrays)), truth).accuracy
            rows.append((fraction, seed, fcfg.wrapper.kind, semi_acc, base_acc, quality))
            print(
                f"eval-sweep: fraction {fraction:g} seed {seed}: semi "
                f"{_percent(semi_acc)}  baseline {_percent(base_acc)}"
                + (f"  synthetic {_percent(quality)}" if quality is not None else "")
            )

    _fresh_dir(stage_dir)
    with open(stage_dir / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        f.write(
            "labeled_fraction,seed,wrapper,semi_accuracy,baseline_accuracy,synthetic_accuracy\n"
        )
        for fraction, seed, kind, semi_acc, base_acc, quality in rows:
            q = "" if quality is None else repr(quality)
            f.write(f"{fraction!r},{seed},{kind},{semi_acc!r},{base_acc!r},{q}\n")
    _write_manifest(
        cfg,
        stage_dir,
        "eval-sweep",
        _input_entries(cfg, input_paths),
        extra={"sweep": {"labeled_fractions": fractions, "seeds": seeds}},
    )
    print(f"eval-sweep: {len(rows)} rows -> {stage_dir / 'sweep.csv'}")
    return stage_dir


# ---------------------------------------------------------------------------
# transfer and run-all


def do_transfer(cfg: RunConfig, target: RunConfig, force: bool = False) -> Path:
    """Encoder from this config's pretrain stage, pipeline on the target's
    dataset and stage configs.  With identical configs this reproduces the
    non-transfer stages byte for byte."""
    target = target.with_overrides(out=cfg.out)  # one output tree per run
    stage_dir = (
        Path(cfg.out) / "transfer" / f"{cfg.short_hash()}-{target.short_hash()}"
    )
    if _is_complete(stage_dir):
        print(f"transfer: reusing {stage_dir} (config hashes match)")
        return stage_dir
    enc_path = _find_artifact(cfg, "pretrain", "encoder.tnsr", "encoder checkpoint", force)
    ds_manifest, _, res = _load_run_dataset(target, force)
    model = load_checkpoint(enc_path)
    result = pipeline.transfer(
        model,
        res.labeled_train,
        res.unlabeled_train,
        target.wrapper,
        target.inductive,
    )
    predictions = result.classifier.predict(res.test.image_arrays())
    report = metrics.evaluate(
        list(predictions), list(res.test.label_array()), positive_class=1
    )
    _fresh_dir(stage_dir)
    wrapperlib.save_wrapper(stage_dir / "wrapper.tnsr", result.wrapper.model)
    (stage_dir / "wrapper.meta").write_text(
        kvtext.dumps_flat(
            {
                "kind": result.wrapper.kind,
                "encoder_hash": result.wrapper.encoder_hash,
                "model_hash": result.wrapper.model_hash(),
            }
        ),
        encoding="utf-8",
    )
    result.synthetic.write_csv(stage_dir / "synthetic_labels.csv")
    pipeline.save_classifier(stage_dir / "classifier.tnsr", result.classifier)
    result.trace.write_csv(stage_dir / "loss.csv")
    pipeline.write_provenance_csv(stage_dir / "provenance.csv", result.classifier)
    (stage_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    _write_manifest(
        cfg,
        stage_dir,
        "transfer",
        _input_entries(cfg, [enc_path, ds_manifest]),
        extra={
            "target_config": target.hashed_text(),
            "target_config_hash": target.config_hash(),
        },
    )
    print(
        f"transfer: encoder {cfg.short_hash()} -> dataset {target.short_hash()}, "
        f"test accuracy {_percent(report.accuracy)}"
    )
    return stage_dir


def do_run_all(cfg: RunConfig, force: bool = False) -> Path:
    stage_fns = {
        "gen-data": do_gen_data,
        "pretrain": do_pretrain,
        "embed": do_embed,
        "fit-wrapper": do_fit_wrapper,
        "label": do_label,
        "train-inductive": do_train_inductive,
        "eval": do_eval,
    }
    manifests: dict[str, Path] = {}
    for stage in PIPELINE_STAGES:
        manifests[stage] = stage_fns[stage](cfg, force) / "manifest.json"
    stage_dir = _stage_dir(cfg, "run-all")
    _fresh_dir(stage_dir)
    _write_manifest(
        cfg,
        stage_dir,
        "run-all",
        _input_entries(cfg, [manifests[s] for s in PIPELINE_STAGES]),
    )
    print(f"run-all: complete -> {stage_dir}")
    return stage_dir


def do_grad_check(seed: int = 0) -> bool:
    results = verify.run_all(seed)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return not failed


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthlabel",
        description="Semi-supervised image classification pipeline at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument(
        "--seed", type=int, default=None, help="override [run] master_seed"
    )
    common.add_argument(
        "--labeled-fraction",
        type=float,
        default=None,
        help="override [split] labeled_fraction",
    )
    common.add_argument(
        "--wrapper",
        choices=("svm", "knn", "logreg"),
        default=None,
        help="override [wrapper] kind",
    )
    common.add_argument("--out", default=None, help="override [run] out")
    common.add_argument(
        "--force",
        action="store_true",
        help="use the newest upstream artifact despite a config-hash mismatch",
    )

    helps = {
        "gen-data": "materialize the configured dataset as PNGs plus labels.csv",
        "pretrain": "contrastive pretraining of the encoder on the train partition",
        "embed": "export labeled/unlabeled/test embeddings for inspection",
        "fit-wrapper": "fit the embedding-space wrapper on the labeled samples",
        "label": "predict synthetic labels for the unlabeled partition",
        "train-inductive": "train the inductive CNN on real plus synthetic labels",
        "run-all": "chain gen-data through eval in one call",
    }
    for name in ("gen-data", "pretrain", "embed", "fit-wrapper", "label", "train-inductive", "run-all"):
        sub.add_parser(name, parents=[common], help=helps[name])

    evaluate = sub.add_parser(
        "eval", parents=[common], help="evaluate the classifier and synthetic labels"
    )
    evaluate.add_argument(
        "--sweep",
        default=None,
        metavar="labeled-fraction=F1,F2,...",
        help="labeled-fraction sweep: one CSV row per fraction per seed",
    )
    evaluate.add_argument(
        "--seeds",
        default=None,
        help="comma-separated seeds for --sweep (default: the master seed)",
    )

    transfer = sub.add_parser(
        "transfer",
        parents=[common],
        help="reuse this config's encoder on the target config's dataset",
    )
    transfer.add_argument(
        "--target-config",
        required=True,
        help="config of the dataset and downstream stages (flag overrides apply to both configs)",
    )

    grad = sub.add_parser(
        "grad-check", help="run the numerical verification suite; nonzero exit on failure"
    )
    grad.add_argument("--seed", type=int, default=0, help="seed for the check points")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "grad-check":
        return 0 if do_grad_check(args.seed) else 1

    cfg = RunConfig.load(args.config).with_overrides(
        seed=args.seed,
        labeled_fraction=args.labeled_fraction,
        wrapper=args.wrapper,
        out=args.out,
    )
    with _locked(Path(cfg.out)):
        if args.command == "gen-data":
            do_gen_data(cfg, args.force)
        elif args.command == "pretrain":
            do_pretrain(cfg, args.force)
        elif args.command == "embed":
            do_embed(cfg, args.force)
        elif args.command == "fit-wrapper":
            do_fit_wrapper(cfg, args.force)
        elif args.command == "label":
            do_label(cfg, args.force)
        elif args.command == "train-inductive":
            do_train_inductive(cfg, args.force)
        elif args.command == "eval":
            if args.sweep is not None:
                do_eval_sweep(cfg, args.sweep, args.seeds, args.force)
            else:
                do_eval(cfg, args.force)
        elif args.command == "transfer":
            target = RunConfig.load(args.target_config).with_overrides(
                seed=args.seed,
                labeled_fraction=args.labeled_fraction,
                wrapper=args.wrapper,
            )
            do_transfer(cfg, target, args.force)
        elif args.command == "run-all":
            do_run_all(cfg, args.force)
        else:  # pragma: no cover - argparse rejects unknown commands
            raise ParameterError(f"unknown command {args.command!r}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except SynthLabelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
