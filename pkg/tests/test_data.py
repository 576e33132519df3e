import numpy as np
import pytest

from synthlabel.data import (
    CLASS_NAMES,
    ProceduralSpec,
    Sample,
    SampleSet,
    SealedLabels,
    SplitSpec,
    generate_procedural,
    load_image_dir,
    save_image_dir,
    split,
)
from synthlabel.errors import (
    DegenerateInputError,
    FormatError,
    ParameterError,
    ShapeError,
)
from synthlabel.tensor import Tensor


def _sample(sid, label=0, shape=(3, 8, 8), fill=0.5):
    return Sample(sample_id=sid, image=Tensor(np.full(shape, fill)), label=label)


def _tiny_set(n_per_class=6):
    samples = []
    for c in (0, 1):
        for i in range(n_per_class):
            samples.append(_sample(f"s-{c}-{i}", label=c))
    return SampleSet(samples=tuple(samples), class_names=("a", "b"))


class TestSampleSet:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ParameterError, match="duplicate"):
            SampleSet(samples=(_sample("x"), _sample("x")), class_names=("a",))

    def test_mixed_shapes_rejected(self):
        with pytest.raises(ShapeError):
            SampleSet(
                samples=(_sample("x"), _sample("y", shape=(3, 4, 4))),
                class_names=("a",),
            )

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ShapeError):
            SampleSet(samples=(_sample("x", shape=(2, 8, 8)),), class_names=("a",))

    def test_pixels_outside_unit_interval_rejected(self):
        with pytest.raises(ParameterError):
            SampleSet(samples=(_sample("x", fill=1.5),), class_names=("a",))

    def test_label_outside_class_range_rejected(self):
        with pytest.raises(ParameterError):
            SampleSet(samples=(_sample("x", label=1),), class_names=("a",))

    def test_label_array_requires_full_labels(self):
        ss = SampleSet(
            samples=(_sample("x", label=None),), class_names=("a",)
        )
        assert not ss.fully_labeled()
        with pytest.raises(ParameterError):
            ss.label_array()

    def test_helpers(self):
        ss = _tiny_set(2)
        assert len(ss) == 4
        assert ss.sample_ids() == ["s-0-0", "s-0-1", "s-1-0", "s-1-1"]
        assert ss.label_array().tolist() == [0, 0, 1, 1]
        assert ss.fully_labeled()


class TestSealedLabels:
    def test_unseal_returns_copy(self):
        sealed = SealedLabels({"x": 1})
        out = sealed.unseal_for_evaluation()
        out["x"] = 0
        assert sealed.unseal_for_evaluation() == {"x": 1}

    def test_no_casual_attribute_access(self):
        sealed = SealedLabels({"x": 1})
        assert len(sealed) == 1
        with pytest.raises(AttributeError):
            sealed.__mapping  # noqa: B018 - the leak this guards against


class TestProceduralSpec:
    def test_dot_radius_must_fit_grid(self):
        with pytest.raises(ParameterError, match="radius"):
            ProceduralSpec(grid_spacing=(2, 8), dot_radius=2.5)

    def test_inverted_range_rejected(self):
        with pytest.raises(ParameterError):
            ProceduralSpec(dot_depth=(0.5, 0.2))

    def test_tiny_image_rejected(self):
        with pytest.raises(ParameterError):
            ProceduralSpec(image_size=4)


class TestGenerateProcedural:
    def test_balanced_and_labeled(self):
        ss = generate_procedural(ProceduralSpec(n_per_class=5, image_size=16))
        assert len(ss) == 10
        assert ss.class_names == CLASS_NAMES
        labels = ss.label_array()
        assert (labels == 0).sum() == 5 and (labels == 1).sum() == 5
        assert ss.samples[0].sample_id == "proc-plantation-0000"
        assert ss.samples[5].sample_id == "proc-forest-0000"

    def test_deterministic(self):
        spec = ProceduralSpec(n_per_class=3, image_size=16, seed=9)
        a = generate_procedural(spec)
        b = generate_procedural(spec)
        for sa, sb in zip(a.samples, b.samples):
            np.testing.assert_array_equal(sa.image.data, sb.image.data)

    def test_seed_changes_pixels(self):
        a = generate_procedural(ProceduralSpec(n_per_class=1, image_size=16, seed=0))
        b = generate_procedural(ProceduralSpec(n_per_class=1, image_size=16, seed=1))
        assert not np.array_equal(a.samples[0].image.data, b.samples[0].image.data)

    def test_values_on_8bit_grid(self):
        ss = generate_procedural(ProceduralSpec(n_per_class=2, image_size=16))
        for s in ss.samples:
            scaled = s.image.data * 255.0
            np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)


class TestPngRoundTrip:
    def test_images_and_labels_survive(self, tmp_path):
        ss = generate_procedural(ProceduralSpec(n_per_class=3, image_size=16))
        save_image_dir(tmp_path, ss)
        loaded = load_image_dir(tmp_path, labels_csv=tmp_path / "labels.csv")
        assert len(loaded) == len(ss)
        assert loaded.class_names == ("forest", "plantation")  # sorted CSV values
        by_id = {s.sample_id: s for s in loaded.samples}
        for s in ss.samples:
            twin = by_id[f"{s.sample_id}.png"]
            np.testing.assert_array_equal(twin.image.data, s.image.data)
            assert loaded.class_names[twin.label] == ss.class_names[s.label]

    def test_unlabeled_rows_round_trip(self, tmp_path):
        samples = (_sample("u", label=None), _sample("v", label=0))
        ss = SampleSet(samples=samples, class_names=("a",))
        save_image_dir(tmp_path, ss)
        loaded = load_image_dir(tmp_path, labels_csv=tmp_path / "labels.csv")
        by_id = {s.sample_id: s.label for s in loaded.samples}
        assert by_id["u.png"] is None
        assert by_id["v.png"] == 0

    def test_grayscale_loads_single_channel(self, tmp_path):
        ss = SampleSet(
            samples=(_sample("g", label=None, shape=(1, 8, 8)),), class_names=()
        )
        save_image_dir(tmp_path, ss)
        loaded = load_image_dir(tmp_path)
        assert loaded.samples[0].image.shape == (1, 8, 8)


class TestLoadImageDir:
    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(FormatError, match="no PNG"):
            load_image_dir(tmp_path)

    def test_bad_csv_header_rejected(self, tmp_path):
        save_image_dir(tmp_path, _tiny_set(1))
        bad = tmp_path / "bad.csv"
        bad.write_text("file,cls\nx.png,a\n")
        with pytest.raises(FormatError, match="header"):
            load_image_dir(tmp_path, labels_csv=bad)

    def test_duplicate_filename_rejected(self, tmp_path):
        save_image_dir(tmp_path, _tiny_set(1))
        bad = tmp_path / "bad.csv"
        bad.write_text("filename,label\ns-0-0.png,a\ns-0-0.png,b\n")
        with pytest.raises(FormatError, match="duplicate"):
            load_image_dir(tmp_path, labels_csv=bad)

    def test_unknown_label_with_explicit_classes_rejected(self, tmp_path):
        save_image_dir(tmp_path, _tiny_set(1))
        with pytest.raises(FormatError, match="unknown"):
            load_image_dir(
                tmp_path, labels_csv=tmp_path / "labels.csv", class_names=("a",)
            )

    def test_mixed_sizes_name_offenders(self, tmp_path):
        save_image_dir(tmp_path, _tiny_set(1))
        odd = SampleSet(
            samples=(_sample("zz", label=None, shape=(3, 4, 4)),), class_names=()
        )
        save_image_dir(tmp_path, odd)  # overwrites labels.csv; images remain
        with pytest.raises(ShapeError, match="zz"):
            load_image_dir(tmp_path)


class TestSplit:
    def test_partition_sizes_at_defaults(self):
        ss = generate_procedural(ProceduralSpec(n_per_class=60, image_size=16))
        res = split(ss, SplitSpec(labeled_fraction=0.1, test_fraction=1 / 6, seed=0))
        assert len(res.test) == 20
        assert len(res.labeled_train) == 10
        assert len(res.unlabeled_train) == 90
        assert len(res.sealed) == 90

    def test_partitions_disjoint_and_complete(self):
        ss = _tiny_set(6)
        res = split(ss, SplitSpec(labeled_fraction=0.25, test_fraction=1 / 3, seed=1))
        ids = (
            res.labeled_train.sample_ids()
            + res.unlabeled_train.sample_ids()
            + res.test.sample_ids()
        )
        assert sorted(ids) == sorted(ss.sample_ids())
        assert len(set(ids)) == len(ids)

    def test_balanced_split_balances_each_partition(self):
        ss = generate_procedural(ProceduralSpec(n_per_class=30, image_size=16))
        res = split(ss, SplitSpec(labeled_fraction=0.2, test_fraction=1 / 3, seed=2))
        for part in (res.labeled_train, res.test):
            labels = part.label_array()
            assert (labels == 0).sum() == (labels == 1).sum()

    def test_unlabeled_partition_has_no_labels(self):
        res = split(_tiny_set(6), SplitSpec(labeled_fraction=0.25, test_fraction=1 / 3))
        assert all(s.label is None for s in res.unlabeled_train.samples)

    def test_sealed_matches_original_labels(self):
        ss = _tiny_set(6)
        original = {s.sample_id: s.label for s in ss.samples}
        res = split(ss, SplitSpec(labeled_fraction=0.25, test_fraction=1 / 3))
        truth = res.sealed.unseal_for_evaluation()
        assert set(truth) == set(res.unlabeled_train.sample_ids())
        assert all(truth[k] == original[k] for k in truth)

    def test_deterministic_and_seed_sensitive(self):
        ss = generate_procedural(ProceduralSpec(n_per_class=30, image_size=16))
        spec = SplitSpec(labeled_fraction=0.2, test_fraction=1 / 3, seed=5)
        a, b = split(ss, spec), split(ss, spec)
        assert a.test.sample_ids() == b.test.sample_ids()
        assert a.labeled_train.sample_ids() == b.labeled_train.sample_ids()
        c = split(ss, SplitSpec(labeled_fraction=0.2, test_fraction=1 / 3, seed=6))
        assert c.test.sample_ids() != a.test.sample_ids()

    def test_input_order_preserved(self):
        ss = _tiny_set(6)
        res = split(ss, SplitSpec(labeled_fraction=0.25, test_fraction=1 / 3))
        order = {sid: i for i, sid in enumerate(ss.sample_ids())}
        for part in (res.labeled_train, res.unlabeled_train, res.test):
            positions = [order[sid] for sid in part.sample_ids()]
            assert positions == sorted(positions)

    def test_full_label_fraction_empties_unlabeled(self):
        res = split(_tiny_set(6), SplitSpec(labeled_fraction=1.0, test_fraction=1 / 3))
        assert len(res.unlabeled_train) == 0
        assert len(res.sealed) == 0
        assert res.labeled_train.fully_labeled()

    def test_requires_fully_labeled_input(self):
        ss = SampleSet(
            samples=(_sample("x", label=None), _sample("y", label=0)),
            class_names=("a",),
        )
        with pytest.raises(ParameterError):
            split(ss, SplitSpec())

    def test_empty_set_rejected(self):
        with pytest.raises(DegenerateInputError):
            split(SampleSet(samples=(), class_names=("a", "b")), SplitSpec())

    def test_too_small_for_labeled_partition(self):
        with pytest.raises(ParameterError, match="labeled"):
            split(_tiny_set(3), SplitSpec(labeled_fraction=0.01, test_fraction=1 / 3))

    def test_no_room_for_unlabeled_partition(self):
        with pytest.raises(ParameterError, match="unlabeled"):
            split(_tiny_set(3), SplitSpec(labeled_fraction=0.9, test_fraction=1 / 3))

    def test_split_spec_validation(self):
        with pytest.raises(ParameterError):
            SplitSpec(labeled_fraction=0.0)
        with pytest.raises(ParameterError):
            SplitSpec(test_fraction=1.0)
