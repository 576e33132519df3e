import io
import struct

import numpy as np
import pytest

from synthlabel import kvtext, tnsr
from synthlabel.errors import FormatError


class TestTnsrRecord:
    def test_round_trip_shapes(self):
        rng = np.random.default_rng(0)
        for shape in [(3,), (2, 3), (2, 3, 4), (1, 2, 3, 4)]:
            buf = io.BytesIO()
            arr = rng.normal(size=shape)
            tnsr.write_tensor(buf, arr)
            buf.seek(0)
            out = tnsr.read_tensor(buf)
            np.testing.assert_array_equal(out, arr)
            assert out.shape == shape

    def test_layout_is_as_documented(self):
        buf = io.BytesIO()
        tnsr.write_tensor(buf, np.array([[1.0, 2.0]]))
        raw = buf.getvalue()
        assert raw[:4] == b"TNSR"
        assert struct.unpack("<I", raw[4:8])[0] == 1
        assert raw[8] == 0  # dtype f64
        assert raw[9] == 2  # ndims
        assert struct.unpack("<QQ", raw[10:26]) == (1, 2)
        np.testing.assert_array_equal(
            np.frombuffer(raw[26:], dtype="<f8"), [1.0, 2.0]
        )

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            tnsr.read_tensor(io.BytesIO(b"XXXX" + b"\x00" * 32))

    def test_bad_version(self):
        buf = io.BytesIO()
        tnsr.write_tensor(buf, np.ones(2))
        raw = bytearray(buf.getvalue())
        raw[4] = 9
        with pytest.raises(FormatError, match="version"):
            tnsr.read_tensor(io.BytesIO(bytes(raw)))

    def test_truncated_payload(self):
        buf = io.BytesIO()
        tnsr.write_tensor(buf, np.ones(4))
        raw = buf.getvalue()[:-8]
        with pytest.raises(FormatError, match="truncated"):
            tnsr.read_tensor(io.BytesIO(raw))

    def test_zero_dim_rejected(self):
        buf = io.BytesIO()
        buf.write(b"TNSR" + struct.pack("<I", 1) + struct.pack("<BB", 0, 1))
        buf.write(struct.pack("<Q", 0))
        buf.seek(0)
        with pytest.raises(FormatError, match="positive"):
            tnsr.read_tensor(buf)


class TestTensorFiles:
    def test_save_load(self, tmp_path):
        rng = np.random.default_rng(1)
        arrays = [rng.normal(size=(3, 2)), rng.normal(size=(5,))]
        path = tmp_path / "bundle.tnsr"
        tnsr.save_tensors(path, "kind = test\n", arrays)
        header, out = tnsr.load_tensors(path)
        assert header == "kind = test\n"
        assert len(out) == 2
        for a, b in zip(arrays, out):
            np.testing.assert_array_equal(a, b)

    def test_count_limits_read(self, tmp_path):
        path = tmp_path / "bundle.tnsr"
        tnsr.save_tensors(path, "", [np.ones(1), np.ones(2), np.ones(3)])
        _, out = tnsr.load_tensors(path, count=2)
        assert len(out) == 2

    def test_text_block_unicode(self):
        buf = io.BytesIO()
        tnsr.write_text_block(buf, "naïve = why\n")
        buf.seek(0)
        assert tnsr.read_text_block(buf) == "naïve = why\n"


class TestKvFlat:
    def test_sorted_canonical(self):
        text = kvtext.dumps_flat({"b": "2", "a": "1"})
        assert text == "a = 1\nb = 2\n"

    def test_round_trip(self):
        mapping = {"alpha": "0.5", "name": "run one", "n": "10"}
        assert kvtext.loads_flat(kvtext.dumps_flat(mapping)) == mapping

    def test_duplicate_key_rejected(self):
        with pytest.raises(FormatError, match="duplicate"):
            kvtext.loads_flat("a = 1\na = 2\n")

    def test_comments_and_blanks_skipped(self):
        assert kvtext.loads_flat("# hi\n\na = 1\n") == {"a": "1"}

    def test_missing_equals(self):
        with pytest.raises(FormatError):
            kvtext.loads_flat("just words\n")

    def test_bad_key_rejected(self):
        with pytest.raises(FormatError):
            kvtext.dumps_flat({"a=b": "1"})


class TestKvSections:
    def test_round_trip(self):
        sections = {"run": {"seed": "3"}, "augment": {"rot90_prob": "0.5"}}
        text = kvtext.dumps_sections(sections)
        assert text.startswith("[augment]\n")  # sections sorted
        assert kvtext.loads_sections(text) == sections

    def test_duplicate_section_rejected(self):
        with pytest.raises(FormatError, match="duplicate section"):
            kvtext.loads_sections("[a]\nx = 1\n[a]\ny = 2\n")

    def test_key_outside_section_rejected(self):
        with pytest.raises(FormatError, match="outside"):
            kvtext.loads_sections("x = 1\n[a]\n")

    def test_hash_stable(self):
        a = kvtext.sha256_text(kvtext.dumps_sections({"s": {"k": "v"}}))
        b = kvtext.sha256_text(kvtext.dumps_sections({"s": {"k": "v"}}))
        assert a == b
        assert len(a) == 64
