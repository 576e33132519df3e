import numpy as np
import pytest

from synthlabel.encoder import (
    EncoderConfig,
    embed_images,
    encode,
    encode_batch,
    init,
    load_checkpoint,
    project,
    save_checkpoint,
)
from synthlabel.errors import FormatError, ParameterError, ShapeError
from synthlabel.tensor import Tensor

SMALL = EncoderConfig(
    input_size=(3, 16, 16),
    conv_layers=((4, 3, 1, 2), (8, 3, 1, 2)),
    embed_dim=12,
    proj_hidden_dim=10,
    proj_out_dim=6,
)


class TestEncoderConfig:
    def test_default_feature_flow(self):
        cfg = EncoderConfig()
        # 32 -> conv5 -> 28 -> pool2 -> 14 -> conv3 -> 12 -> pool2 -> 6
        # -> conv3 -> 4 -> pool2 -> 2
        assert cfg.feature_shape() == (32, 2, 2)
        # global pooling reduces the map to its 32 channel means
        assert cfg.flat_dim() == 32
        assert EncoderConfig(global_pool=False).flat_dim() == 128

    def test_kernel_exceeding_input_rejected(self):
        with pytest.raises(ParameterError):
            EncoderConfig(input_size=(3, 4, 4), conv_layers=((8, 5, 1, 1),))

    def test_collapse_rejected(self):
        with pytest.raises(ParameterError):
            EncoderConfig(input_size=(3, 8, 8), conv_layers=((8, 3, 1, 8),))

    def test_bad_channels_rejected(self):
        with pytest.raises(ParameterError):
            EncoderConfig(input_size=(2, 32, 32))

    def test_kv_round_trip(self):
        kv = SMALL.to_kv()
        assert kv["conv_layers"] == "4k3s1p2,8k3s1p2"
        assert EncoderConfig.from_kv(kv) == SMALL

    def test_from_kv_missing_key(self):
        kv = SMALL.to_kv()
        del kv["embed_dim"]
        with pytest.raises(FormatError):
            EncoderConfig.from_kv(kv)

    def test_from_kv_bad_layer(self):
        kv = SMALL.to_kv()
        kv["conv_layers"] = "4x3"
        with pytest.raises(FormatError):
            EncoderConfig.from_kv(kv)


class TestInit:
    def test_deterministic(self):
        a = init(SMALL, seed=3)
        b = init(SMALL, seed=3)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_seed_changes_weights(self):
        a = init(SMALL, seed=3)
        b = init(SMALL, seed=4)
        assert not np.array_equal(a.theta[0].data, b.theta[0].data)

    def test_xavier_bounds_and_norm_init(self):
        model = init(SMALL, seed=0)
        k0 = model.theta[0].data  # (4,3,3,3): fan_in 27, fan_out 36
        limit = np.sqrt(6.0 / (27 + 36))
        assert np.abs(k0).max() <= limit
        assert k0.std() > 0.0
        np.testing.assert_array_equal(model.theta[1].data, np.ones(4))   # gamma
        np.testing.assert_array_equal(model.theta[2].data, np.zeros(4))  # beta
        np.testing.assert_array_equal(model.w_proj[1].data, np.zeros(10))

    def test_parameter_count(self):
        model = init(SMALL, seed=0)
        # 2 conv layers (kernel+gamma+beta) + dense (w+b) + projection (w1,b1,w2,b2)
        assert len(model.parameters()) == 3 * 2 + 2 + 4
        assert all(p.requires_grad for p in model.parameters())
        # running stats ride along but are not trainable
        assert len(model.bn_stats) == 2 * 2
        np.testing.assert_array_equal(model.bn_stats[0], np.zeros(4))
        np.testing.assert_array_equal(model.bn_stats[1], np.ones(4))


class TestForward:
    def test_encode_batch_shape(self):
        model = init(SMALL, seed=1)
        x = Tensor(np.random.default_rng(0).uniform(size=(5, 3, 16, 16)))
        h = encode_batch(model, x)
        assert h.shape == (5, 12)

    def test_encode_single_matches_batch_row(self):
        model = init(SMALL, seed=1)
        imgs = np.random.default_rng(1).uniform(size=(3, 3, 16, 16))
        batch = encode_batch(model, Tensor(imgs)).data
        for i in range(3):
            row = encode(model, Tensor(imgs[i])).data
            # batch size changes BLAS blocking, so only ulp-level agreement
            np.testing.assert_allclose(row, batch[i], rtol=1e-12, atol=1e-14)

    def test_wrong_input_size_rejected(self):
        model = init(SMALL, seed=1)
        with pytest.raises(ShapeError):
            encode_batch(model, Tensor(np.zeros((2, 3, 32, 32))))

    def test_project_shapes(self):
        model = init(SMALL, seed=1)
        h = Tensor(np.random.default_rng(2).normal(size=(4, 12)))
        z = project(model, h)
        assert z.shape == (4, 6)
        z1 = project(model, Tensor(h.data[0]))
        assert z1.shape == (6,)
        np.testing.assert_allclose(z1.data, z.data[0], rtol=1e-12, atol=1e-14)

    def test_training_forward_updates_stats_eval_does_not(self):
        model = init(SMALL, seed=1)
        x = Tensor(np.random.default_rng(5).uniform(size=(6, 3, 16, 16)))
        before = [s.copy() for s in model.bn_stats]
        encode_batch(model, x)  # eval is the default
        for s, b in zip(model.bn_stats, before):
            np.testing.assert_array_equal(s, b)
        encode_batch(model, x, training=True)
        assert any(not np.array_equal(s, b) for s, b in zip(model.bn_stats, before))

    def test_eval_embedding_independent_of_batch_mates(self):
        # the frozen-stats path must not let one sample leak into another
        model = init(SMALL, seed=1)
        rng = np.random.default_rng(6)
        imgs = rng.uniform(size=(4, 3, 16, 16))
        alone = encode_batch(model, Tensor(imgs[:1])).data
        together = encode_batch(model, Tensor(imgs)).data
        np.testing.assert_allclose(alone[0], together[0], rtol=1e-12, atol=1e-14)

    def test_embed_images_batching_invariant(self):
        model = init(SMALL, seed=1)
        arrays = list(np.random.default_rng(3).uniform(size=(7, 3, 16, 16)))
        a = embed_images(model, arrays, batch=3)
        b = embed_images(model, arrays, batch=64)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
        assert a.shape == (7, 12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = init(SMALL, seed=9)
        path = tmp_path / "enc.ckpt"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        assert loaded.config == SMALL
        for p, q in zip(model.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(p.data, q.data)
        assert loaded.content_hash() == model.content_hash()

    def test_forward_identical_after_reload(self, tmp_path):
        model = init(SMALL, seed=9)
        path = tmp_path / "enc.ckpt"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        x = Tensor(np.random.default_rng(4).uniform(size=(2, 3, 16, 16)))
        np.testing.assert_array_equal(
            encode_batch(model, x).data, encode_batch(loaded, x).data
        )

    def test_content_hash_tracks_params(self):
        model = init(SMALL, seed=9)
        before = model.content_hash()
        model.theta[0].data[0, 0, 0, 0] += 1e-9
        assert model.content_hash() != before

    def test_checkpoint_keeps_running_stats(self, tmp_path):
        model = init(SMALL, seed=9)
        x = Tensor(np.random.default_rng(7).uniform(size=(5, 3, 16, 16)))
        encode_batch(model, x, training=True)  # move stats off their init values
        path = tmp_path / "enc.ckpt"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        for s, q in zip(model.bn_stats, loaded.bn_stats):
            np.testing.assert_array_equal(s, q)
        np.testing.assert_array_equal(
            encode_batch(model, x).data, encode_batch(loaded, x).data
        )

    def test_truncated_checkpoint_rejected(self, tmp_path):
        model = init(SMALL, seed=9)
        path = tmp_path / "enc.ckpt"
        save_checkpoint(path, model)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 40])
        with pytest.raises(FormatError):
            load_checkpoint(path)
