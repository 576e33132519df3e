import math

import numpy as np
import pytest

from synthlabel import contrastive
from synthlabel.augment import AugmentationSpec
from synthlabel.contrastive import (
    ContrastiveBatch,
    SgdOptimizer,
    TrainConfig,
    cosine_sim,
    nt_xent_loss,
    nt_xent_value,
    pretrain,
)
from synthlabel.encoder import EncoderConfig, init
from synthlabel.errors import DegenerateInputError, ParameterError, ShapeError
from synthlabel.tensor import Tensor, grad_check
from synthlabel import tensor as T

from oracles import nt_xent_brute_force


def rand_z(n_pairs, dim=6, seed=0):
    return np.random.default_rng(seed).normal(size=(2 * n_pairs, dim))


class TestCosineSim:
    def test_parallel_vectors(self):
        assert cosine_sim([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_sim([0.0, 0.0], [1.0, 0.0])


class TestNtXentValue:
    @pytest.mark.parametrize("n_pairs,tau,seed", [(2, 0.5, 0), (4, 0.5, 1), (8, 0.1, 2), (16, 1.0, 3), (3, 2.0, 4)])
    def test_matches_brute_force(self, n_pairs, tau, seed):
        z = rand_z(n_pairs, seed=seed)
        got = nt_xent_value(z, tau)
        want = nt_xent_brute_force(z, tau)
        assert abs(got - want) < 1e-10

    def test_identical_projections_give_log3(self):
        # N=2: every denominator holds 3 equal terms, so each pair term is ln 3
        z = np.tile(np.array([0.3, -0.7, 0.2]), (4, 1))
        for tau in (0.1, 0.5, 1.0):
            assert abs(nt_xent_value(z, tau) - math.log(3.0)) < 1e-12

    def test_perfect_alignment_beats_random(self):
        rng = np.random.default_rng(5)
        pairs = rng.normal(size=(8, 6))
        aligned = np.repeat(pairs, 2, axis=0)
        random = rng.normal(size=(16, 6))
        assert nt_xent_value(aligned, 0.5) < nt_xent_value(random, 0.5)

    def test_batch_shape_validated(self):
        with pytest.raises(ShapeError):
            ContrastiveBatch(z=Tensor(rand_z(3)), n_pairs=2)
        with pytest.raises(ShapeError):
            nt_xent_loss(ContrastiveBatch(z=Tensor(rand_z(1)), n_pairs=1), 0.5)

    def test_temperature_validated(self):
        with pytest.raises(ParameterError):
            nt_xent_loss(ContrastiveBatch(z=Tensor(rand_z(2)), n_pairs=2), 0.0)

    def test_zero_row_rejected(self):
        z = rand_z(2)
        z[1] = 0.0
        with pytest.raises(DegenerateInputError):
            nt_xent_value(z, 0.5)


class TestNtXentGradient:
    def test_finite_difference(self):
        def fn(t):
            z = T.reshape(t, (6, 4))
            return nt_xent_loss(ContrastiveBatch(z=z, n_pairs=3), 0.5)

        err = grad_check(fn, rand_z(3, dim=4, seed=6).ravel())
        assert err < 1e-6

    def test_low_temperature(self):
        def fn(t):
            z = T.reshape(t, (4, 3))
            return nt_xent_loss(ContrastiveBatch(z=z, n_pairs=2), 0.1)

        err = grad_check(fn, rand_z(2, dim=3, seed=7).ravel())
        assert err < 1e-5

    def test_gradient_vanishes_nowhere_spurious(self):
        z = Tensor(rand_z(4, seed=8), requires_grad=True)
        loss = nt_xent_loss(ContrastiveBatch(z=z, n_pairs=4), 0.5)
        loss.backward()
        assert np.abs(z.grad).max() > 0.0
        assert np.isfinite(z.grad).all()


class TestSgdOptimizer:
    def test_plain_step(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        p.grad = np.array([0.5, -0.5])
        SgdOptimizer([p], learning_rate=0.1, momentum=0.0).step()
        np.testing.assert_allclose(p.data, [0.95, 2.05])

    def test_momentum_accumulates(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = SgdOptimizer([p], learning_rate=1.0, momentum=0.5)
        p.grad = np.array([1.0])
        opt.step()  # v=1, p=-1
        p.grad = np.array([1.0])
        opt.step()  # v=1.5, p=-2.5
        np.testing.assert_allclose(p.data, [-2.5])


class TestTrainConfig:
    def test_defaults_valid(self):
        TrainConfig()

    @pytest.mark.parametrize(
        "kw",
        [
            {"temperature": 0.0},
            {"batch_pairs": 1},
            {"learning_rate": -0.1},
            {"momentum": 1.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ParameterError):
            TrainConfig(**kw)


def tiny_setup(n_images=8, seed=0):
    config = EncoderConfig(
        input_size=(3, 16, 16),
        conv_layers=((4, 3, 1, 2),),
        embed_dim=16,
        proj_hidden_dim=16,
        proj_out_dim=8,
    )
    model = init(config, seed=seed)
    rng = np.random.default_rng(seed + 100)
    images = [rng.uniform(size=(3, 16, 16)) for _ in range(n_images)]
    spec = AugmentationSpec(crop_scale_range=(0.8, 1.0), output_size=(16, 16))
    return config, model, images, spec


class TestPretrain:
    def test_loss_trace_shape(self):
        _, model, images, spec = tiny_setup()
        cfg = TrainConfig(batch_pairs=4, epochs=3, learning_rate=0.05, seed=1)
        _, trace = pretrain(images, spec, model, cfg)
        assert trace.epochs == [1, 2, 3]
        assert len(trace.mean_losses) == 3
        assert all(np.isfinite(v) for v in trace.mean_losses)

    def test_deterministic(self):
        cfg = TrainConfig(batch_pairs=4, epochs=2, seed=3)
        outs = []
        for _ in range(2):
            _, model, images, spec = tiny_setup(seed=2)
            trained, trace = pretrain(images, spec, model, cfg)
            outs.append((
                [p.data.copy() for p in trained.parameters()],
                list(trace.mean_losses),
            ))
        assert outs[0][1] == outs[1][1]
        for a, b in zip(outs[0][0], outs[1][0]):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases(self):
        _, model, images, spec = tiny_setup(n_images=16, seed=4)
        cfg = TrainConfig(batch_pairs=8, epochs=12, learning_rate=0.1, seed=5)
        _, trace = pretrain(images, spec, model, cfg)
        assert trace.mean_losses[-1] < trace.mean_losses[0]

    def test_checkpoint_cadence(self):
        _, model, images, spec = tiny_setup()
        seen = []
        cfg = TrainConfig(batch_pairs=4, epochs=4, checkpoint_every=2, seed=6)
        pretrain(images, spec, model, cfg, checkpoint_fn=lambda e, m: seen.append(e))
        assert seen == [2, 4]

    def test_dataset_smaller_than_batch(self):
        _, model, images, spec = tiny_setup(n_images=3)
        with pytest.raises(ParameterError):
            pretrain(images, spec, model, TrainConfig(batch_pairs=4, epochs=1))

    def test_trace_csv(self, tmp_path):
        trace = contrastive.LossTrace()
        trace.append(1, 1.25)
        trace.append(2, 0.5)
        path = tmp_path / "loss.csv"
        trace.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,mean_loss"
        assert lines[1] == "1,1.25"
        assert lines[2] == "2,0.5"
