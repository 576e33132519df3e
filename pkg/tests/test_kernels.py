import numpy as np
import pytest

from synthlabel.kernels import BACKEND, pyops
from synthlabel import kernels
from synthlabel.tensor import Tensor, grad_check
from synthlabel import tensor as T

from oracles import conv2d_naive, maxpool2d_naive

BACKENDS = [pyops]
if BACKEND == "compiled":
    from synthlabel.kernels import _convops

    BACKENDS.append(_convops)


def _rand(shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


@pytest.mark.parametrize("ops", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestConvForward:
    def test_matches_naive(self, ops):
        x = _rand((2, 3, 8, 8), 1)
        k = _rand((4, 3, 3, 3), 2)
        np.testing.assert_allclose(
            ops.conv2d_forward(x, k, 1), conv2d_naive(x, k, 1), atol=1e-12
        )

    def test_stride_two(self, ops):
        x = _rand((1, 2, 9, 7), 3)
        k = _rand((3, 2, 3, 3), 4)
        np.testing.assert_allclose(
            ops.conv2d_forward(x, k, 2), conv2d_naive(x, k, 2), atol=1e-12
        )

    def test_one_by_one_kernel(self, ops):
        x = _rand((2, 2, 4, 4), 5)
        k = _rand((1, 2, 1, 1), 6)
        np.testing.assert_allclose(
            ops.conv2d_forward(x, k, 1), conv2d_naive(x, k, 1), atol=1e-12
        )


@pytest.mark.parametrize("ops", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestConvBackward:
    def test_backward_kernels_finite_difference(self, ops):
        x = _rand((2, 2, 6, 6), 7)
        k0 = _rand((3, 2, 3, 3), 8)
        g = _rand((2, 3, 4, 4), 9)

        got = ops.conv2d_backward_kernels(x, g, 1, 3, 3)
        eps = 1e-6
        num = np.zeros_like(k0)
        # probing every kernel entry keeps this independent of any vjp code
        for idx in np.ndindex(*k0.shape):
            kp, km = k0.copy(), k0.copy()
            kp[idx] += eps
            km[idx] -= eps
            num[idx] = (
                (conv2d_naive(x, kp, 1) * g).sum() - (conv2d_naive(x, km, 1) * g).sum()
            ) / (2 * eps)
        np.testing.assert_allclose(got, num, atol=1e-4)

    def test_backward_input_adjoint_identity(self, ops):
        # <conv(x,k), g> == <x, conv_backward_input(g,k)> for any g
        x = _rand((1, 2, 5, 5), 10)
        k = _rand((2, 2, 3, 3), 11)
        g = _rand((1, 2, 3, 3), 12)
        lhs = (ops.conv2d_forward(x, k, 1) * g).sum()
        rhs = (x * ops.conv2d_backward_input(g, k, 1, 5, 5)).sum()
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_backward_input_stride_two(self, ops):
        x = _rand((2, 1, 7, 7), 13)
        k = _rand((2, 1, 3, 3), 14)
        out_shape = ops.conv2d_forward(x, k, 2).shape
        g = _rand(out_shape, 15)
        lhs = (ops.conv2d_forward(x, k, 2) * g).sum()
        rhs = (x * ops.conv2d_backward_input(g, k, 2, 7, 7)).sum()
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("ops", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestMaxPool:
    def test_matches_naive(self, ops):
        x = _rand((2, 3, 8, 8), 16)
        out, _ = ops.maxpool2d_forward(x, 2)
        np.testing.assert_array_equal(out, maxpool2d_naive(x, 2))

    def test_crops_ragged_edge(self, ops):
        x = _rand((1, 1, 7, 9), 17)
        out, _ = ops.maxpool2d_forward(x, 2)
        assert out.shape == (1, 1, 3, 4)
        np.testing.assert_array_equal(out, maxpool2d_naive(x[:, :, :6, :8], 2))

    def test_tie_routes_to_first(self, ops):
        x = np.zeros((1, 1, 2, 2))
        out, idx = ops.maxpool2d_forward(x, 2)
        g = np.ones_like(out)
        dx = ops.maxpool2d_backward(g, idx, 2, 2, 2)
        want = np.zeros_like(x)
        want[0, 0, 0, 0] = 1.0
        np.testing.assert_array_equal(dx, want)

    def test_backward_scatters_to_argmax(self, ops):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        out, idx = ops.maxpool2d_forward(x, 2)
        g = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        dx = ops.maxpool2d_backward(g, idx, 2, 4, 4)
        want = np.zeros_like(x)
        want[0, 0, 1, 1] = 1.0
        want[0, 0, 1, 3] = 2.0
        want[0, 0, 3, 1] = 3.0
        want[0, 0, 3, 3] = 4.0
        np.testing.assert_array_equal(dx, want)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
class TestBackendParity:
    def test_conv_identical(self):
        x = _rand((3, 4, 10, 10), 20)
        k = _rand((5, 4, 3, 3), 21)
        a = pyops.conv2d_forward(x, k, 1)
        b = BACKENDS[1].conv2d_forward(x, k, 1)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_pool_identical(self):
        x = _rand((3, 4, 10, 10), 22)
        oa, ia = pyops.maxpool2d_forward(x, 2)
        ob, ib = BACKENDS[1].maxpool2d_forward(x, 2)
        np.testing.assert_array_equal(oa, ob)
        np.testing.assert_array_equal(ia, ib)


class TestConvOp:
    def test_conv_gradients(self):
        rng = np.random.default_rng(23)
        x0 = rng.normal(size=(2, 2, 5, 5))

        def fn(t):
            k = T.reshape(t, (2, 2, 3, 3))
            y = T.conv2d(Tensor(x0), k, stride=1)
            return T.sum_all(T.mul(y, y))

        err = grad_check(fn, rng.normal(size=36))
        assert err < 1e-5

    def test_conv_input_gradients(self):
        rng = np.random.default_rng(24)
        k0 = rng.normal(size=(2, 1, 3, 3))

        def fn(t):
            x = T.reshape(t, (1, 1, 5, 5))
            y = T.conv2d(x, Tensor(k0), stride=1)
            return T.sum_all(T.mul(y, y))

        err = grad_check(fn, rng.normal(size=25))
        assert err < 1e-5

    def test_pool_gradients(self):
        rng = np.random.default_rng(25)

        def fn(t):
            x = T.reshape(t, (1, 1, 4, 4))
            y = T.max_pool2d(x, 2)
            return T.sum_all(T.mul(y, y))

        err = grad_check(fn, rng.normal(size=16))
        assert err < 1e-6

    def test_selected_backend_reported(self):
        assert kernels.BACKEND in ("compiled", "python")
