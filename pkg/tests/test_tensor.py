import numpy as np
import pytest

from divsynth import tensor as T
from divsynth.tensor import Tensor

from oracles import finite_difference_gradient, max_relative_error, reference_conv2d


def fd_check(build_loss, x0, tol=1e-4, step=1e-5):
    """Compare autodiff gradient of build_loss(Tensor) against central differences."""
    x = Tensor(x0.copy(), requires_grad=True)
    loss = build_loss(x)
    loss.backward()
    fd = finite_difference_gradient(lambda a: build_loss(Tensor(a)).item(), x0.copy(), step)
    err = max_relative_error(x.grad, fd)
    assert err < tol, f"gradient mismatch: max relative error {err}"


class TestConv2d:
    def test_zero_input_gives_bias(self):
        x = Tensor(np.zeros((1, 1, 3, 3)))
        k = Tensor(np.random.default_rng(0).standard_normal((2, 1, 2, 2)))
        b = Tensor([1.5, -0.5])
        y = T.conv2d(x, k, b)
        assert np.allclose(y.data[0, 0], 1.5) and np.allclose(y.data[0, 1], -0.5)

    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((1, 1, 3, 3)))
        k = Tensor(np.ones((1, 1, 1, 1)))
        y = T.conv2d(x, k, Tensor([0.0]))
        assert np.array_equal(y.data, x.data)

    def test_against_reference(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        y = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=1, padding=0)
        ref = reference_conv2d(x, w, b)
        assert np.max(np.abs(y.data - ref)) < 1e-12

    def test_randomized_shapes_property(self):
        # >= 100 randomized cases against the brute-force oracle
        rng = np.random.default_rng(3)
        for _ in range(110):
            bsz = int(rng.integers(1, 3))
            c = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            kh = int(rng.integers(1, 4))
            kw = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 2))
            h = int(rng.integers(kh, kh + 5))
            w = int(rng.integers(kw, kw + 5))
            x = rng.standard_normal((bsz, c, h, w))
            wk = rng.standard_normal((k, c, kh, kw))
            b = rng.standard_normal(k)
            y = T.conv2d(Tensor(x), Tensor(wk), Tensor(b), stride=stride, padding=padding)
            ref = reference_conv2d(x, wk, b, stride=stride, padding=padding)
            assert np.max(np.abs(y.data - ref)) < 1e-12

    def test_shape_errors(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        with pytest.raises(ValueError, match="channels"):
            T.conv2d(x, Tensor(np.zeros((1, 3, 2, 2))))
        with pytest.raises(ValueError, match="larger than"):
            T.conv2d(x, Tensor(np.zeros((1, 2, 6, 6))))
        with pytest.raises(ValueError, match="bias"):
            T.conv2d(x, Tensor(np.zeros((2, 2, 2, 2))), Tensor(np.zeros(3)))

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(4)
        x0 = rng.standard_normal((1, 2, 5, 5))
        k = Tensor(rng.standard_normal((2, 2, 3, 3)))
        b = Tensor(rng.standard_normal(2))
        fd_check(lambda x: T.tsum(T.conv2d(x, k, b, stride=2, padding=1)), x0)

    def test_kernel_and_bias_gradients(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((2, 1, 4, 4)))
        k0 = rng.standard_normal((2, 1, 3, 3))
        b0 = rng.standard_normal(2)

        k = Tensor(k0.copy(), requires_grad=True)
        b = Tensor(b0.copy(), requires_grad=True)
        loss = T.tsum(T.square(T.conv2d(x, k, b)))
        loss.backward()
        fd_k = finite_difference_gradient(
            lambda a: T.tsum(T.square(T.conv2d(x, Tensor(a), Tensor(b0)))).item(), k0.copy()
        )
        fd_b = finite_difference_gradient(
            lambda a: T.tsum(T.square(T.conv2d(x, Tensor(k0), Tensor(a)))).item(), b0.copy()
        )
        assert max_relative_error(k.grad, fd_k) < 1e-4
        assert max_relative_error(b.grad, fd_b) < 1e-4


class TestElementwiseOps:
    def test_relu_values(self):
        assert np.array_equal(T.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_dot_value(self):
        assert T.dot(Tensor([3.0, 4.0]), Tensor([3.0, 4.0])).item() == 25.0

    def test_sum_square_gradient_is_2x(self):
        rng = np.random.default_rng(6)
        x0 = rng.standard_normal(7)
        x = Tensor(x0.copy(), requires_grad=True)
        T.tsum(T.square(x)).backward()
        assert np.allclose(x.grad, 2 * x0)
        fd = finite_difference_gradient(lambda a: float(np.sum(a * a)), x0.copy())
        assert max_relative_error(x.grad, fd) < 1e-4

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            T.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_all_ops_match_finite_differences(self):
        rng = np.random.default_rng(7)
        x0 = rng.standard_normal((3, 4))
        other = Tensor(rng.standard_normal((3, 4)))
        cases = {
            "add": lambda x: T.tsum(T.square(T.add(x, other))),
            "sub": lambda x: T.tsum(T.square(T.sub(x, other))),
            "mul": lambda x: T.tsum(T.mul(x, other)),
            "scale": lambda x: T.tsum(T.scale(x, -2.5)),
            "dot": lambda x: T.dot(x, other),
            "sum": lambda x: T.tsum(T.square(x)),
            "mean": lambda x: T.tmean(T.square(x)),
            "l2norm": lambda x: T.l2norm(x),
            "reshape": lambda x: T.dot(T.reshape(x, (12,)), T.reshape(other, (12,))),
            "slice": lambda x: T.tsum(T.square(T.slice_tensor(x, (slice(1, 3), slice(None, 2))))),
        }
        for name, build in cases.items():
            fd_check(build, x0.copy()), name

    def test_relu_gradient_away_from_kink(self):
        rng = np.random.default_rng(8)
        x0 = rng.standard_normal(20)
        x0[np.abs(x0) < 1e-3] = 0.5  # stay away from the kink
        fd_check(lambda x: T.tsum(T.relu(x)), x0)

    def test_matvec_gradients(self):
        rng = np.random.default_rng(9)
        m0 = rng.standard_normal((4, 6))
        v = Tensor(rng.standard_normal(6))
        fd_check(lambda m: T.tsum(T.square(T.matvec(m, v))), m0)
        m = Tensor(m0)
        v0 = rng.standard_normal(6)
        fd_check(lambda u: T.tsum(T.square(T.matvec(m, u))), v0)

    def test_determinism(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((5, 5))
        b = rng.standard_normal((5, 5))
        first = T.mul(Tensor(a), Tensor(b)).data
        second = T.mul(Tensor(a), Tensor(b)).data
        assert np.array_equal(first, second)
        k = rng.standard_normal((2, 1, 3, 3))
        x = rng.standard_normal((1, 1, 6, 6))
        y1 = T.conv2d(Tensor(x), Tensor(k)).data
        y2 = T.conv2d(Tensor(x), Tensor(k)).data
        assert np.array_equal(y1, y2)


class TestPooling:
    def test_avg_pool_value(self):
        x = Tensor(np.arange(16, dtype=float).reshape(1, 1, 4, 4))
        y = T.avg_pool2d(x, 2)
        assert np.array_equal(y.data[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_max_pool_value(self):
        x = Tensor(np.arange(16, dtype=float).reshape(1, 1, 4, 4))
        y = T.max_pool2d(x, 2)
        assert np.array_equal(y.data[0, 0], [[5.0, 7.0], [13.0, 15.0]])

    def test_pool_gradients(self):
        rng = np.random.default_rng(11)
        x0 = rng.standard_normal((2, 2, 6, 6))
        fd_check(lambda x: T.tsum(T.square(T.avg_pool2d(x, 3, 3))), x0)
        fd_check(lambda x: T.tsum(T.square(T.avg_pool2d(x, 3, 2))), x0)
        # max pool: perturb away from ties so the argmax is stable under fd steps
        x0 = rng.standard_normal((1, 1, 6, 6)) * 10
        fd_check(lambda x: T.tsum(T.square(T.max_pool2d(x, 2, 2))), x0)

    def test_extract_patches_roundtrip(self):
        rng = np.random.default_rng(12)
        x0 = rng.standard_normal((2, 5, 5))
        patches = T.extract_patches(Tensor(x0), 3, 2)
        assert patches.shape == (4, 2, 3, 3)
        assert np.array_equal(patches.data[0], x0[:, :3, :3])
        assert np.array_equal(patches.data[3], x0[:, 2:5, 2:5])
        fd_check(lambda x: T.tsum(T.square(T.extract_patches(x, 3, 2))), x0)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.zeros(4), requires_grad=True)
        T.tsum(x).backward()
        assert np.array_equal(x.grad, np.ones(4))

    def test_dot_gradient_is_other_operand(self):
        w = np.array([2.0, -1.0, 3.0])
        x = Tensor(np.ones(3), requires_grad=True)
        T.dot(Tensor(w), x).backward()
        assert np.array_equal(x.grad, w)

    def test_composite_conv_relu_sum_matches_fd(self):
        rng = np.random.default_rng(13)
        x0 = rng.standard_normal((1, 1, 6, 6))
        k = Tensor(rng.standard_normal((2, 1, 3, 3)))
        b = Tensor(rng.standard_normal(2))
        # keep pre-activations away from the relu kink for a clean fd comparison
        pre = T.conv2d(Tensor(x0), k, b)
        assert np.min(np.abs(pre.data)) > 1e-3
        fd_check(lambda x: T.tsum(T.relu(T.conv2d(x, k, b))), x0)

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.ones(3), requires_grad=True)
        T.tsum(x).backward()
        T.tsum(x).backward()
        assert np.array_equal(x.grad, 2 * np.ones(3))
        x.zero_grad()
        T.tsum(x).backward()
        assert np.array_equal(x.grad, np.ones(3))

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            T.add(x, x).backward()

    def test_shared_subexpression_gradient(self):
        # y = x*x + x used twice: d/dx = 2x + 1
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = T.add(T.mul(x, x), x)
        T.tsum(y).backward()
        assert np.allclose(x.grad, [7.0])

    def test_finite_values_after_passes(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.standard_normal((1, 1, 5, 5)), requires_grad=True)
        k = Tensor(rng.standard_normal((1, 1, 3, 3)))
        loss = T.l2norm(T.relu(T.conv2d(x, k)))
        loss.backward()
        assert np.all(np.isfinite(loss.data)) and np.all(np.isfinite(x.grad))


class TestFFT:
    def test_constant_image_dc_only(self):
        c = 0.73
        spec = T.rfft2(np.full((4, 4), c))
        assert abs(spec[0, 0] - 16 * c) < 1e-12
        rest = spec.copy()
        rest[0, 0] = 0
        assert np.max(np.abs(rest)) < 1e-12

    def test_pure_cosine_two_bins(self):
        h, w = 8, 8
        j = np.arange(w)
        img = np.tile(np.cos(2 * np.pi * 2 * j / w), (h, 1))
        spec = T.rfft2(img)
        mags = np.abs(spec)
        nonzero = np.argwhere(mags > 1e-9)
        assert len(nonzero) == 2
        assert {tuple(p) for p in nonzero} == {(0, 2), (0, w - 2)}
        assert abs(spec[0, 2] - np.conj(spec[0, w - 2])) < 1e-9

    def test_parseval(self):
        rng = np.random.default_rng(15)
        img = rng.standard_normal((8, 8))
        spec = T.rfft2(img)
        lhs = np.sum(img * img)
        rhs = np.sum(np.abs(spec) ** 2) / img.size
        assert abs(lhs - rhs) < 1e-9

    def test_roundtrip_all_sizes(self):
        rng = np.random.default_rng(16)
        for n in range(1, 33):
            img = rng.standard_normal((n, n))
            back = T.irfft2(T.rfft2(img), n, n)
            assert np.max(np.abs(back - img)) < 1e-10
        img = rng.standard_normal((5, 9))
        assert np.max(np.abs(T.irfft2(T.rfft2(img), 5, 9) - img)) < 1e-10

    def test_dc_is_pixel_sum(self):
        rng = np.random.default_rng(17)
        img = rng.standard_normal((6, 7))
        assert abs(T.rfft2(img)[0, 0] - img.sum()) < 1e-10
