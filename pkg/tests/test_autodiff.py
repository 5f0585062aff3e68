import numpy as np
import pytest

from flow2d import Tensor4
from flow2d.autodiff import Param, Tape, grad_check


def finite_diff(loss_fn, arr, eps=1e-5):
    """Central differences of loss_fn() w.r.t. every element of arr (mutated in place)."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = loss_fn()
        flat[i] = orig - eps
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


class TestBackwardBasics:
    def test_sum_of_squares_grad_is_2x(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 2, 3, 3))
        tape = Tape()
        xv = tape.input(x)
        tape.backward(tape.sum_all(tape.square(xv)))
        np.testing.assert_allclose(xv.grad, 2 * x, rtol=1e-12)

    def test_conv_with_ones_kernel_grad_wrt_input(self):
        x = np.random.default_rng(1).standard_normal((1, 1, 3, 3))
        w = Param(Tensor4(np.ones((1, 1, 1, 1))), "w")
        b = Param(np.zeros(1), "b")
        tape = Tape()
        xv = tape.input(x)
        tape.backward(tape.sum_all(tape.conv2d(xv, tape.watch(w), tape.watch(b))))
        np.testing.assert_array_equal(xv.grad, np.ones_like(x))

    def test_fanout_accumulates(self):
        x = np.ones((1, 1, 2, 2))
        tape = Tape()
        xv = tape.input(x)
        tape.backward(tape.add(tape.sum_all(xv), tape.sum_all(xv)))
        np.testing.assert_array_equal(xv.grad, 2 * np.ones_like(x))

    def test_rerun_is_bit_identical(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 4, 3, 3))
        w = Param(Tensor4(rng.standard_normal((4, 2, 3, 3))), "w")
        b = Param(rng.standard_normal(4), "b")

        def run():
            w.zero_grad(), b.zero_grad()
            tape = Tape()
            a, bb = tape.split_channels(tape.input(x))
            y = tape.conv2d(a, tape.watch(w), tape.watch(b))
            loss = tape.sum_all(tape.square(tape.tanh(y)))
            tape.backward(loss)
            return w.grad.copy(), b.grad.copy()

        g1, g2 = run(), run()
        np.testing.assert_array_equal(g1[0], g2[0])
        np.testing.assert_array_equal(g1[1], g2[1])

    def test_param_grads_accumulate_across_uses(self):
        w = Param(Tensor4(np.ones((1, 1, 1, 1))), "w")
        b = Param(np.zeros(1), "b")
        x = np.full((1, 1, 2, 2), 3.0)
        tape = Tape()
        wv, bv = tape.watch(w), tape.watch(b)
        y1 = tape.conv2d(tape.input(x), wv, bv)
        y2 = tape.conv2d(tape.input(x), wv, bv)
        tape.backward(tape.add(tape.sum_all(y1), tape.sum_all(y2)))
        np.testing.assert_array_equal(w.grad, np.full((1, 1, 1, 1), 24.0))


class TestUsageErrors:
    def test_non_scalar_loss(self):
        tape = Tape()
        v = tape.exp(tape.input(np.zeros((1, 1, 2, 2))))
        with pytest.raises(RuntimeError, match="scalar"):
            tape.backward(v)

    def test_loss_from_other_tape(self):
        t1, t2 = Tape(), Tape()
        loss = t1.sum_all(t1.input(np.zeros((1, 1, 1, 1))))
        with pytest.raises(RuntimeError, match="tape"):
            t2.backward(loss)

    def test_double_backward(self):
        tape = Tape()
        loss = tape.sum_all(tape.input(np.zeros((1, 1, 1, 1))))
        tape.backward(loss)
        with pytest.raises(RuntimeError, match="consumed"):
            tape.backward(loss)

    def test_non_recording_tape_cannot_backward(self):
        tape = Tape(recording=False)
        loss = tape.sum_all(tape.input(np.zeros((1, 1, 1, 1))))
        with pytest.raises(RuntimeError):
            tape.backward(loss)


class TestFiniteDifferenceOracle:
    def test_two_layer_subnet_matches_central_differences(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((1, 2, 4, 4))
        w1 = Param(Tensor4(rng.standard_normal((3, 2, 3, 3)) * 0.5), "w1")
        b1 = Param(rng.standard_normal(3) * 0.1, "b1")
        w2 = Param(Tensor4(rng.standard_normal((2, 3, 1, 1)) * 0.5), "w2")
        b2 = Param(rng.standard_normal(2) * 0.1, "b2")
        target = rng.standard_normal((1, 2, 4, 4))

        def forward(tape):
            h = tape.relu(tape.conv2d(tape.input(x), tape.watch(w1), tape.watch(b1)))
            y = tape.conv2d(h, tape.watch(w2), tape.watch(b2))
            d = tape.sub(y, tape.input(target))
            return tape.mean_all(tape.square(d))

        for p in (w1, b1, w2, b2):
            p.zero_grad()
        tape = Tape()
        tape.backward(forward(tape))

        def loss():
            return float(forward(Tape(recording=False)).value)

        for p in (w1, b1, w2, b2):
            fd = finite_diff(loss, p.array)
            np.testing.assert_allclose(p.grad, fd, rtol=1e-4, atol=1e-6)

    def test_grad_wrt_conv_input_matches_fd(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((1, 2, 3, 3))
        w = Param(Tensor4(rng.standard_normal((3, 2, 3, 3))), "w")
        b = Param(rng.standard_normal(3), "b")

        def forward(tape, xv):
            return tape.sum_all(tape.tanh(tape.conv2d(xv, tape.watch(w), tape.watch(b))))

        tape = Tape()
        xv = tape.input(x)
        tape.backward(forward(tape, xv))
        got = xv.grad.copy()

        def loss():
            t = Tape(recording=False)
            return float(forward(t, t.input(x)).value)

        np.testing.assert_allclose(got, finite_diff(loss, x), rtol=1e-5, atol=1e-8)

    def test_split_concat_permute_backward(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 4, 2, 2))
        perm = rng.permutation(4)
        weights = rng.standard_normal((2, 4, 2, 2))

        def forward(tape, xv):
            a, b = tape.split_channels(tape.permute_channels(xv, perm))
            y = tape.concat_channels(tape.mul(a, b), a)
            return tape.sum_all(tape.mul(y, tape.input(weights)))

        tape = Tape()
        xv = tape.input(x)
        tape.backward(forward(tape, xv))
        got = xv.grad.copy()

        def loss():
            t = Tape(recording=False)
            return float(forward(t, t.input(x)).value)

        np.testing.assert_allclose(got, finite_diff(loss, x), rtol=1e-6, atol=1e-9)

    def test_reductions_and_scalars_backward(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((1, 3, 2, 2))

        def forward(tape, xv):
            m = tape.sum_over_channels(tape.exp(tape.scale(xv, 0.3)))
            s = tape.add_scalar(tape.scale(tape.mean_all(m), 2.0), 1.0)
            return tape.sub(s, tape.scale(tape.sum_all(xv), 0.1))

        tape = Tape()
        xv = tape.input(x)
        tape.backward(forward(tape, xv))
        got = xv.grad.copy()

        def loss():
            t = Tape(recording=False)
            return float(forward(t, t.input(x)).value)

        np.testing.assert_allclose(got, finite_diff(loss, x), rtol=1e-6, atol=1e-9)


class TestGradCheck:
    def test_linear_function_error_at_rounding_level(self):
        rng = np.random.default_rng(3)
        p = Param(Tensor4(rng.standard_normal((1, 1, 2, 2))), "p")
        coef = rng.standard_normal((1, 1, 2, 2))

        def loss_fn(tape):
            return tape.sum_all(tape.mul(tape.watch(p), tape.input(coef)))

        assert grad_check(loss_fn, [p]) < 1e-9

    def test_tanh_clamped_scale_path(self):
        rng = np.random.default_rng(4)
        p = Param(Tensor4(rng.standard_normal((1, 2, 3, 3)) * 0.5), "p")
        y = rng.standard_normal((1, 2, 3, 3))
        alpha = 2.0

        def loss_fn(tape):
            t = tape.scale(tape.tanh(tape.scale(tape.watch(p), 1 / alpha)), alpha)
            return tape.sum_all(tape.square(tape.mul(tape.exp(t), tape.input(y))))

        assert grad_check(loss_fn, [p]) <= 1e-4

    def test_rejects_float32_params(self):
        p = Param(Tensor4(np.zeros((1, 1, 1, 1), dtype=np.float32)), "p")
        with pytest.raises(ValueError, match="float64"):
            grad_check(lambda tape: tape.sum_all(tape.watch(p)), [p])
