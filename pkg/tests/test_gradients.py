"""Gradient machinery tests: the shift rule against analytic and
finite-difference values, and every classical layer against central
finite differences of its own forward pass.
"""
import numpy as np
import pytest

from hqfnn import qsim
from hqfnn.gradients import (
    GradCheckReport,
    conv1d_backward,
    conv1d_forward,
    conv2d_backward,
    conv2d_forward,
    finite_diff_grad,
    linear_backward,
    linear_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    param_shift_grad,
    relative_error,
    relu_backward,
    relu_forward,
    softmax_ce_backward,
    softmax_ce_forward,
)

RNG_SEED = 7


def ry_expectation(theta: float) -> float:
    state = qsim.apply_one_qubit(qsim.zero_state(1), 0, qsim.rotation_gate("y", theta))
    return qsim.expectation_z(state, 0)


class TestParamShift:
    def test_zero_angle(self):
        """d cos(theta)/dtheta = 0 at theta = 0."""
        assert param_shift_grad(ry_expectation, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_half_pi(self):
        """-sin(pi/2) = -1, cross-checked by finite differences."""
        got = param_shift_grad(ry_expectation, np.pi / 2)
        assert got == pytest.approx(-1.0, abs=1e-12)
        assert got == pytest.approx(finite_diff_grad(ry_expectation, np.pi / 2), abs=1e-6)

    def test_constant_function(self):
        assert param_shift_grad(lambda _: 0.25, 1.3) == pytest.approx(0.0, abs=1e-15)

    def test_matches_finite_diff_all_axes(self):
        """100 random angles per rotation axis, rel err < 1e-6."""
        rng = np.random.default_rng(RNG_SEED)
        for axis in "xyz":
            def expectation(theta, axis=axis):
                state = qsim.apply_one_qubit(qsim.zero_state(1), 0,
                                             qsim.rotation_gate("y", 0.4))
                state = qsim.apply_one_qubit(state, 0, qsim.rotation_gate(axis, theta))
                return qsim.expectation_z(state, 0)

            for theta in rng.uniform(-np.pi, np.pi, size=100):
                shift = param_shift_grad(expectation, theta)
                fd = finite_diff_grad(expectation, theta)
                assert relative_error(shift, fd) < 1e-6


class TestFiniteDiff:
    def test_square(self):
        assert finite_diff_grad(lambda x: x**2, 3.0) == pytest.approx(6.0, abs=1e-6)

    def test_cosine(self):
        assert finite_diff_grad(np.cos, 1.0) == pytest.approx(-np.sin(1.0), abs=1e-6)

    def test_constant(self):
        assert finite_diff_grad(lambda _: 5.0, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_grad(np.cos, 1.0, h=0.0)


def numeric_grad(f, arr, h=1e-6):
    """Central-difference gradient of scalar f with respect to arr."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        plus = f()
        arr[idx] = orig - h
        minus = f()
        arr[idx] = orig
        grad[idx] = (plus - minus) / (2 * h)
        it.iternext()
    return grad


class TestClassicalLayers:
    def test_relu_dead_unit(self):
        out, cache = relu_forward(np.array([-2.0]))
        assert out[0] == 0.0
        assert relu_backward(np.array([1.0]), cache)[0] == 0.0

    def test_linear_param_grad_structure(self):
        """For y = xW + b and upstream g, dW = x^T g and db = sum g."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        _, cache = linear_forward(x, w, b)
        g = rng.normal(size=(3, 2))
        dx, dw, db = linear_backward(g, cache)
        np.testing.assert_allclose(dw, x.T @ g, atol=1e-12)
        np.testing.assert_allclose(db, g.sum(axis=0), atol=1e-12)
        np.testing.assert_allclose(dx, g @ w.T, atol=1e-12)

    def test_linear_rejects_mismatch(self):
        with pytest.raises(ValueError):
            linear_forward(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))

    def test_conv1d_matches_loop_oracle(self):
        """Forward equals a nested-loop convolution with zero padding."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(5, 3, 3))
        b = rng.normal(size=5)
        out, _ = conv1d_forward(x, w, b)
        expected = np.zeros((2, 5, 4))
        for bi in range(2):
            for co in range(5):
                for pos in range(4):
                    acc = b[co]
                    for ci in range(3):
                        for k in (-1, 0, 1):
                            if 0 <= pos + k < 4:
                                acc += w[co, ci, k + 1] * x[bi, ci, pos + k]
                    expected[bi, co, pos] = acc
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_conv1d_grads_match_finite_diff(self):
        """Weight, bias and input paths on a random 4x8x5 input, rel 1e-4."""
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(4, 8, 5))
        w = rng.normal(size=(8, 8, 3))
        b = rng.normal(size=8)
        g = rng.normal(size=(4, 8, 5))

        def loss():
            out, _ = conv1d_forward(x, w, b)
            return float((out * g).sum())

        _, cache = conv1d_forward(x, w, b)
        dx, dw, db = conv1d_backward(g, cache)
        for got, arr in ((dx, x), (dw, w), (db, b)):
            fd = numeric_grad(loss, arr)
            assert np.max(np.abs(got - fd) / np.maximum(1.0, np.abs(fd))) < 1e-4

    def test_conv2d_grads_match_finite_diff(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 2, 4, 4))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        g = rng.normal(size=(2, 3, 4, 4))

        def loss():
            out, _ = conv2d_forward(x, w, b)
            return float((out * g).sum())

        _, cache = conv2d_forward(x, w, b)
        dx, dw, db = conv2d_backward(g, cache)
        for got, arr in ((dx, x), (dw, w), (db, b)):
            fd = numeric_grad(loss, arr)
            assert np.max(np.abs(got - fd) / np.maximum(1.0, np.abs(fd))) < 1e-4

    def test_maxpool_forward_and_backward(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out, cache = maxpool2x2_forward(x)
        assert out[0, 0, 0, 0] == 4.0
        grad = maxpool2x2_backward(np.array([[[[5.0]]]]), cache)
        np.testing.assert_allclose(grad, [[[[0, 0], [0, 5.0]]]])

    def test_maxpool_grad_matches_finite_diff(self):
        rng = np.random.default_rng(RNG_SEED)
        x = rng.normal(size=(2, 3, 4, 4))
        g = rng.normal(size=(2, 3, 2, 2))

        def loss():
            out, _ = maxpool2x2_forward(x)
            return float((out * g).sum())

        _, cache = maxpool2x2_forward(x)
        dx = maxpool2x2_backward(g, cache)
        fd = numeric_grad(loss, x)
        np.testing.assert_allclose(dx, fd, atol=1e-6)

    def test_maxpool_rejects_odd_dims(self):
        with pytest.raises(ValueError):
            maxpool2x2_forward(np.zeros((1, 1, 3, 4)))


class TestSoftmaxCE:
    def test_uniform_logits(self):
        loss, _ = softmax_ce_forward(np.zeros((4, 10)), np.array([0, 3, 5, 9]))
        assert loss == pytest.approx(np.log(10.0), abs=1e-12)

    def test_saturated_logits(self):
        logits = np.zeros((1, 10))
        logits[0, 2] = 1000.0
        loss, _ = softmax_ce_forward(logits, np.array([2]))
        assert loss < 1e-6

    def test_matches_unstabilized_oracle(self):
        """Direct -log(exp/sumexp) on small logits, 1e-10."""
        rng = np.random.default_rng(RNG_SEED)
        logits = rng.normal(size=(6, 5))
        labels = rng.integers(0, 5, size=6)
        loss, _ = softmax_ce_forward(logits, labels)
        expected = 0.0
        for row, label in zip(logits, labels):
            expected -= np.log(np.exp(row[label]) / np.exp(row).sum())
        assert loss == pytest.approx(expected / 6, abs=1e-10)

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError):
            softmax_ce_forward(np.zeros((2, 3)), np.array([0, 3]))

    def test_gradient_matches_finite_diff(self):
        rng = np.random.default_rng(RNG_SEED)
        logits = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)

        def loss():
            return softmax_ce_forward(logits, labels)[0]

        _, cache = softmax_ce_forward(logits, labels)
        grad = softmax_ce_backward(cache)
        fd = numeric_grad(loss, logits)
        np.testing.assert_allclose(grad, fd, atol=1e-8)


def test_gradcheck_report():
    report = GradCheckReport(max_rel_err=5e-4, num_params=10, tolerance=1e-3)
    assert report.passed
    assert not GradCheckReport(max_rel_err=2e-3, num_params=10, tolerance=1e-3).passed
