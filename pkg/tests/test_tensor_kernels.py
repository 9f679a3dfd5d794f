"""Tests for the forward kernels against brute-force loop oracles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skipnet.errors import ConfigurationError, DimensionError
from skipnet.tensor import (
    ConvSpec,
    Precision,
    as_tensor,
    col2im,
    conv2d,
    default_dtype,
    dense,
    elementwise_add,
    elementwise_mul,
    elementwise_mul_broadcast,
    flat_index,
    get_precision,
    im2col,
    log_softmax,
    maxpool2d,
    precision,
    relu,
    sigmoid,
    softmax,
)
from tests.oracles import conv2d_loops, dense_loops, maxpool2d_loops


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestConv2d:
    """Convolution against the loop oracle."""

    def test_random_instances_match_oracle(self, rng):
        """Random geometries, including dilation 2 and stride 2."""
        for _ in range(100):
            kernel = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            dilation = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 3))
            reach = dilation * (kernel - 1) + 1
            h = int(rng.integers(max(reach - 2 * padding, 1), 9))
            w = int(rng.integers(max(reach - 2 * padding, 1), 9))
            n, c_in, c_out = (int(v) for v in rng.integers(1, 4, 3))
            x = rng.standard_normal((n, c_in, h, w)).astype(np.float32)
            weight = rng.standard_normal((c_out, c_in, kernel, kernel)).astype(np.float32)
            bias = rng.standard_normal(c_out).astype(np.float32)
            spec = ConvSpec.square(kernel, stride, padding, dilation)

            out = conv2d(x, weight, bias, spec)

            expected = conv2d_loops(x, weight, bias, stride, padding, dilation)
            assert out.dtype == np.float32
            assert_allclose(out, expected, atol=1e-5, rtol=0)

    def test_known_values(self):
        """A 3x3 box filter over a ramp with zero padding."""
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        weight = np.ones((1, 1, 3, 3), dtype=np.float32)

        out = conv2d(x, weight, None, ConvSpec.same(3))

        assert out.shape == (1, 1, 4, 4)
        assert out[0, 0, 0, 0] == 0 + 1 + 4 + 5
        assert out[0, 0, 1, 1] == sum(range(0, 3)) + sum(range(4, 7)) + sum(range(8, 11))

    def test_one_by_one_identity_is_exact(self, rng):
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        weight = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        assert_array_equal(conv2d(x, weight, None, ConvSpec.square(1)), x)

    def test_scalar_weight_scales_input(self):
        out = conv2d(
            np.ones((1, 1, 3, 3), dtype=np.float32),
            np.full((1, 1, 1, 1), 2.0, dtype=np.float32),
            None,
            ConvSpec.square(1),
        )
        assert_array_equal(out, np.full((1, 1, 3, 3), 2.0))

    def test_dilated_taps_skip_rows_and_columns(self):
        x = np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5)
        weight = np.ones((1, 1, 3, 3), dtype=np.float32)

        out = conv2d(x, weight, None, ConvSpec.square(3, dilation=2))

        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == x[0, 0, ::2, ::2].sum()

    def test_same_padding_keeps_extent_with_dilation(self, rng):
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        weight = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        out = conv2d(x, weight, None, ConvSpec.same(3, dilation=2))
        assert out.shape == (2, 4, 8, 8)

    def test_channel_mismatch_names_axis(self):
        x = np.zeros((1, 3, 5, 5), dtype=np.float32)
        weight = np.zeros((2, 4, 3, 3), dtype=np.float32)
        with pytest.raises(DimensionError, match="axis 1"):
            conv2d(x, weight, None, ConvSpec.square(3))

    def test_bias_shape_mismatch(self):
        x = np.zeros((1, 1, 5, 5), dtype=np.float32)
        weight = np.zeros((2, 1, 3, 3), dtype=np.float32)
        with pytest.raises(DimensionError):
            conv2d(x, weight, np.zeros(3, dtype=np.float32), ConvSpec.square(3))

    def test_empty_output_is_configuration_error(self):
        x = np.zeros((1, 1, 3, 3), dtype=np.float32)
        weight = np.zeros((1, 1, 3, 3), dtype=np.float32)
        with pytest.raises(ConfigurationError):
            conv2d(x, weight, None, ConvSpec.square(3, dilation=2))

    def test_same_rejects_even_kernel(self):
        with pytest.raises(ConfigurationError):
            ConvSpec.same(2)

    def test_col2im_is_adjoint_of_im2col(self, rng):
        """<im2col(x), y> == <x, col2im(y)> for any y."""
        spec = ConvSpec.square(3, stride=2, padding=1, dilation=2)
        x = rng.standard_normal((2, 2, 7, 6))
        cols = im2col(x, spec)
        y = rng.standard_normal(cols.shape)

        back = col2im(y, x.shape, spec)

        assert back.shape == x.shape
        assert_allclose((cols * y).sum(), (x * back).sum(), rtol=1e-10)


class TestMaxPool:
    """Window max and winner offsets."""

    def test_random_instances_match_oracle(self, rng):
        for _ in range(100):
            h, w = (int(v) for v in rng.integers(2, 9, 2))
            x = rng.standard_normal((2, 3, h, w)).astype(np.float32)

            pooled, argmax = maxpool2d(x, 2, 2, 2, 2)

            expected, expected_arg = maxpool2d_loops(x)
            assert_array_equal(pooled, expected)
            assert_array_equal(argmax, expected_arg)

    def test_ties_go_to_lowest_offset(self):
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        pooled, argmax = maxpool2d(x, 2, 2, 2, 2)
        assert pooled[0, 0, 0, 0] == 1
        assert argmax[0, 0, 0, 0] == 0

    def test_odd_extent_drops_last_row_and_column(self):
        x = np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5)
        pooled, _ = maxpool2d(x, 2, 2, 2, 2)
        assert_array_equal(pooled[0, 0], [[6, 8], [16, 18]])

    def test_window_larger_than_input(self):
        with pytest.raises(ConfigurationError):
            maxpool2d(np.zeros((1, 1, 1, 4), dtype=np.float32), 2, 2, 2, 2)


class TestDense:
    def test_random_instances_match_oracle(self, rng):
        for _ in range(100):
            n, f_in, f_out = (int(v) for v in rng.integers(1, 9, 3))
            x = rng.standard_normal((n, f_in)).astype(np.float32)
            weight = rng.standard_normal((f_out, f_in)).astype(np.float32)
            bias = rng.standard_normal(f_out).astype(np.float32)

            out = dense(x, weight, bias)

            assert_allclose(out, dense_loops(x, weight, bias), atol=1e-5, rtol=0)

    def test_feature_mismatch(self):
        with pytest.raises(DimensionError):
            dense(np.zeros((2, 3)), np.zeros((4, 5)), None)


class TestActivations:
    def test_relu(self):
        assert_array_equal(relu(np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5])

    def test_sigmoid_stays_inside_open_interval(self):
        """Saturated logits still map strictly inside (0, 1)."""
        for dtype in (np.float32, np.float64):
            out = sigmoid(np.array([-1000.0, -50.0, 0.0, 50.0, 1000.0], dtype=dtype))
            assert out.dtype == dtype
            assert np.all(out > 0) and np.all(out < 1)
            assert out[2] == 0.5

    def test_softmax_rows_sum_to_one(self, rng):
        x = rng.standard_normal((5, 3)) * 100
        assert_allclose(softmax(x).sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_is_shift_invariant(self):
        x = np.array([[1.0, 2.0, 3.0]])
        assert_allclose(softmax(x), softmax(x + 1000.0), atol=1e-12)

    def test_log_softmax_matches_log_of_softmax(self, rng):
        x = rng.standard_normal((4, 3))
        assert_allclose(log_softmax(x), np.log(softmax(x)), atol=1e-12)


class TestElementwise:
    def test_add_and_mul_require_equal_shapes(self):
        a = np.ones((2, 3))
        with pytest.raises(DimensionError):
            elementwise_add(a, np.ones((3, 2)))
        with pytest.raises(DimensionError):
            elementwise_mul(a, np.ones((2, 2)))

    def test_broadcast_accepts_only_single_channel_map(self, rng):
        a = rng.standard_normal((2, 3, 4, 4))
        m = rng.random((2, 1, 4, 4))

        out = elementwise_mul_broadcast(a, m)

        assert_allclose(out, a * m)
        with pytest.raises(DimensionError):
            elementwise_mul_broadcast(a, rng.random((2, 3, 4, 4)))

    def test_results_are_read_only(self):
        out = elementwise_add(np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            out[0] = 5.0


class TestCore:
    def test_precision_defaults_to_float32(self):
        assert get_precision() == Precision.FLOAT32
        assert default_dtype() == np.float32

    def test_precision_context_restores(self):
        with precision("float64"):
            assert as_tensor([1, 2]).dtype == np.float64
        assert as_tensor([1, 2]).dtype == np.float32

    def test_unknown_precision(self):
        with pytest.raises(ConfigurationError):
            with precision("float16"):
                pass

    def test_flat_index_is_row_major(self):
        shape = (2, 3, 4, 5)
        x = np.arange(np.prod(shape)).reshape(shape)
        assert x.flat[flat_index(shape, 1, 2, 3, 4)] == x[1, 2, 3, 4]
