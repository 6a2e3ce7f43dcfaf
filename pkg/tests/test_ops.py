"""Primitive op contracts: worked examples, oracles, error behaviour."""

import numpy as np
import pytest

from onfire import ops
from onfire.errors import ContractError, NumericError, ShapeError
from onfire.ops import ConvGeometry


def conv_oracle(x, w, b, stride, pad_t, pad_l, out_h, out_w):
    """Direct nested-loop cross-correlation; the independent reference."""
    n, h, wd, cin = x.shape
    kh, kw, _, f = w.shape
    out = np.zeros((n, out_h, out_w, f), dtype=np.float64)
    for bi in range(n):
        for oy in range(out_h):
            for ox in range(out_w):
                for i in range(kh):
                    for j in range(kw):
                        y, xx = oy * stride - pad_t + i, ox * stride - pad_l + j
                        if 0 <= y < h and 0 <= xx < wd:
                            for ci in range(cin):
                                out[bi, oy, ox] += x[bi, y, xx, ci] * w[i, j, ci]
    return out + b


class TestConv2d:
    def test_identity_kernel(self):
        x = np.ones((1, 5, 5, 1), dtype=np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        y = ops.conv2d(x, w, np.zeros(1, np.float32), ConvGeometry(1, 1, 1, "same"))
        assert y.shape == (1, 5, 5, 1)
        assert np.array_equal(y, x)

    def test_all_ones_valid(self):
        x = np.ones((1, 4, 4, 1), dtype=np.float32)
        w = np.ones((3, 3, 1, 1), dtype=np.float32)
        y = ops.conv2d(x, w, np.zeros(1, np.float32), ConvGeometry(3, 3, 1, "valid"))
        assert y.shape == (1, 2, 2, 1)
        assert np.all(y == 9.0)

    def test_asymmetric_shape_rule(self):
        geom = ConvGeometry(1, 7, 1, "same")
        assert geom.out_hw(56, 56) == (56, 56)
        x = np.zeros((1, 56, 56, 192), dtype=np.float32)
        w = np.zeros((1, 7, 192, 128), dtype=np.float32)
        y = ops.conv2d(x, w, np.zeros(128, np.float32), geom)
        assert y.shape == (1, 56, 56, 128)

    @pytest.mark.parametrize("geom", [
        ConvGeometry(3, 3, 1, "same"),
        ConvGeometry(3, 3, 2, "valid"),
        ConvGeometry(1, 5, 1, "same"),
        ConvGeometry(5, 1, 2, "same"),
    ])
    def test_matches_nested_loop_oracle(self, geom, rng, any_backend):
        x = rng.uniform(-1, 1, (2, 7, 7, 3)).astype(np.float32)
        w = rng.uniform(-1, 1, (geom.kernel_h, geom.kernel_w, 3, 4)).astype(np.float32)
        b = rng.uniform(-1, 1, 4).astype(np.float32)
        oh, ow = geom.out_hw(7, 7)
        pt, pl = geom.pads(7, 7)
        ref = conv_oracle(x, w, b, geom.stride, pt, pl, oh, ow)
        y = ops.conv2d(x, w, b, geom)
        np.testing.assert_allclose(y, ref, rtol=1e-5, atol=1e-5)

    def test_linearity(self, rng):
        geom = ConvGeometry(3, 3, 1, "same")
        x = rng.uniform(-1, 1, (1, 6, 6, 2)).astype(np.float32)
        y = rng.uniform(-1, 1, (1, 6, 6, 2)).astype(np.float32)
        w = rng.uniform(-1, 1, (3, 3, 2, 3)).astype(np.float32)
        a, b = np.float32(0.7), np.float32(-1.3)
        lhs = ops.conv2d(a * x + b * y, w, None, geom)
        rhs = a * ops.conv2d(x, w, None, geom) + b * ops.conv2d(y, w, None, geom)
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_determinism(self, rng, any_backend):
        geom = ConvGeometry(3, 3, 2, "same")
        x = rng.uniform(-1, 1, (2, 9, 9, 3)).astype(np.float32)
        w = rng.uniform(-1, 1, (3, 3, 3, 8)).astype(np.float32)
        b = rng.uniform(-1, 1, 8).astype(np.float32)
        y1 = ops.conv2d(x, w, b, geom)
        y2 = ops.conv2d(x, w, b, geom)
        assert np.array_equal(y1, y2)

    def test_channel_mismatch_names_shapes(self):
        x = np.zeros((1, 4, 4, 3), dtype=np.float32)
        w = np.zeros((3, 3, 2, 4), dtype=np.float32)
        with pytest.raises(ShapeError, match=r"\(1, 4, 4, 3\).*\(3, 3, 2, 4\)"):
            ops.conv2d(x, w, None, ConvGeometry(3, 3))

    def test_non_finite_input_is_numeric_error(self):
        x = np.full((1, 4, 4, 1), np.nan, dtype=np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        with pytest.raises(NumericError):
            ops.conv2d(x, w, None, ConvGeometry(1, 1))

    def test_overflow_is_an_error(self):
        x = np.full((1, 2, 2, 1), 1e30, dtype=np.float32)
        w = np.full((2, 2, 1, 1), 1e30, dtype=np.float32)
        with pytest.raises(NumericError):
            ops.conv2d(x, w, None, ConvGeometry(2, 2, 1, "valid"))

    def test_fp64_accumulation_option(self, rng):
        geom = ConvGeometry(3, 3, 1, "valid")
        x = rng.uniform(-1, 1, (1, 5, 5, 2)).astype(np.float32)
        w = rng.uniform(-1, 1, (3, 3, 2, 2)).astype(np.float32)
        y32 = ops.conv2d(x, w, None, geom)
        y64 = ops.conv2d(x, w, None, geom, accumulate_fp64=True)
        np.testing.assert_allclose(y32, y64, rtol=1e-5, atol=1e-6)


class TestMaxPool:
    def test_enumerated_windows(self, any_backend):
        x = np.arange(1, 17, dtype=np.float32).reshape(1, 4, 4, 1)
        y = ops.max_pool(x, 2, 2, "valid")
        assert y.reshape(-1).tolist() == [6.0, 8.0, 14.0, 16.0]

    def test_constant_tensor(self):
        x = np.full((1, 6, 6, 2), 3.5, dtype=np.float32)
        y = ops.max_pool(x, 3, 2, "valid")
        assert y.shape == (1, 2, 2, 2)
        assert np.all(y == 3.5)

    def test_shape_arithmetic_299(self):
        assert ConvGeometry(3, 3, 2, "valid").out_hw(299, 299) == (149, 149)
        x = np.zeros((1, 299, 299, 3), dtype=np.float32)
        assert ops.max_pool(x, 3, 2, "valid").shape == (1, 149, 149, 3)

    def test_window_too_large(self):
        x = np.zeros((1, 3, 3, 1), dtype=np.float32)
        with pytest.raises(ShapeError):
            ops.max_pool(x, 5, 1, "valid")

    def test_gradient_routes_to_argmax(self, any_backend):
        x = np.arange(16, dtype=np.float32).reshape(1, 4, 4, 1)
        y, cache = ops.max_pool_fwd(x, 2, 2, "valid")
        dy = np.ones_like(y)
        dx = ops.max_pool_bwd(dy, cache)
        expected = np.zeros((1, 4, 4, 1), dtype=np.float32)
        for r, c in ((1, 1), (1, 3), (3, 1), (3, 3)):
            expected[0, r, c, 0] = 1.0
        assert np.array_equal(dx, expected)

    def test_backward_before_forward(self):
        with pytest.raises(ContractError, match="before forward"):
            ops.max_pool_bwd(np.zeros((1, 2, 2, 1), np.float32), None)


class TestGlobalMaxPool:
    def test_simple(self):
        x = np.array([1, 5, 3, 2], dtype=np.float32).reshape(1, 2, 2, 1)
        assert ops.global_max_pool(x).tolist() == [[5.0]]

    def test_constant(self):
        x = np.full((2, 3, 3, 4), 1.25, dtype=np.float32)
        assert np.all(ops.global_max_pool(x) == 1.25)

    def test_shape(self):
        x = np.zeros((2, 7, 7, 96), dtype=np.float32)
        assert ops.global_max_pool(x).shape == (2, 96)

    def test_rank_contract(self):
        with pytest.raises(ShapeError):
            ops.global_max_pool(np.zeros((3, 3, 1), dtype=np.float32))

    def test_gradient_first_argmax_only(self):
        x = np.array([2, 5, 5, 1], dtype=np.float32).reshape(1, 2, 2, 1)
        y, cache = ops.global_max_pool_fwd(x)
        dx = ops.global_max_pool_bwd(np.ones_like(y), cache)
        assert dx.reshape(-1).tolist() == [0.0, 1.0, 0.0, 0.0]


class TestConcat:
    def test_channel_additivity(self):
        parts = [np.zeros((1, 3, 3, c), dtype=np.float32) for c in (64, 96, 96, 32)]
        assert ops.concat_channels(parts).shape == (1, 3, 3, 288)

    def test_single_pixel(self):
        a = np.array([[[[1.0]]]], dtype=np.float32)
        b = np.array([[[[2.0]]]], dtype=np.float32)
        assert ops.concat_channels([a, b]).reshape(-1).tolist() == [1.0, 2.0]

    def test_branch_order_preserved(self, rng):
        a = rng.uniform(size=(1, 2, 2, 3)).astype(np.float32)
        b = rng.uniform(size=(1, 2, 2, 2)).astype(np.float32)
        y = ops.concat_channels([a, b])
        assert np.array_equal(y[..., :3], a)
        assert np.array_equal(y[..., 3:], b)

    def test_spatial_mismatch_names_branch(self):
        a = np.zeros((1, 3, 3, 1), dtype=np.float32)
        b = np.zeros((1, 4, 3, 1), dtype=np.float32)
        with pytest.raises(ShapeError, match="branch 1"):
            ops.concat_channels([a, b])

    def test_needs_two_inputs(self):
        with pytest.raises(ContractError):
            ops.concat_channels([np.zeros((1, 2, 2, 1), dtype=np.float32)])

    def test_backward_splits(self, rng):
        dy = rng.uniform(size=(1, 2, 2, 5)).astype(np.float32)
        grads = ops.concat_channels_bwd(dy, [2, 3])
        assert np.array_equal(grads[0], dy[..., :2])
        assert np.array_equal(grads[1], dy[..., 2:])


class TestAvgPool:
    def test_mean_excludes_padding(self, any_backend):
        x = np.ones((1, 4, 4, 1), dtype=np.float32)
        y = ops.avg_pool(x, 3, 1, "same")
        # All-ones input: mean over valid positions is exactly 1 everywhere.
        assert np.allclose(y, 1.0)

    def test_valid_window_mean(self):
        x = np.arange(1, 17, dtype=np.float32).reshape(1, 4, 4, 1)
        y = ops.avg_pool(x, 2, 2, "valid")
        assert y.reshape(-1).tolist() == [3.5, 5.5, 11.5, 13.5]


class TestConvGeometry:
    def test_same_stride1_preserves(self):
        assert ConvGeometry(3, 3, 1, "same").out_hw(17, 33) == (17, 33)

    def test_valid_formula(self):
        geom = ConvGeometry(3, 3, 2, "valid")
        assert geom.out_extent(35, 3) == 17

    def test_valid_requires_fit(self):
        with pytest.raises(ShapeError):
            ConvGeometry(7, 7, 1, "valid").out_hw(5, 5)

    def test_invalid_config(self):
        with pytest.raises(ContractError):
            ConvGeometry(0, 3)
        with pytest.raises(ContractError):
            ConvGeometry(3, 3, 0)
        with pytest.raises(ContractError):
            ConvGeometry(3, 3, 1, "reflect")
