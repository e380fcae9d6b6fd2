"""Quantized activation and sampling-head semantics, checked against hand math."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsn.autodiff import Tensor, avg_pool, pixel_unshuffle, reduce_sum, sub, tile_upsample
from dsn.errors import ShapeError
from dsn.layers import (
    ConvParams,
    DenseBlockConfig,
    QBReluParams,
    dense_block,
    q_brelu,
    subpixel_residual_up,
    superpixel_residual_down,
)

EIGHT_BIT = QBReluParams(0.0, 1.0, 256)


def t4(values, dtype=np.float64, requires_grad=False):
    return Tensor(np.asarray(values, dtype=dtype)[None, None], requires_grad=requires_grad)


def zero_head_down(s):
    """Residual head that is identically zero (matches an all-zero-init head)."""
    def head(H):
        n, c, h, w = H.shape
        return Tensor.zeros((n, c, h // s, w // s), dtype=H.dtype)
    return head


def zero_head_up(s):
    def head(L):
        n, c, h, w = L.shape
        return Tensor.zeros((n, s * s, h, w), dtype=L.dtype)
    return head


class TestQBRelu:
    def test_four_level_rounding(self):
        p = QBReluParams(0.0, 1.0, 4)
        out = q_brelu(t4([[0.3]]), p)
        assert out.data.reshape(()) == pytest.approx(1 / 3, abs=1e-12)

    def test_rail_clamping(self):
        p = QBReluParams(0.0, 1.0, 4)
        out = q_brelu(t4([[-0.2, 1.7]]), p)
        np.testing.assert_array_equal(out.data.reshape(2), [0.0, 1.0])

    def test_grid_values_are_fixed_points(self):
        p = QBReluParams(0.0, 1.0, 256)
        grid = p.grid()
        out = q_brelu(Tensor(grid.reshape(1, 1, 16, 16)), p)
        np.testing.assert_array_equal(out.data.reshape(-1), grid)

    def test_straight_through_inside_rails(self):
        x = t4([[0.5]], requires_grad=True)
        q_brelu(x, EIGHT_BIT).backward(np.full((1, 1, 1, 1), 3.25))
        assert x.grad.reshape(()) == 3.25

    def test_zero_gradient_outside_rails(self):
        x = t4([[-0.2]], requires_grad=True)
        q_brelu(x, EIGHT_BIT).backward()
        assert x.grad.reshape(()) == 0.0

    def test_zero_gradient_exactly_on_rails(self):
        x = t4([[0.0, 1.0]], requires_grad=True)
        reduce_sum(q_brelu(x, EIGHT_BIT)).backward()
        np.testing.assert_array_equal(x.grad.reshape(2), [0.0, 0.0])

    @given(levels=st.integers(2, 300), seed=st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_monotone(self, levels, seed):
        p = QBReluParams(0.0, 1.0, levels)
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(-0.5, 1.5, size=64))
        y = q_brelu(Tensor(x.reshape(1, 1, 8, 8)), p).data.reshape(-1)
        yy = q_brelu(Tensor(y.reshape(1, 1, 8, 8)), p).data.reshape(-1)
        np.testing.assert_array_equal(yy, y)          # exact fixed point
        assert np.all(np.diff(y) >= 0)                # monotone in sorted input

    def test_center_quantization_bound(self):
        rng = np.random.default_rng(17)
        for p in (EIGHT_BIT, QBReluParams(-0.25, 0.75, 5)):
            x = rng.uniform(p.t_min - 0.5, p.t_max + 0.5, size=(1, 1, 100, 100))
            y = q_brelu(Tensor(x), p).data
            clamped = np.clip(x, p.t_min, p.t_max)
            assert np.abs(y - clamped).max() <= p.cell / 2 + 1e-12
            assert y.min() >= p.t_min and y.max() <= p.t_max

    def test_zero_mean_deviation(self):
        rng = np.random.default_rng(18)
        x = rng.uniform(0.0, 1.0, size=(1, 1, 400, 250))  # 1e5 samples
        y = q_brelu(Tensor(x), EIGHT_BIT).data
        assert abs((y - x).mean()) < EIGHT_BIT.cell * 0.05

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            QBReluParams(1.0, 0.0, 4)
        with pytest.raises(ValueError):
            QBReluParams(0.0, 1.0, 1)


class TestSuperpixelDown:
    def test_zero_head_is_quantized_average(self):
        H = t4([[0.1, 0.2], [0.3, 0.4]])
        L = superpixel_residual_down(H, zero_head_down(2), 2, EIGHT_BIT)
        assert L.data.reshape(()) == pytest.approx(64 / 255, abs=1e-12)

    def test_grid_constant_passes_through(self):
        c = 100 / 255
        H = Tensor(np.full((1, 1, 6, 6), c))
        for s in (1, 2, 3):
            L = superpixel_residual_down(H, zero_head_down(s), s, EIGHT_BIT)
            np.testing.assert_allclose(L.data, c, atol=1e-12)

    def test_s1_zero_head_identity_on_grid(self):
        rng = np.random.default_rng(19)
        H = Tensor((rng.integers(0, 256, size=(1, 1, 4, 4)) / 255.0))
        L = superpixel_residual_down(H, zero_head_down(1), 1, EIGHT_BIT)
        np.testing.assert_allclose(L.data, H.data, atol=1e-12)

    def test_zero_head_matches_quantized_avg_pool_exactly(self):
        rng = np.random.default_rng(20)
        H = Tensor(rng.uniform(0, 1, size=(2, 1, 12, 12)))
        L = superpixel_residual_down(H, zero_head_down(3), 3, EIGHT_BIT)
        ref = q_brelu(avg_pool(H, 3), EIGHT_BIT)
        np.testing.assert_array_equal(L.data, ref.data)

    def test_non_divisible_rejected(self):
        H = Tensor(np.zeros((1, 1, 5, 6)))
        with pytest.raises(ShapeError):
            superpixel_residual_down(H, zero_head_down(2), 2, EIGHT_BIT)


class TestSubpixelUp:
    def test_zero_head_is_tile_upsample(self):
        rng = np.random.default_rng(21)
        L = Tensor(rng.uniform(0, 1, size=(1, 1, 3, 4)))
        S = subpixel_residual_up(L, zero_head_up(2), 2)
        np.testing.assert_array_equal(S.data, tile_upsample(L, 2).data)

    def test_true_residual_reconstructs_exactly(self):
        rng = np.random.default_rng(22)
        s = 3
        L = Tensor(rng.uniform(0, 1, size=(1, 1, 4, 4)))
        S_true = Tensor(rng.uniform(0, 1, size=(1, 1, 12, 12)))
        residual = pixel_unshuffle(sub(S_true, tile_upsample(L, s)), s)
        S = subpixel_residual_up(L, lambda _: residual, s)
        np.testing.assert_allclose(S.data, S_true.data, atol=1e-15)

    def test_s1_zero_head_identity(self):
        rng = np.random.default_rng(23)
        L = Tensor(rng.uniform(0, 1, size=(1, 1, 5, 5)))
        S = subpixel_residual_up(L, zero_head_up(1), 1)
        np.testing.assert_array_equal(S.data, L.data)

    def test_wrong_channel_count_rejected(self):
        L = Tensor(np.zeros((1, 1, 4, 4)))
        with pytest.raises(ShapeError):
            subpixel_residual_up(L, zero_head_up(2), 3)


def make_dense_params(cfg, rng, dtype=np.float64, zero_expand=False):
    params = []
    for layer in range(1, cfg.depth + 1):
        cin = cfg.layer_input_channels(layer)
        squeeze = ConvParams(
            Tensor(rng.normal(0, np.sqrt(2 / cin), size=(cfg.bottleneck_width, cin, 1, 1)).astype(dtype),
                   requires_grad=True),
            Tensor.zeros((1, cfg.bottleneck_width, 1, 1), dtype=dtype, requires_grad=True),
        )
        wexp = np.zeros((cfg.growth, cfg.bottleneck_width, 3, 3), dtype=dtype) if zero_expand else \
            rng.normal(0, np.sqrt(2 / (9 * cfg.bottleneck_width)),
                       size=(cfg.growth, cfg.bottleneck_width, 3, 3)).astype(dtype)
        expand = ConvParams(
            Tensor(wexp, requires_grad=True),
            Tensor.zeros((1, cfg.growth, 1, 1), dtype=dtype, requires_grad=True),
            pad=1,
        )
        params.append((squeeze, expand))
    return params


class TestDenseBlock:
    def test_channel_count_law(self):
        cfg = DenseBlockConfig(depth=1, growth=4, bottleneck_width=8, input_width=8)
        rng = np.random.default_rng(24)
        x = Tensor(rng.uniform(size=(1, 8, 6, 6)))
        out = dense_block(x, cfg, make_dense_params(cfg, rng))
        assert out.shape == (1, 12, 6, 6)
        assert cfg.output_channels == 12

    def test_receptive_fields_grow_by_two(self):
        cfg = DenseBlockConfig(depth=4, growth=4, bottleneck_width=8, input_width=4)
        assert [cfg.receptive_field(layer) for layer in range(1, 5)] == [3, 5, 7, 9]

    def test_deepest_path_sees_9x9(self):
        cfg = DenseBlockConfig(depth=4, growth=4, bottleneck_width=8, input_width=4)
        rng = np.random.default_rng(25)
        x = Tensor(rng.uniform(size=(1, 4, 17, 17)), requires_grad=True)
        out = dense_block(x, cfg, make_dense_params(cfg, rng))
        # Gradient of the deepest layer's center pixel w.r.t. the input
        seed = np.zeros(out.shape)
        seed[:, -cfg.growth:, 8, 8] = 1.0
        out.backward(seed)
        support = np.abs(x.grad).sum(axis=(0, 1)) > 0
        rows, cols = np.nonzero(support)
        assert rows.min() == 4 and rows.max() == 12
        assert cols.min() == 4 and cols.max() == 12

    def test_zero_expand_convs_append_zeros(self):
        cfg = DenseBlockConfig(depth=2, growth=3, bottleneck_width=4, input_width=4)
        rng = np.random.default_rng(26)
        x = Tensor(rng.uniform(size=(1, 4, 5, 5)))
        out = dense_block(x, cfg, make_dense_params(cfg, rng, zero_expand=True))
        np.testing.assert_array_equal(out.data[:, :4], x.data)
        np.testing.assert_array_equal(out.data[:, 4:], 0.0)

    def test_wrong_input_width_rejected(self):
        cfg = DenseBlockConfig(depth=1, growth=4, bottleneck_width=8, input_width=8)
        rng = np.random.default_rng(27)
        with pytest.raises(ShapeError, match="channels"):
            dense_block(Tensor(np.zeros((1, 5, 4, 4))), cfg, make_dense_params(cfg, rng))
