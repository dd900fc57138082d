import numpy as np
import pytest

from slimnet import kernels as K
from slimnet.errors import ShapeError, SliceError

from oracles import naive_conv2d, naive_matmul, relative_error


class TestSliceChannels:
    def test_prefix_rows(self):
        t = np.arange(8, dtype=np.float32).reshape(4, 2)
        v = K.slice_channels(t, 2)
        assert np.array_equal(v, t[:2])

    def test_identity_slice(self):
        t = np.arange(12, dtype=np.float32).reshape(3, 4)
        v = K.slice_channels(t, 3)
        assert np.array_equal(v, t)

    def test_zero_copy_view(self):
        t = np.random.default_rng(1).random((6, 3), dtype=np.float32)
        v = K.slice_channels(t, 4)
        assert v.base is t
        assert v.__array_interface__["data"][0] == t.__array_interface__["data"][0]
        assert np.shares_memory(v, t)

    @pytest.mark.parametrize("k", [0, -1, 5])
    def test_invalid_extent(self, k):
        t = np.zeros((4, 2), dtype=np.float32)
        with pytest.raises(SliceError):
            K.slice_channels(t, k)

    def test_sliced_weight_conv_equals_truncated_full_conv(self, rng):
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        w = rng.standard_normal((6, 3, 3, 3)).astype(np.float32)
        for k in (1, 3, 6):
            full = K.conv2d(x, w, pad=1)
            sliced = K.conv2d(x, K.slice_channels(w, k), pad=1)
            assert relative_error(sliced, full[:, :k]) < 1e-5


class TestConv2d:
    def test_one_by_one(self):
        x = np.array([[[[2.0]]]], dtype=np.float32)
        w = np.array([[[[3.0]]]], dtype=np.float32)
        out = K.conv2d(x, w)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == pytest.approx(6.0)

    def test_impulse_kernel_sums_input_channels(self, rng):
        x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        w = np.zeros((3, 2, 3, 3), dtype=np.float32)
        w[:, :, 1, 1] = 1.0
        out = K.conv2d(x, w, pad=1)
        want = x.sum(axis=1, keepdims=True)
        for f in range(3):
            assert relative_error(out[:, f:f + 1], want) < 1e-5

    def test_matches_nested_loop_oracle(self, rng):
        x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        got = K.conv2d(x, w, b, stride=1, pad=0)
        want = naive_conv2d(x, w, b, stride=1, pad=0)
        assert relative_error(got, want) < 1e-5

    def test_exhaustive_small_shapes(self, rng):
        # Bounded sweep with every extent <= 6.
        for n in (1, 2):
            for c in (1, 3):
                for o in (1, 2):
                    for hw in (1, 3, 6):
                        for k in (1, 2, 3):
                            if k > hw:
                                continue
                            for stride in (1, 2):
                                for pad in (0, 1):
                                    if hw + 2 * pad < k:
                                        continue
                                    x = rng.standard_normal((n, c, hw, hw)).astype(np.float32)
                                    w = rng.standard_normal((o, c, k, k)).astype(np.float32)
                                    got = K.conv2d(x, w, stride=stride, pad=pad)
                                    want = naive_conv2d(x, w, stride=stride, pad=pad)
                                    assert relative_error(got, want) < 1e-5, \
                                        (n, c, o, hw, k, stride, pad)

    def test_output_spatial_size(self):
        x = np.zeros((1, 1, 7, 5), dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        out = K.conv2d(x, w, stride=2, pad=1)
        assert out.shape == (1, 1, 4, 3)

    def test_channel_mismatch(self):
        x = np.zeros((1, 2, 4, 4), dtype=np.float32)
        w = np.zeros((1, 3, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            K.conv2d(x, w)

    def test_no_output_position(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            K.conv2d(x, w)


class TestConv2dMasked:
    def test_full_active_equals_conv(self, rng):
        x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        assert np.array_equal(K.conv2d_masked(x, w, 4, pad=1), K.conv2d(x, w, pad=1))

    def test_restricted_equals_sliced_rest_zero(self, rng):
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        w = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
        k = 2
        out = K.conv2d_masked(x, w, k, pad=1)
        sliced = K.conv2d(x, K.slice_channels(w, k), pad=1)
        assert relative_error(out[:, :k], sliced) < 1e-5
        assert np.all(out[:, k:] == 0.0)

    def test_zero_active_all_zero(self, rng):
        x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        assert np.all(K.conv2d_masked(x, w, 0, pad=1) == 0.0)


class TestConv2dIndexed:
    def test_prefix_gather_equals_slice(self, rng):
        x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        w = rng.standard_normal((6, 3, 3, 3)).astype(np.float32)
        k = 3
        got = K.conv2d_indexed(x, w, list(range(k)), pad=1)
        want = K.conv2d(x, K.slice_channels(w, k), pad=1)
        assert relative_error(got, want) < 1e-6

    def test_all_channels_equals_conv(self, rng):
        x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        got = K.conv2d_indexed(x, w, list(range(4)), pad=1)
        assert relative_error(got, K.conv2d(x, w, pad=1)) < 1e-6

    def test_arbitrary_rows_match_full_output(self, rng):
        x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        got = K.conv2d_indexed(x, w, [1, 3], pad=1)
        want = K.conv2d(x, w, pad=1)[:, [1, 3]]
        assert relative_error(got, want) < 1e-6

    def test_duplicate_or_out_of_range(self):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        w = np.zeros((3, 1, 3, 3), dtype=np.float32)
        with pytest.raises(IndexError):
            K.conv2d_indexed(x, w, [0, 0], pad=1)
        with pytest.raises(IndexError):
            K.conv2d_indexed(x, w, [0, 3], pad=1)

    def test_gather_is_fresh_buffer(self, rng):
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        gathered = np.take(w, [0, 1], axis=0)
        assert not np.shares_memory(gathered, w)


class TestStrategyEquivalence:
    def test_first_k_channels_agree(self, rng):
        x = rng.standard_normal((2, 4, 6, 6)).astype(np.float32)
        w = rng.standard_normal((8, 4, 3, 3)).astype(np.float32)
        for k in range(1, 9):
            sliced = K.conv2d(x, K.slice_channels(w, k), pad=1)
            masked = K.conv2d_masked(x, w, k, pad=1)[:, :k]
            indexed = K.conv2d_indexed(x, w, list(range(k)), pad=1)
            assert relative_error(masked, sliced) < 1e-5
            assert relative_error(indexed, sliced) < 1e-5


class TestElementwiseSuite:
    def test_softmax_uniform_on_equal_scores(self):
        out = K.softmax(np.zeros((1, 3), dtype=np.float32))
        assert np.allclose(out, 1.0 / 3.0)

    def test_softmax_rows_sum_to_one(self, rng):
        x = rng.standard_normal((5, 7)).astype(np.float32) * 10
        out = K.softmax(x)
        assert np.all(np.abs(out.sum(axis=-1) - 1.0) < 1e-6)

    def test_global_avg_pool_constant_channel(self):
        x = np.full((2, 3, 4, 5), 5.0, dtype=np.float32)
        out = K.global_avg_pool(x)
        assert out.shape == (2, 3)
        assert np.allclose(out, 5.0)

    def test_global_avg_pool_mean(self):
        x = np.array([[[[1.0, 3.0], [5.0, 7.0]]]], dtype=np.float32)
        assert K.global_avg_pool(x)[0, 0] == pytest.approx(4.0)

    def test_matmul_matches_triple_loop(self, rng):
        a = rng.standard_normal((2, 3)).astype(np.float32)
        b = rng.standard_normal((3, 2)).astype(np.float32)
        assert relative_error(K.matmul(a, b), naive_matmul(a, b)) < 1e-6

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            K.matmul(np.zeros((2, 3), dtype=np.float32), np.zeros((2, 3), dtype=np.float32))

    def test_relu_tanh_ranges(self, rng):
        x = rng.standard_normal(100).astype(np.float32)
        assert np.all(K.relu(x) >= 0)
        assert np.all(np.abs(K.tanh(x)) < 1.0)

    def test_cross_entropy_of_exact_match_is_entropy(self):
        p = np.array([[0.5, 0.5]], dtype=np.float32)
        assert K.cross_entropy(p, p) == pytest.approx(np.log(2.0), rel=1e-6)

    def test_add_shape_error(self):
        with pytest.raises(ShapeError):
            K.add(np.zeros(3, dtype=np.float32), np.zeros(4, dtype=np.float32))
