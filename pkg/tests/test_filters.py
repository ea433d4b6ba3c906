import numpy as np
import pytest

from hsia import reference
from hsia.errors import ConfigError
from hsia.filters import box_filter_mean, clip_to_range, downsample, upsample


class TestBoxFilter:
    def test_window_one_is_identity(self, rng):
        field = rng.random((3, 7, 5), dtype=np.float32)
        out = box_filter_mean(field, 1)
        assert out.dtype == field.dtype
        np.testing.assert_array_equal(out, field)

    def test_impulse_spot_values(self):
        # 5x5 plane, unit impulse at the centre, window 3: the filtered value
        # at the centre is 1/9, at an edge-adjacent neighbour 1/9, and the
        # corner of the response is 1/9 too -- but at the *plane* corner the
        # window only covers 4 in-bounds cells, so a corner impulse yields 1/4.
        plane = np.zeros((1, 5, 5), dtype=np.float64)
        plane[0, 2, 2] = 9.0
        out = box_filter_mean(plane, 3)
        assert out[0, 2, 2] == pytest.approx(1.0)
        assert out[0, 1, 2] == pytest.approx(1.0)
        assert out[0, 1, 1] == pytest.approx(1.0)
        assert out[0, 0, 0] == pytest.approx(0.0)

        corner = np.zeros((1, 5, 5), dtype=np.float64)
        corner[0, 0, 0] = 9.0
        out = box_filter_mean(corner, 3)
        # corner window covers 2x2 in-bounds cells -> 9/4
        assert out[0, 0, 0] == pytest.approx(2.25)
        # edge window covers 2x3 cells -> 9/6
        assert out[0, 0, 1] == pytest.approx(1.5)
        # interior window covers 3x3 cells -> 9/9
        assert out[0, 1, 1] == pytest.approx(1.0)

    def test_constant_field_preserved_exactly(self):
        field = np.full((2, 6, 6), 0.37, dtype=np.float32)
        for window in (1, 3, 5):
            out = box_filter_mean(field, window)
            np.testing.assert_array_equal(out, field)

    def test_linearity(self, rng):
        a = rng.random((2, 8, 8))
        b = rng.random((2, 8, 8))
        lhs = box_filter_mean(2.0 * a + 3.0 * b, 3)
        rhs = 2.0 * box_filter_mean(a, 3) + 3.0 * box_filter_mean(b, 3)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_matches_oracle(self, rng):
        for _ in range(25):
            c = int(rng.integers(1, 4))
            h = int(rng.integers(3, 12))
            w = int(rng.integers(3, 12))
            window = int(rng.choice([1, 3, 5, 7]))
            field = rng.random((c, h, w), dtype=np.float32)
            got = box_filter_mean(field, window)
            want = np.stack([reference.box_filter_mean_ref(field[i], window)
                             for i in range(c)]).astype(np.float32)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-6)

    def test_rejects_even_or_nonpositive_window(self, rng):
        field = rng.random((1, 4, 4))
        with pytest.raises(ConfigError):
            box_filter_mean(field, 2)
        with pytest.raises(ConfigError):
            box_filter_mean(field, 0)
        with pytest.raises(ConfigError):
            box_filter_mean(field, -3)


class TestDownsample:
    def test_two_by_two_mean(self):
        plane = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = downsample(plane, 2)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(2.5)

    def test_factor_one_is_identity(self, rng):
        field = rng.random((2, 5, 5), dtype=np.float32)
        np.testing.assert_array_equal(downsample(field, 1), field)

    def test_ragged_edge_shape(self, rng):
        field = rng.random((1, 5, 5))
        out = downsample(field, 2)
        assert out.shape == (1, 3, 3)
        # trailing cell is the mean of the lone 1x1 remainder
        assert out[0, 2, 2] == pytest.approx(field[0, 4, 4])

    def test_matches_oracle(self, rng):
        for _ in range(25):
            h = int(rng.integers(2, 13))
            w = int(rng.integers(2, 13))
            factor = int(rng.integers(1, 6))
            field = rng.random((2, h, w), dtype=np.float32)
            got = downsample(field, factor)
            want = np.stack([reference.downsample_mean_ref(field[i], factor)
                             for i in range(2)]).astype(np.float32)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-6)

    def test_rejects_bad_factor(self, rng):
        field = rng.random((1, 4, 4))
        with pytest.raises(ConfigError):
            downsample(field, 0)
        with pytest.raises(ConfigError):
            downsample(field, -1)


class TestUpsample:
    def test_identity_when_same_shape(self, rng):
        field = rng.random((2, 4, 6), dtype=np.float32)
        np.testing.assert_array_equal(upsample(field, (4, 6)), field)

    def test_single_cell_broadcast(self):
        plane = np.array([[[2.5]]], dtype=np.float32)
        out = upsample(plane, (2, 2))
        np.testing.assert_array_equal(out, np.full((1, 2, 2), 2.5, dtype=np.float32))

    def test_matches_oracle(self, rng):
        for _ in range(25):
            h = int(rng.integers(1, 7))
            w = int(rng.integers(1, 7))
            ht = int(rng.integers(h, h + 8))
            wt = int(rng.integers(w, w + 8))
            field = rng.random((2, h, w), dtype=np.float32)
            got = upsample(field, (ht, wt))
            want = np.stack([reference.upsample_nearest_ref(field[i], (ht, wt))
                             for i in range(2)])
            np.testing.assert_array_equal(got, want)

    def test_rejects_shrinking(self, rng):
        field = rng.random((1, 4, 4))
        with pytest.raises(ConfigError):
            upsample(field, (3, 4))


class TestPyramidRoundTrip:
    def test_roundtrip_preserves_blockwise_means(self, rng):
        field = rng.random((3, 8, 8), dtype=np.float32)
        for factor in (2, 4):
            small = downsample(field, factor)
            back = upsample(small, (8, 8))
            assert back.shape == field.shape
            # round trip through the pyramid keeps each block constant at
            # the block mean, so downsampling again reproduces `small`
            np.testing.assert_allclose(downsample(back, factor), small,
                                       rtol=0, atol=1e-6)

    def test_constant_field_fixed_point(self):
        field = np.full((1, 6, 6), 0.43, dtype=np.float32)
        back = upsample(downsample(field, 3), (6, 6))
        np.testing.assert_allclose(back, field, rtol=0, atol=1e-7)


class TestClip:
    def test_values_clamped(self):
        x = np.array([-0.5, 0.0, 0.5, 1.0, 1.5], dtype=np.float32)
        out = clip_to_range(x, 0.0, 1.0)
        np.testing.assert_array_equal(out, [0.0, 0.0, 0.5, 1.0, 1.0])

    def test_rejects_inverted_range(self):
        with pytest.raises(ConfigError):
            clip_to_range(np.zeros(3), 1.0, 0.0)
