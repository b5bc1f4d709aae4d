import numpy as np
import pytest

from gaitfuse.preprocess import (
    Box,
    DepthRangeError,
    RawFramePair,
    Scope,
    align_pair,
    align_sequence,
    depth_to_disparity,
    disparity_extrema,
    normalize_disparity,
    normalize_rgb,
    resize_bilinear,
)
from gaitfuse.tensor import ShapeError, Tensor, ValidationError, full, tensor


def depth_frame(values, shape):
    return Tensor(np.asarray(values, dtype=np.float32).reshape(shape))


class TestDepthToDisparity:
    def test_two_meters_is_half(self):
        out = depth_to_disparity(full((2, 2, 1), 2.0))
        assert np.allclose(out.data, 0.5)

    def test_one_meter_is_one(self):
        out = depth_to_disparity(full((1, 1, 1), 1.0))
        assert out.data.reshape(-1).tolist() == [1.0]

    def test_reciprocal_oracle(self, rng):
        d = (rng.uniform(0.5, 5.0, size=(8, 8, 1))).astype(np.float32)
        out = depth_to_disparity(Tensor(d))
        rel = np.abs(out.data - 1.0 / d) / (1.0 / d)
        assert rel.max() <= 1e-6

    def test_dropout_rejected_with_pixel_index(self):
        d = np.full((2, 3, 1), 2.0, dtype=np.float32)
        d[1, 2, 0] = 0.05
        with pytest.raises(DepthRangeError) as exc:
            depth_to_disparity(Tensor(d))
        assert exc.value.flat_index == 5


class TestNormalizeDisparity:
    def test_endpoints_and_midpoint(self):
        out = normalize_disparity(tensor([0.2, 0.6, 1.0]))
        assert np.allclose(out.data, [0.0, 0.5, 1.0])

    def test_constant_maps_to_zeros(self):
        out = normalize_disparity(full((3, 3, 1), 0.7))
        assert np.array_equal(out.data, np.zeros((3, 3, 1), np.float32))

    def test_sequence_scope_pools_extrema(self, rng):
        a = Tensor(rng.uniform(0.3, 0.6, size=(4, 4, 1)).astype(np.float32))
        b = Tensor(rng.uniform(0.5, 0.9, size=(4, 4, 1)).astype(np.float32))
        lo, hi = disparity_extrema([a, b])
        na = normalize_disparity(a, (lo, hi)).data
        nb = normalize_disparity(b, (lo, hi)).data
        want_a = (a.data - lo) / (hi - lo)
        want_b = (b.data - lo) / (hi - lo)
        assert np.allclose(na, want_a, atol=1e-6)
        assert np.allclose(nb, want_b, atol=1e-6)

    def test_monotone_non_decreasing(self, rng):
        x = np.sort(rng.uniform(0, 1, size=16)).astype(np.float32)
        out = normalize_disparity(Tensor(x)).data
        assert (np.diff(out) >= 0).all()

    def test_extremum_mapping(self, rng):
        x = Tensor(rng.uniform(0, 1, size=(5, 5, 1)).astype(np.float32))
        out = normalize_disparity(x).data
        assert (out == 0.0).sum() == 1
        assert (out == 1.0).sum() == 1


class TestNormalizeRgb:
    def test_exact_values(self):
        out = normalize_rgb(tensor([255.0, 0.0, 128.0], shape=(1, 1, 3)))
        assert out.data.reshape(-1).tolist() == [
            1.0, 0.0, np.float32(128.0) / np.float32(255.0)]


class TestAlignPair:
    def make_pair(self, rng, h=8, w=8, region=None):
        rgb = Tensor(rng.uniform(0, 255, size=(h, w, 3)).astype(np.float32))
        depth = Tensor(rng.uniform(0.5, 4.0, size=(h, w, 1)).astype(np.float32))
        return RawFramePair(rgb=rgb, depth_m=depth, subject_region=region)

    def test_same_size_no_region_is_pure_normalization(self, rng):
        pair = self.make_pair(rng, 16, 16)
        out = align_pair(pair, size=16)
        assert np.allclose(out.rgb.data, pair.rgb.data / 255.0, atol=1e-6)
        disp = 1.0 / pair.depth_m.data
        want = (disp - disp.min()) / (disp.max() - disp.min())
        assert np.allclose(out.disparity.data, want, atol=1e-5)

    def test_full_frame_region_equals_no_region(self, rng):
        pair = self.make_pair(rng, 12, 12)
        full_region = RawFramePair(rgb=pair.rgb, depth_m=pair.depth_m,
                                   subject_region=Box(0, 0, 12, 12))
        a = align_pair(pair, size=12)
        b = align_pair(full_region, size=12)
        assert np.array_equal(a.rgb.data, b.rgb.data)
        assert np.array_equal(a.disparity.data, b.disparity.data)

    def test_left_half_crop_oracle(self, rng):
        rgb = np.empty((8, 8, 3), dtype=np.float32)
        rgb[:, :4] = 240.0
        rgb[:, 4:] = 10.0
        depth = np.full((8, 8, 1), 2.0, dtype=np.float32)
        pair = RawFramePair(rgb=Tensor(rgb), depth_m=Tensor(depth),
                            subject_region=Box(0, 0, 4, 8))
        out = align_pair(pair, size=8)
        # crop-then-mean oracle: the left half is uniformly bright
        assert abs(float(out.rgb.data.mean()) - 240.0 / 255.0) < 1e-5

    def test_range_invariant(self, rng):
        out = align_pair(self.make_pair(rng, 10, 10), size=6)
        for t in (out.rgb, out.disparity):
            assert t.data.min() >= 0.0 and t.data.max() <= 1.0

    def test_alignment_extents_shared(self, rng):
        out = align_pair(self.make_pair(rng, 9, 7), size=5)
        assert out.rgb.shape[:2] == out.disparity.shape[:2] == (5, 5)

    def test_region_out_of_bounds_rejected(self, rng):
        pair = self.make_pair(rng, 8, 8, region=Box(4, 4, 8, 8))
        with pytest.raises(ShapeError, match="exceeds"):
            align_pair(pair)

    def test_mismatched_modality_dims_rejected(self, rng):
        pair = RawFramePair(
            rgb=Tensor(rng.uniform(0, 255, size=(8, 8, 3)).astype(np.float32)),
            depth_m=Tensor(rng.uniform(0.5, 4, size=(6, 8, 1)).astype(np.float32)),
        )
        with pytest.raises(ShapeError, match="share frame dimensions"):
            align_pair(pair)

    def test_no_recentering_blob_centroid_preserved(self):
        h = w = 64
        rgb = np.full((h, w, 3), 5.0, dtype=np.float32)
        rows, cols = np.mgrid[0:h, 0:w]
        blob = 250.0 * np.exp(-(((rows - 32) ** 2) + (cols - 19.2) ** 2) / 30.0)
        rgb += blob[:, :, None]
        depth = np.full((h, w, 1), 2.0, dtype=np.float32)
        out = align_pair(RawFramePair(rgb=Tensor(np.clip(rgb, 0, 255)),
                                      depth_m=Tensor(depth)), size=32)

        def centroid_frac(img):
            weights = img[:, :, 0] - img[:, :, 0].min()
            cols_ = np.arange(img.shape[1])
            return float((weights.sum(0) * cols_).sum() / weights.sum() / img.shape[1])

        before = centroid_frac(rgb)
        after = centroid_frac(out.rgb.data)
        assert abs(before - after) * 32 <= 1.0  # within one output pixel


class TestAlignSequence:
    def test_timestamps_must_increase(self, rng):
        mk = lambda ts: RawFramePair(
            rgb=Tensor(rng.uniform(0, 255, size=(4, 4, 3)).astype(np.float32)),
            depth_m=Tensor(rng.uniform(1, 2, size=(4, 4, 1)).astype(np.float32)),
            timestamp_us=ts)
        with pytest.raises(ValidationError, match="timestamps"):
            align_sequence([mk(5), mk(5)], size=4)

    def test_sequence_scope_spans_frames(self, rng):
        near = RawFramePair(rgb=Tensor(np.zeros((4, 4, 3), np.float32)),
                            depth_m=full((4, 4, 1), 1.0), timestamp_us=0)
        far = RawFramePair(rgb=Tensor(np.zeros((4, 4, 3), np.float32)),
                           depth_m=full((4, 4, 1), 4.0), timestamp_us=1)
        out = align_sequence([near, far], size=4, scope=Scope.SEQUENCE)
        # pooled extrema: disparity 1.0 (near) and 0.25 (far)
        assert np.allclose(out[0].disparity.data, 1.0)
        assert np.allclose(out[1].disparity.data, 0.0)

    def test_frame_scope_constant_frames_are_zero(self):
        near = RawFramePair(rgb=Tensor(np.zeros((4, 4, 3), np.float32)),
                            depth_m=full((4, 4, 1), 1.0), timestamp_us=0)
        out = align_sequence([near], size=4, scope=Scope.FRAME)
        assert np.array_equal(out[0].disparity.data, np.zeros((4, 4, 1), np.float32))


class TestResize:
    def test_identity(self, rng):
        x = rng.normal(size=(5, 5, 2)).astype(np.float32)
        assert np.array_equal(resize_bilinear(x, 5, 5), x)

    def test_corner_alignment(self):
        x = np.arange(4, dtype=np.float32).reshape(2, 2, 1)
        out = resize_bilinear(x, 3, 3)
        # corners must be preserved exactly
        assert out[0, 0, 0] == 0.0 and out[0, 2, 0] == 1.0
        assert out[2, 0, 0] == 2.0 and out[2, 2, 0] == 3.0
        assert out[1, 1, 0] == pytest.approx(1.5)
