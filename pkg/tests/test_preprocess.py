import numpy as np
import pytest

from weavecount.dataset import WeaveParams, synth_fabric
from weavecount.errors import NoDynamicRangeError
from weavecount.imgproc import GrayImage
from weavecount.preprocess import (
    PreprocessParams,
    clip_scale,
    local_mean_filter,
    local_std_normalize,
    preprocess,
)


def brute_mean_filter(arr: np.ndarray, w: int) -> np.ndarray:
    """O(n w^2) definition with edge-replicated windows."""
    s = w // 2
    h, width = arr.shape
    out = np.empty_like(arr)
    for i in range(h):
        for j in range(width):
            total = 0.0
            for di in range(-s, s + 1):
                for dj in range(-s, s + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), width - 1)
                    total += arr[ii, jj]
            out[i, j] = arr[i, j] - total / (w * w)
    return out


def brute_std_normalize(arr: np.ndarray, w: int, eps: float) -> np.ndarray:
    s = w // 2
    h, width = arr.shape
    out = np.empty_like(arr)
    for i in range(h):
        for j in range(width):
            total = 0.0
            for di in range(-s, s + 1):
                for dj in range(-s, s + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), width - 1)
                    total += arr[ii, jj] ** 2
            sigma = np.sqrt(total / (w * w))
            out[i, j] = arr[i, j] / max(sigma, eps)
    return out


class TestLocalMeanFilter:
    def test_constant_maps_to_zero(self):
        img = GrayImage(np.full((16, 16), 0.7), 200.0)
        assert np.max(np.abs(local_mean_filter(img, 5).pixels)) < 1e-12

    def test_impulse(self):
        arr = np.zeros((9, 9))
        arr[4, 4] = 1.0
        out = local_mean_filter(GrayImage(arr, 200.0), 3).pixels
        assert out[4, 4] == pytest.approx(8.0 / 9.0, abs=1e-12)

    def test_matches_bruteforce(self, rng):
        arr = rng.random((32, 32))
        out = local_mean_filter(GrayImage(arr, 200.0), 13).pixels
        assert np.max(np.abs(out - brute_mean_filter(arr, 13))) < 1e-9

    def test_even_window_rejected(self, random_image):
        with pytest.raises(ValueError):
            local_mean_filter(random_image, 4)

    def test_oversized_window_rejected(self, random_image):
        with pytest.raises(ValueError):
            local_mean_filter(random_image, 33)


class TestLocalStdNormalize:
    def test_zero_input(self):
        img = GrayImage(np.zeros((16, 16)), 200.0)
        assert np.all(local_std_normalize(img, 5).pixels == 0.0)

    def test_checkerboard_interior_is_sign_pattern(self):
        c = 0.4
        yy, xx = np.mgrid[0:20, 0:20]
        board = c * np.where((xx + yy) % 2 == 0, 1.0, -1.0)
        out = local_std_normalize(GrayImage(board, 200.0), 3).pixels
        interior = out[1:-1, 1:-1]
        # sigma equals c everywhere a window holds a balanced 5/4 split of
        # +/-c: variance = c^2 exactly because values are +/-c.
        assert np.max(np.abs(interior - np.sign(board[1:-1, 1:-1]))) < 1e-12

    def test_matches_bruteforce(self, rng):
        arr = rng.normal(size=(32, 32))
        out = local_std_normalize(GrayImage(arr, 200.0), 13, 1e-6).pixels
        assert np.max(np.abs(out - brute_std_normalize(arr, 13, 1e-6))) < 1e-9


class TestClipScale:
    def test_plain_rescale_when_nothing_rare(self, rng):
        values = rng.uniform(0.2, 0.8, size=(16, 16))
        out = clip_scale(GrayImage(values, 200.0), gamma=1e-3, bins=4).pixels
        expected = (values - values.min()) / (values.max() - values.min())
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_outlier_clipped(self):
        values = np.full(1001, 0.5)
        values[-1] = 100.0
        img = GrayImage(values.reshape(11, 91), 200.0)
        out = clip_scale(img, gamma=1e-3, bins=256).pixels.ravel()
        assert out.min() == 0.0 and out.max() == 1.0
        # bulk pixels collapse to the lower bound, outlier to the upper
        assert np.sum(out == 0.0) == 1000
        assert np.sum(out == 1.0) == 1

    def test_constant_rejected(self):
        with pytest.raises(NoDynamicRangeError):
            clip_scale(GrayImage(np.full((8, 8), 0.3), 200.0))


class TestPreprocess:
    def test_output_in_unit_interval(self, rng):
        img = GrayImage(rng.random((64, 64)), 200.0)
        out = preprocess(img).pixels
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_constant_image_errors(self):
        with pytest.raises(NoDynamicRangeError):
            preprocess(GrayImage(np.full((32, 32), 0.5), 200.0))

    def test_affine_invariance(self):
        sample = synth_fabric(WeaveParams(h_density=10, v_density=12, seed=5), size=128)
        base = preprocess(sample.image).pixels
        for scale in (0.5, 2.0):
            scaled = GrayImage(np.clip(sample.image.pixels * scale + 0.05, 0, None), 200.0)
            out = preprocess(scaled).pixels
            assert np.max(np.abs(out - base)) < 1e-6

    def test_gradient_removal(self):
        flat = synth_fabric(WeaveParams(h_density=10, v_density=12, seed=9), size=256)
        ramped = synth_fabric(
            WeaveParams(h_density=10, v_density=12, seed=9, illumination_gradient=0.3), size=256
        )
        ref = preprocess(flat.image).pixels.ravel()
        out = preprocess(ramped.image).pixels.ravel()
        corr = np.corrcoef(ref, out)[0, 1]
        assert corr > 0.95

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PreprocessParams(w=4)
        with pytest.raises(ValueError):
            PreprocessParams(gamma=0.7)
        with pytest.raises(ValueError):
            PreprocessParams(bins=1)

    def test_windowed_mean_of_filtered_is_zero_interior(self, rng):
        # Exact-arithmetic property: re-filtering the mean-removed image
        # with the same window annihilates the interior only approximately,
        # but the direct windowed mean of Y is zero where windows do not
        # touch the replicated border.
        arr = rng.random((32, 32))
        w = 5
        filtered = local_mean_filter(GrayImage(arr, 200.0), w).pixels
        s = w // 2
        for i in range(2 * s, 32 - 2 * s):
            for j in range(2 * s, 32 - 2 * s):
                window_mean = arr[i - s : i + s + 1, j - s : j + s + 1].mean()
                assert filtered[i, j] == pytest.approx(arr[i, j] - window_mean, abs=1e-9)
