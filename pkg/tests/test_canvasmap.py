import numpy as np
import pytest

from weavecount.canvasmap import (
    DensityMap,
    grid_shape,
    map_from_csv,
    map_to_csv,
    pair_compare,
    palette_lut,
    render,
    side_by_side,
    sweep,
)
from weavecount.dataset import WeaveParams, synth_fabric
from weavecount.imgproc import GrayImage
from weavecount.spatialcount import SCParams


class TestGridShape:
    def test_basic(self):
        assert grid_shape(400, 400, 100) == (3, 3)

    def test_formula_random_sizes(self, rng):
        for _ in range(50):
            w = int(rng.integers(200, 900))
            h = int(rng.integers(200, 900))
            s = int(rng.integers(10, 300))
            rows, cols = grid_shape(w, h, s)
            assert rows == (h - 200) // s + 1
            assert cols == (w - 200) // s + 1

    def test_too_small(self):
        with pytest.raises(ValueError):
            grid_shape(150, 400, 100)


class _MaskOracle:
    """Origin-aware segmenter returning the ground-truth mask crop."""

    def __init__(self, canvas: GrayImage, mask: np.ndarray):
        self.mask = mask

    def __call__(self, patch: GrayImage, origin: tuple[int, int]) -> np.ndarray:
        x, y = origin
        return self.mask[y : y + patch.height, x : x + patch.width].astype(np.float64)


@pytest.fixture(scope="module")
def uniform_canvas():
    sample = synth_fabric(
        WeaveParams(h_density=12.0, v_density=9.0, spacing_jitter=0.04, noise_sigma=0.02, seed=11),
        size=400,
    )
    return sample


class TestSweep:
    def test_uniform_canvas_dlsc_oracle(self, uniform_canvas):
        oracle = _MaskOracle(uniform_canvas.image, uniform_canvas.mask)
        result = sweep(
            uniform_canvas.image,
            "dlsc",
            segmenter=oracle,
            sc=SCParams(ppc=200.0),
            shift=100,
        )
        assert result.h.values.shape == (3, 3)
        assert np.all(np.abs(result.h.values - 12.0) / 12.0 < 0.02)
        assert np.all(np.abs(result.v.values - 9.0) / 9.0 < 0.02)
        assert result.h_angle is not None and result.v_angle is not None
        assert np.all(np.abs(result.h_angle.values) < 1.0)

    def test_ft_sweep_no_angles(self, uniform_canvas):
        result = sweep(uniform_canvas.image, "ft", shift=100)
        assert result.h_angle is None and result.v_angle is None
        # the transform labels axes by thread orientation: spacing along x
        # (12 thr/cm) appears as the vertical estimate
        assert np.nanmedian(result.v.values) == pytest.approx(12.0, abs=0.3)
        assert np.nanmedian(result.h.values) == pytest.approx(9.0, abs=0.3)

    def test_threads_match_serial(self, uniform_canvas):
        oracle = _MaskOracle(uniform_canvas.image, uniform_canvas.mask)
        serial = sweep(uniform_canvas.image, "dlsc", segmenter=oracle, shift=100, threads=1)
        parallel = sweep(uniform_canvas.image, "dlsc", segmenter=oracle, shift=100, threads=4)
        assert np.array_equal(
            np.nan_to_num(serial.h.values, nan=-1), np.nan_to_num(parallel.h.values, nan=-1)
        )

    def test_shift_refinement_agrees_on_shared_cells(self, uniform_canvas):
        oracle = _MaskOracle(uniform_canvas.image, uniform_canvas.mask)
        coarse = sweep(uniform_canvas.image, "dlsc", segmenter=oracle, shift=100)
        fine = sweep(uniform_canvas.image, "dlsc", segmenter=oracle, shift=50)
        assert np.allclose(coarse.h.values, fine.h.values[::2, ::2], equal_nan=True)

    def test_segmenter_required(self, uniform_canvas):
        with pytest.raises(ValueError):
            sweep(uniform_canvas.image, "dlsc")

    def test_canvas_too_small(self):
        img = GrayImage(np.zeros((150, 150)), 200.0)
        with pytest.raises(ValueError):
            sweep(img, "ft", shift=100)

    def test_failed_patch_is_missing_not_zero(self):
        # constant canvas: every patch raises -> all cells missing
        img = GrayImage(np.full((300, 300), 0.5), 200.0)
        result = sweep(img, "ft", shift=100)
        assert np.all(np.isnan(result.h.values))


class TestRender:
    def test_constant_map_single_color(self):
        dmap = DensityMap(np.full((4, 5), 10.0), 100)
        rgb = render(dmap, "viridis", (5.0, 25.0), cell_px=2)
        body = rgb[:, : 5 * 2, :]
        assert body.shape == (8, 10, 3)
        assert len(np.unique(body.reshape(-1, 3), axis=0)) == 1

    def test_two_level_map_two_colors(self):
        values = np.array([[10.0, 20.0]])
        rgb = render(DensityMap(values, 100), "viridis", (10.0, 20.0), cell_px=1, colorbar=False)
        assert not np.array_equal(rgb[0, 0], rgb[0, 1])

    def test_value_at_hi_gets_top_entry(self):
        lut = palette_lut("viridis")
        rgb = render(DensityMap(np.array([[25.0]]), 100), "viridis", (5.0, 25.0), cell_px=1, colorbar=False)
        assert np.array_equal(rgb[0, 0], lut[255])

    def test_missing_sentinel(self):
        values = np.array([[np.nan, 10.0]])
        rgb = render(DensityMap(values, 100), "viridis", (5.0, 25.0), cell_px=1, colorbar=False)
        assert tuple(rgb[0, 0]) == (110, 110, 110)

    def test_deterministic(self):
        dmap = DensityMap(np.random.default_rng(0).uniform(5, 25, (6, 7)), 100)
        a = render(dmap, "jet", (5.0, 25.0))
        b = render(dmap, "jet", (5.0, 25.0))
        assert np.array_equal(a, b)

    def test_bad_range(self):
        with pytest.raises(ValueError):
            render(DensityMap(np.ones((2, 2)), 100), "viridis", (10.0, 10.0))


class TestPairCompare:
    def test_identity_copy(self, rng):
        values = rng.uniform(8, 16, (12, 10))
        a = DensityMap(values, 100)
        b = DensityMap(values.copy(), 100)
        report = pair_compare(a, b, transform="none", axis="rows")
        assert report.lag == 0
        assert report.correlation == pytest.approx(1.0, abs=1e-12)

    def test_planted_row_shift(self, rng):
        base = np.cumsum(rng.normal(size=(20, 8)), axis=0)  # smooth row profile
        shifted = np.roll(base, 3, axis=0)
        report = pair_compare(DensityMap(base, 100), DensityMap(shifted, 100), "none", "rows")
        assert report.lag == 3
        assert report.correlation >= 0.99

    def test_flip_h_pairing(self, rng):
        values = rng.uniform(8, 16, (10, 12))
        mirrored = values[:, ::-1].copy()
        report = pair_compare(DensityMap(values, 100), DensityMap(mirrored, 100), "flip_h", "rows")
        assert report.lag == 0
        assert report.correlation == pytest.approx(1.0, abs=1e-12)

    def test_rot180_pairing(self, rng):
        values = rng.uniform(8, 16, (10, 12))
        rotated = values[::-1, ::-1].copy()
        report = pair_compare(DensityMap(values, 100), DensityMap(rotated, 100), "rot180", "cols")
        assert report.lag == 0
        assert report.correlation == pytest.approx(1.0, abs=1e-12)

    def test_independent_maps_low_correlation(self):
        peaks = []
        for trial in range(100):
            rng = np.random.default_rng(trial)
            a = DensityMap(rng.uniform(8, 16, (30, 6)), 100)
            b = DensityMap(rng.uniform(8, 16, (30, 6)), 100)
            peaks.append(abs(pair_compare(a, b, "none", "rows").correlation))
        assert np.median(peaks) < 0.6

    def test_pitch_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pair_compare(DensityMap(np.ones((4, 4)), 100), DensityMap(np.ones((4, 4)), 50))

    def test_no_overlap(self):
        a = DensityMap(np.full((4, 4), np.nan), 100)
        b = DensityMap(np.ones((4, 4)), 100)
        with pytest.raises(ValueError, match="overlap"):
            pair_compare(a, b)

    def test_side_by_side_layout(self, rng):
        a = DensityMap(rng.uniform(8, 16, (6, 5)), 100)
        b = DensityMap(rng.uniform(8, 16, (6, 5)), 100)
        img = side_by_side(a, b, transform="none", cell_px=4)
        # left map + dash + right map + gap + colorbar
        assert img.shape[0] == 24
        assert img.shape[1] == 20 + 3 + 20 + 3 + 16


class TestMapCSV:
    def test_roundtrip_with_missing(self, tmp_path):
        values = np.array([[1.0, np.nan], [3.5, 4.25]])
        dmap = DensityMap(values, 100)
        path = tmp_path / "m.csv"
        map_to_csv(dmap, path)
        back = map_from_csv(path, shift_px=100)
        assert np.allclose(back.values, values, equal_nan=True)
