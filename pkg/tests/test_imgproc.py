import numpy as np
import pytest

from weavecount.dataset import WeaveParams, synth_fabric
from weavecount.errors import ImageFormatError, MissingMetadataError
from weavecount.imgproc import (
    ORIENTATIONS,
    GrayImage,
    crop,
    load_image,
    orient,
    orient_array,
    resample,
    rotate,
    rotate_points,
    save_image,
)


class TestGrayImage:
    def test_invariants(self):
        img = GrayImage(np.zeros((4, 6)), 200.0)
        assert img.width == 6 and img.height == 4

    def test_rejects_bad_ppc(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((4, 4)), 0.0)

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((4, 4, 3)), 200.0)


class TestIO:
    def test_pgm_8bit_constant_white(self, tmp_path):
        path = tmp_path / "white.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes([255] * 16))
        img = load_image(path, ppc=200.0)
        assert np.all(img.pixels == 1.0)
        assert img.ppc == 200.0

    def test_png_16bit_scaling(self, tmp_path):
        arr = np.full((4, 4), 32768 / 65535.0)
        save_image(GrayImage(arr, 150.0), tmp_path / "img.png", bits=16)
        back = load_image(tmp_path / "img.png", ppc=150.0)
        assert back.pixels[0, 0] == pytest.approx(32768 / 65535.0, abs=1e-9)

    def test_rgb_png_rejected(self, tmp_path):
        from PIL import Image

        Image.new("RGB", (4, 4)).save(tmp_path / "rgb.png")
        with pytest.raises(ImageFormatError, match="multi-channel"):
            load_image(tmp_path / "rgb.png", ppc=200.0)

    def test_sidecar_meta_roundtrip(self, tmp_path, random_image):
        path = tmp_path / "img.pgm"
        save_image(random_image, path, bits=16)
        back = load_image(path)  # ppc from img.pgm.meta
        assert back.ppc == random_image.ppc
        assert np.max(np.abs(back.pixels - random_image.pixels)) < 1.0 / 65535

    def test_missing_ppc_errors(self, tmp_path, random_image):
        path = tmp_path / "img.pgm"
        save_image(random_image, path, bits=8, write_meta=False)
        with pytest.raises(MissingMetadataError):
            load_image(path)

    def test_pgm_16bit_roundtrip(self, tmp_path, random_image):
        path = tmp_path / "img.pgm"
        save_image(random_image, path, bits=16)
        back = load_image(path, ppc=200.0)
        assert np.max(np.abs(back.pixels - random_image.pixels)) < 1.0 / 65535


class TestCrop:
    def test_inner_window(self):
        img = GrayImage(np.arange(300 * 300, dtype=float).reshape(300, 300), 200.0)
        out = crop(img, 50, 50, 200, 200)
        assert out.pixels.shape == (200, 200)
        assert np.array_equal(out.pixels, img.pixels[50:250, 50:250])

    def test_identity(self, random_image):
        out = crop(random_image, 0, 0, random_image.width, random_image.height)
        assert np.array_equal(out.pixels, random_image.pixels)

    def test_out_of_bounds(self):
        img = GrayImage(np.zeros((300, 300)), 200.0)
        with pytest.raises(ValueError, match="out of bounds"):
            crop(img, 200, 200, 200, 200)


class TestResample:
    def test_doubling(self):
        img = GrayImage(np.random.default_rng(0).random((100, 100)), 100.0)
        out = resample(img, 200.0)
        assert (out.width, out.height, out.ppc) == (200, 200, 200.0)

    def test_identity(self, random_image):
        out = resample(random_image, random_image.ppc)
        assert np.array_equal(out.pixels, random_image.pixels)

    def test_rounded_dimensions(self):
        # round(301 * 200 / 150) = round(401.333) = 401
        img = GrayImage(np.zeros((301, 301)), 150.0)
        out = resample(img, 200.0)
        assert out.width == round(301 * 200 / 150) == 401
        assert out.height == 401

    def test_roundtrip_dimensions(self):
        img = GrayImage(np.zeros((150, 90)), 100.0)
        out = resample(resample(img, 200.0), 100.0)
        assert (out.width, out.height) == (90, 150)

    def test_zero_size_rejected(self):
        img = GrayImage(np.zeros((10, 10)), 200.0)
        with pytest.raises(ValueError):
            resample(img, 1.0)


class TestRotate:
    def test_zero_angle_identity(self, random_image):
        out = rotate(random_image, 0.0)
        assert np.array_equal(out.pixels, random_image.pixels)

    def test_range_check(self, random_image):
        with pytest.raises(ValueError):
            rotate(random_image, 50.0)

    def test_roundtrip_on_fabric(self):
        sample = synth_fabric(WeaveParams(h_density=10, v_density=12, seed=0), size=300)
        img = sample.image
        back = rotate(rotate(img, 10.0), -10.0)
        inner = (slice(40, 260), slice(40, 260))
        deviation = np.abs(back.pixels[inner] - img.pixels[inner]).mean()
        assert deviation < 0.05

    def test_centered_disk_symmetry(self):
        n = 101
        yy, xx = np.mgrid[0:n, 0:n]
        r = np.hypot(xx - 50, yy - 50)
        disk = (r < 30).astype(float)
        img = GrayImage(disk, 200.0)
        out = rotate(img, 30.0)
        away_from_edge = np.abs(r - 30) > 2.0
        assert np.max(np.abs(out.pixels - disk)[away_from_edge]) < 1e-6

    def test_matches_point_rotation(self):
        # A bright dot at a known point must land where the point rotates to.
        arr = np.zeros((101, 101))
        arr[30, 70] = 1.0
        out = rotate(GrayImage(arr, 200.0), 20.0).pixels
        (px, py) = rotate_points(np.array([[70.0, 30.0]]), 20.0, (50.0, 50.0))[0]
        peak = np.unravel_index(np.argmax(out), out.shape)
        assert abs(peak[1] - px) <= 1.0 and abs(peak[0] - py) <= 1.0


def _orient_oracle(arr: np.ndarray, transform: str) -> np.ndarray:
    """Brute-force index mapping for the six exact orientations."""
    h, w = arr.shape
    if transform == "identity":
        return arr.copy()
    if transform == "flip_lr":
        return np.array([[arr[i, w - 1 - j] for j in range(w)] for i in range(h)])
    if transform == "flip_ud":
        return np.array([[arr[h - 1 - i, j] for j in range(w)] for i in range(h)])
    rot = np.array([[arr[h - 1 - j, i] for j in range(h)] for i in range(w)])
    if transform == "rot90":
        return rot
    if transform == "rot90+flip_lr":
        return _orient_oracle(rot, "flip_lr")
    if transform == "rot90+flip_ud":
        return _orient_oracle(rot, "flip_ud")
    raise ValueError(transform)


class TestOrient:
    def test_identity(self, random_image):
        assert np.array_equal(orient(random_image, "identity").pixels, random_image.pixels)

    def test_flip_involution(self, random_image):
        out = orient(orient(random_image, "flip_lr"), "flip_lr")
        assert np.array_equal(out.pixels, random_image.pixels)

    def test_rot90_convention(self):
        arr = np.array([[1.0, 2.0], [3.0, 4.0]])  # [[a,b],[c,d]]
        out = orient_array(arr, "rot90")
        assert np.array_equal(out, np.array([[3.0, 1.0], [4.0, 2.0]]))  # [[c,a],[d,b]]

    @pytest.mark.parametrize("transform", ORIENTATIONS)
    def test_matches_bruteforce_indexing(self, rng, transform):
        arr = rng.random((5, 5))
        assert np.array_equal(orient_array(arr, transform), _orient_oracle(arr, transform))

    @pytest.mark.parametrize("transform", ORIENTATIONS)
    def test_exact_permutation_and_invertible(self, rng, transform):
        # Every orientation permutes pixels exactly (no interpolation) and
        # has an inverse in the dihedral group.
        arr = rng.random((7, 7))
        once = orient_array(arr, transform)
        assert np.array_equal(np.sort(once.ravel()), np.sort(arr.ravel()))
        inverse = {
            "identity": ["identity"],
            "flip_lr": ["flip_lr"],
            "flip_ud": ["flip_ud"],
            "rot90": ["rot90", "rot90", "rot90"],
            "rot90+flip_lr": ["rot90+flip_lr"],
            "rot90+flip_ud": ["rot90+flip_ud"],
        }[transform]
        back = once
        for step in inverse:
            back = orient_array(back, step)
        assert np.array_equal(back, arr)

    @pytest.mark.parametrize("transform", ORIENTATIONS)
    def test_commutes_with_crop(self, rng, transform):
        # crop(orient(img)) equals orient(crop(img)) for the mapped window.
        n = 10
        arr = rng.random((n, n))
        img = GrayImage(arr, 200.0)
        x0, y0, w, h = 2, 3, 4, 5

        def map_rect(x0, y0, w, h):
            corners = [(x0, y0), (x0 + w - 1, y0), (x0, y0 + h - 1), (x0 + w - 1, y0 + h - 1)]
            mapped = []
            for (x, y) in corners:
                if transform == "identity":
                    mapped.append((x, y))
                elif transform == "flip_lr":
                    mapped.append((n - 1 - x, y))
                elif transform == "flip_ud":
                    mapped.append((x, n - 1 - y))
                elif transform == "rot90":
                    mapped.append((n - 1 - y, x))
                elif transform == "rot90+flip_lr":
                    mapped.append((n - 1 - (n - 1 - y), x))
                elif transform == "rot90+flip_ud":
                    mapped.append((n - 1 - y, n - 1 - x))
            xs = [p[0] for p in mapped]
            ys = [p[1] for p in mapped]
            return min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1

        lhs = crop(orient(img, transform), *map_rect(x0, y0, w, h)).pixels
        rhs = orient_array(crop(img, x0, y0, w, h).pixels, transform)
        assert np.array_equal(lhs, rhs)
