"""Labeled samples, view generation, augmentation, and a synthetic weave.

Real labeled plates are museum-internal, so a parametric plain-weave
generator stands in: two families of quasi-parallel raised-cosine thread
profiles, brighter where they cross, with optional tilt, spacing jitter,
noise, and an illumination ramp.  The label mask holds a disk of radius
2 px at every thread-crossing, and the exact crossing coordinates ride
along for oracle tests.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .imgproc import ORIENTATIONS, GrayImage, crop, load_image, orient_array, read_meta, rotate_array, save_image

SAMPLE_SIZE = 300
EXAMPLE_SIZE = 200
STANDARD_PPC = 200.0
MASK_RADIUS_PX = 2.0

SPLITS = ("train", "val", "test")

# View recipe: four corner crops, then rotated crops of two interior
# windows.  The inner window (50:250) takes the small angle ranges and the
# offset window (65:265) the large ones, plus two extra small-angle views.
_CORNERS = ((0, 0), (100, 0), (0, 100), (100, 100))
_WINDOW_A = (50, 50)
_WINDOW_B = (65, 65)
_ROTATED_VIEWS = (
    (_WINDOW_A, 2.0, 7.0),
    (_WINDOW_A, -7.0, -2.0),
    (_WINDOW_B, 8.0, 12.0),
    (_WINDOW_B, -12.0, -8.0),
    (_WINDOW_B, 2.0, 7.0),
    (_WINDOW_B, -7.0, -2.0),
)


@dataclass
class LabeledSample:
    """A labeled crop: grayscale image plus binary crossing-point mask."""

    image: GrayImage
    mask: np.ndarray
    source_id: str = ""
    split_tag: str = "train"
    crossings: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if self.mask.shape != self.image.pixels.shape:
            raise ValueError(
                f"mask shape {self.mask.shape} != image shape {self.image.pixels.shape}"
            )
        if self.mask.size and self.mask.max() > 1:
            raise ValueError("mask values must be 0 or 1")
        if self.split_tag not in SPLITS:
            raise ValueError(f"split_tag must be one of {SPLITS}, got '{self.split_tag}'")


@dataclass
class TrainingExample:
    """One 200 x 200 network input/target pair (1 x 1 cm at 200 ppc)."""

    image: GrayImage
    mask: np.ndarray

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        shape = self.image.pixels.shape
        if shape != (EXAMPLE_SIZE, EXAMPLE_SIZE):
            raise ValueError(f"training example must be {EXAMPLE_SIZE}x{EXAMPLE_SIZE}, got {shape}")
        if self.mask.shape != shape:
            raise ValueError(f"mask shape {self.mask.shape} != image shape {shape}")


@dataclass(frozen=True)
class WeaveParams:
    """Knobs of the synthetic plain-weave generator."""

    h_density: float
    v_density: float
    tilt_deg: float = 0.0
    spacing_jitter: float = 0.0
    thread_width_ratio: float = 0.6
    noise_sigma: float = 0.0
    illumination_gradient: float = 0.0
    contrast: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name, value in (("h_density", self.h_density), ("v_density", self.v_density)):
            if not 4.0 <= value <= 30.0:
                raise ValueError(f"{name} must be in [4, 30] thr/cm, got {value}")
        if not 0.0 <= self.spacing_jitter <= 0.3:
            raise ValueError(f"spacing_jitter must be in [0, 0.3], got {self.spacing_jitter}")
        if not 0.0 < self.thread_width_ratio <= 1.0:
            raise ValueError(f"thread_width_ratio must be in (0, 1], got {self.thread_width_ratio}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not abs(self.tilt_deg) <= 45:
            raise ValueError(f"|tilt_deg| must be <= 45, got {self.tilt_deg}")


def thread_centers(pitch: float, lo: float, hi: float, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """Center-line coordinates covering [lo, hi] at the given pitch.

    Each center is independently displaced by up to +/- jitter * pitch / 2;
    the mean pitch is preserved.
    """
    first = math.floor(lo / pitch) - 1
    last = math.ceil(hi / pitch) + 1
    base = np.arange(first, last + 1, dtype=np.float64) * pitch
    if jitter > 0:
        base = base + rng.uniform(-0.5, 0.5, size=base.size) * jitter * pitch
        base.sort()
    return base


def _nearest_center_offset(coord: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Signed distance from each coordinate to its nearest center line."""
    idx = np.searchsorted(centers, coord.ravel())
    idx = np.clip(idx, 1, centers.size - 1)
    left = centers[idx - 1]
    right = centers[idx]
    flat = coord.ravel()
    off_left = flat - left
    off_right = flat - right
    nearest = np.where(np.abs(off_left) <= np.abs(off_right), off_left, off_right)
    return nearest.reshape(coord.shape)


def _raised_cosine(offset: np.ndarray, half_width: float) -> np.ndarray:
    inside = np.abs(offset) < half_width
    return np.where(inside, 0.5 * (1.0 + np.cos(np.pi * offset / half_width)), 0.0)


def synth_fabric(p: WeaveParams, size: int = SAMPLE_SIZE, ppc: float = STANDARD_PPC) -> LabeledSample:
    """Render a synthetic plain-weave sample with ground-truth labels.

    h_density controls the crossing pitch measured along x (ppc/h_density
    pixels) and v_density the pitch along y.  Crossings whose label disk
    would be clipped by the border are omitted from mask and coordinates.
    """
    rng = np.random.default_rng(p.seed)
    pitch_u = ppc / p.h_density
    pitch_w = ppc / p.v_density
    center = (size - 1) / 2.0
    theta = math.radians(p.tilt_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    cols, rows = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64))
    xc = cols - center
    yc_up = center - rows
    # Rotated frame: u varies along the tilted x direction, w along y.
    u = xc * cos_t + yc_up * sin_t
    w = -xc * sin_t + yc_up * cos_t

    reach = size * 0.75 + max(pitch_u, pitch_w)
    centers_u = thread_centers(pitch_u, -reach, reach, p.spacing_jitter, rng)
    centers_w = thread_centers(pitch_w, -reach, reach, p.spacing_jitter, rng)

    profile_v = _raised_cosine(_nearest_center_offset(u, centers_u), p.thread_width_ratio * pitch_u / 2.0)
    profile_h = _raised_cosine(_nearest_center_offset(w, centers_w), p.thread_width_ratio * pitch_w / 2.0)

    # Crossings carry double the material, so the product term dominates:
    # background 0.15, single thread ~0.37, crossing ~1.0 at contrast 1.
    image = 0.15 + p.contrast * (0.22 * (profile_v + profile_h) + 0.41 * profile_v * profile_h)
    if p.illumination_gradient != 0:
        ramp = (cols + rows - (size - 1)) / (2.0 * (size - 1))
        image = image + p.illumination_gradient * ramp
    if p.noise_sigma > 0:
        image = image + rng.normal(0.0, p.noise_sigma, size=image.shape)
    image = np.clip(image, 0.0, 1.0)

    # Crossings: every (u_i, w_j) intersection mapped back to pixel coords.
    uu, ww = np.meshgrid(centers_u, centers_w)
    cx = uu * cos_t - ww * sin_t + center
    cy = center - (uu * sin_t + ww * cos_t)
    margin = MASK_RADIUS_PX + 0.5
    keep = (cx >= margin) & (cx <= size - 1 - margin) & (cy >= margin) & (cy <= size - 1 - margin)
    crossings = np.column_stack([cx[keep], cy[keep]])

    mask = np.zeros((size, size), dtype=np.uint8)
    for x, y in crossings:
        r0 = int(math.floor(y - MASK_RADIUS_PX))
        r1 = int(math.ceil(y + MASK_RADIUS_PX)) + 1
        c0 = int(math.floor(x - MASK_RADIUS_PX))
        c1 = int(math.ceil(x + MASK_RADIUS_PX)) + 1
        win_r, win_c = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
        disk = (win_c - x) ** 2 + (win_r - y) ** 2 <= MASK_RADIUS_PX**2
        mask[r0:r1, c0:c1][disk] = 1

    return LabeledSample(
        image=GrayImage(image, ppc),
        mask=mask,
        source_id=f"synth-{p.seed}",
        crossings=crossings,
    )


# ---------------------------------------------------------------------------
# View generation and augmentation


def _view(sample: LabeledSample, x0: int, y0: int) -> TrainingExample:
    img = crop(sample.image, x0, y0, EXAMPLE_SIZE, EXAMPLE_SIZE)
    msk = sample.mask[y0 : y0 + EXAMPLE_SIZE, x0 : x0 + EXAMPLE_SIZE].copy()
    return TrainingExample(img, msk)


def _rotated_view(sample: LabeledSample, window: tuple[int, int], angle: float) -> TrainingExample:
    # Rotate the full sample, then crop: for these windows and |angle|<=12
    # every source coordinate stays inside the support, so no fill shows.
    rot_img = rotate_array(sample.image.pixels, angle)
    rot_msk = rotate_array(sample.mask.astype(np.float64), angle)
    x0, y0 = window
    img = GrayImage(rot_img[y0 : y0 + EXAMPLE_SIZE, x0 : x0 + EXAMPLE_SIZE].copy(), sample.image.ppc)
    msk = (rot_msk[y0 : y0 + EXAMPLE_SIZE, x0 : x0 + EXAMPLE_SIZE] >= 0.5).astype(np.uint8)
    return TrainingExample(img, msk)


def generate_views(sample: LabeledSample, rng: np.random.Generator) -> list[TrainingExample]:
    """Ten 200 x 200 training examples from one 300 x 300 sample."""
    shape = sample.image.pixels.shape
    if shape != (SAMPLE_SIZE, SAMPLE_SIZE):
        raise ValueError(f"sample must be {SAMPLE_SIZE}x{SAMPLE_SIZE}, got {shape}")
    views = [_view(sample, x0, y0) for x0, y0 in _CORNERS]
    for window, lo, hi in _ROTATED_VIEWS:
        angle = float(rng.uniform(lo, hi))
        views.append(_rotated_view(sample, window, angle))
    return views


def orient_sample(sample: LabeledSample, transform: str) -> LabeledSample:
    """Apply one exact dihedral transform to image and mask together."""
    return replace(
        sample,
        image=GrayImage(orient_array(sample.image.pixels, transform), sample.image.ppc),
        mask=orient_array(sample.mask, transform),
        crossings=None,
    )


def augment_full(sample: LabeledSample, rng: np.random.Generator, repeats: int = 1) -> list[TrainingExample]:
    """All six orientations x ten views (x repeats for skew correction)."""
    out: list[TrainingExample] = []
    for _ in range(repeats):
        for transform in ORIENTATIONS:
            out.extend(generate_views(orient_sample(sample, transform), rng))
    return out


def split_by_painting(
    samples: list[LabeledSample], assignment: dict[str, str]
) -> tuple[list[LabeledSample], list[LabeledSample], list[LabeledSample]]:
    """Partition samples by their painting's split; no painting may straddle."""
    buckets: dict[str, list[LabeledSample]] = {split: [] for split in SPLITS}
    for sample in samples:
        if sample.source_id not in assignment:
            raise ValueError(f"source_id '{sample.source_id}' has no split assignment")
        split = assignment[sample.source_id]
        if split not in SPLITS:
            raise ValueError(f"invalid split '{split}' for source '{sample.source_id}'")
        buckets[split].append(replace(sample, split_tag=split))
    return buckets["train"], buckets["val"], buckets["test"]


# ---------------------------------------------------------------------------
# On-disk layout: one directory per sample with image.pgm, mask.pgm, meta
# (and crossings.csv when ground truth is known), plus a root manifest.csv.


def save_sample(sample: LabeledSample, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_image(sample.image, directory / "image.pgm", bits=16, write_meta=False)
    save_image(
        GrayImage(sample.mask.astype(np.float64), sample.image.ppc),
        directory / "mask.pgm",
        bits=8,
        write_meta=False,
    )
    meta = f"source_id={sample.source_id}\nsplit={sample.split_tag}\nppc={sample.image.ppc}\n"
    (directory / "meta").write_text(meta)
    if sample.crossings is not None:
        with open(directory / "crossings.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in sample.crossings:
                writer.writerow([f"{x:.6f}", f"{y:.6f}"])


def load_sample(directory: str | Path) -> LabeledSample:
    directory = Path(directory)
    meta = read_meta(directory / "meta")
    ppc = float(meta.get("ppc", STANDARD_PPC))
    image = load_image(directory / "image.pgm", ppc=ppc)
    mask_img = load_image(directory / "mask.pgm", ppc=ppc)
    mask = (mask_img.pixels >= 0.5).astype(np.uint8)
    crossings = None
    crossings_file = directory / "crossings.csv"
    if crossings_file.is_file():
        rows = []
        with open(crossings_file, newline="") as fh:
            for row in csv.reader(fh):
                if row and row[0] != "x":
                    rows.append((float(row[0]), float(row[1])))
        crossings = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
    return LabeledSample(
        image=image,
        mask=mask,
        source_id=meta.get("source_id", directory.name),
        split_tag=meta.get("split", "train"),
        crossings=crossings,
    )


def save_dataset(samples: list[LabeledSample], root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "source_id", "split"])
        for i, sample in enumerate(samples):
            sample_id = f"sample{i:05d}"
            save_sample(sample, root / sample_id)
            writer.writerow([sample_id, sample.source_id, sample.split_tag])


def load_dataset(root: str | Path) -> list[LabeledSample]:
    root = Path(root)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise FileNotFoundError(f"{manifest}: dataset manifest not found")
    samples = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            samples.append(load_sample(root / row["sample_id"]))
    return samples
