"""Whole-canvas density/angle maps and canvas pairing.

The preprocessed plate is tiled into patch_px x patch_px patches whose
top-left corners sit at multiples of the shift s; each patch runs one
counting method and fills one grid cell.  Failures leave the cell missing
(NaN) rather than zero.  Maps render to false-color rasters with a
colorbar, and two maps can be compared by correlating their per-row (or
per-column) mean profiles over integer lags.
"""
from __future__ import annotations

import csv
import inspect
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .crossings import binarize, extract_centroids
from .errors import WeaveCountError
from .freqcount import FTParams, fa_on_mask, ft_density
from .imgproc import GrayImage, crop
from .spatialcount import SCParams, estimate

METHODS = ("dlsc", "dlfa", "ft")
PATCH_PX = 200

# Anchor-interpolated palettes; 256-entry lookup tables are built lazily.
_PALETTE_ANCHORS: dict[str, list[tuple[int, int, int]]] = {
    "viridis": [
        (68, 1, 84),
        (71, 44, 122),
        (59, 81, 139),
        (44, 113, 142),
        (33, 144, 141),
        (39, 173, 129),
        (92, 200, 99),
        (170, 220, 50),
        (253, 231, 37),
    ],
    "jet": [
        (0, 0, 128),
        (0, 0, 255),
        (0, 255, 255),
        (255, 255, 0),
        (255, 0, 0),
        (128, 0, 0),
    ],
    "gray": [(0, 0, 0), (255, 255, 255)],
}
_LUT_CACHE: dict[str, np.ndarray] = {}
MISSING_COLOR = (110, 110, 110)


@dataclass(frozen=True)
class DensityMap:
    """Grid of per-patch values; NaN marks missing cells.

    Cell (row r, col c) corresponds to the patch whose top-left pixel is
    (x = c * shift_px, y = r * shift_px).
    """

    values: np.ndarray
    shift_px: int
    patch_px: int = PATCH_PX

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"map values must be 2D, got shape {arr.shape}")
        if self.shift_px < 1:
            raise ValueError(f"shift must be >= 1 px, got {self.shift_px}")
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SweepResult:
    h: DensityMap
    v: DensityMap
    h_angle: DensityMap | None
    v_angle: DensityMap | None


def grid_shape(width: int, height: int, shift: int, patch: int = PATCH_PX) -> tuple[int, int]:
    """(rows, cols) = floor((H - patch)/s) + 1, floor((W - patch)/s) + 1."""
    if width < patch or height < patch:
        raise ValueError(f"canvas {width}x{height} smaller than one {patch}px patch")
    return (height - patch) // shift + 1, (width - patch) // shift + 1


def sweep(
    canvas: GrayImage,
    method: str,
    segmenter: Callable[[GrayImage], np.ndarray] | None = None,
    sc: SCParams | None = None,
    ftp: FTParams | None = None,
    shift: int = 100,
    threshold_rule: str = "fixed-0.5",
    min_area: int = 4,
    threads: int = 1,
    patch_px: int = PATCH_PX,
) -> SweepResult:
    """Run one counting method over every patch of the canvas.

    dlsc/dlfa need a segmenter callable mapping a patch to a probability
    map (e.g. Network.predict).  A segmenter that accepts a second
    parameter is called as segmenter(patch, (x0, y0)) with the patch's
    top-left canvas position, which lets ground-truth mask lookups run the
    counting path with the network skipped.  Angle maps are produced by
    dlsc only.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}' (expected one of {METHODS})")
    if method in ("dlsc", "dlfa") and segmenter is None:
        raise ValueError(f"method '{method}' requires a segmenter")
    segment = None
    if segmenter is not None:
        try:
            wants_origin = len(inspect.signature(segmenter).parameters) >= 2
        except (TypeError, ValueError):
            wants_origin = False
        if wants_origin:
            segment = segmenter
        else:
            segment = lambda patch, origin: segmenter(patch)
    sc = sc or SCParams(ppc=canvas.ppc)
    ftp = ftp or FTParams()
    rows, cols = grid_shape(canvas.width, canvas.height, shift, patch_px)
    h_map = np.full((rows, cols), np.nan)
    v_map = np.full((rows, cols), np.nan)
    ha_map = np.full((rows, cols), np.nan)
    va_map = np.full((rows, cols), np.nan)

    def run_cell(cell: tuple[int, int]) -> None:
        r, c = cell
        patch = crop(canvas, c * shift, r * shift, patch_px, patch_px)
        try:
            if method == "ft":
                h, v = ft_density(patch, ftp)
            else:
                prob = segment(patch, (c * shift, r * shift))
                mask = binarize(prob, threshold_rule)
                if method == "dlfa":
                    h, v = fa_on_mask(mask.astype(np.float64), ftp, ppc=canvas.ppc)
                else:
                    cset = extract_centroids(mask, canvas.ppc, min_area=min_area)
                    est = estimate(cset, sc)
                    h, v = est.h_density, est.v_density
                    if est.h_angle_dev is not None:
                        ha_map[r, c] = est.h_angle_dev
                    if est.v_angle_dev is not None:
                        va_map[r, c] = est.v_angle_dev
        except (WeaveCountError, ValueError):
            return
        if h is not None:
            h_map[r, c] = h
        if v is not None:
            v_map[r, c] = v

    cells = [(r, c) for r in range(rows) for c in range(cols)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_cell, cells))
    else:
        for cell in cells:
            run_cell(cell)

    angle_maps = method == "dlsc"
    return SweepResult(
        h=DensityMap(h_map, shift, patch_px),
        v=DensityMap(v_map, shift, patch_px),
        h_angle=DensityMap(ha_map, shift, patch_px) if angle_maps else None,
        v_angle=DensityMap(va_map, shift, patch_px) if angle_maps else None,
    )


# ---------------------------------------------------------------------------
# Rendering


def palette_lut(name: str) -> np.ndarray:
    if name not in _PALETTE_ANCHORS:
        raise ValueError(f"unknown palette '{name}' (expected one of {sorted(_PALETTE_ANCHORS)})")
    if name not in _LUT_CACHE:
        anchors = np.asarray(_PALETTE_ANCHORS[name], dtype=np.float64)
        positions = np.linspace(0.0, 1.0, anchors.shape[0])
        xs = np.linspace(0.0, 1.0, 256)
        lut = np.column_stack([np.interp(xs, positions, anchors[:, i]) for i in range(3)])
        _LUT_CACHE[name] = np.rint(lut).astype(np.uint8)
    return _LUT_CACHE[name]


def render(
    dmap: DensityMap,
    palette: str = "viridis",
    value_range: tuple[float, float] | None = None,
    cell_px: int = 8,
    colorbar: bool = True,
) -> np.ndarray:
    """False-color (H, W, 3) uint8 raster; missing cells in a sentinel
    color; a vertical colorbar strip is appended on the right."""
    values = dmap.values
    if value_range is None:
        if values.size == 0 or np.all(np.isnan(values)):
            raise ValueError("cannot infer a value range from an empty map")
        lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = value_range
        if hi <= lo:
            raise ValueError(f"value range must satisfy lo < hi, got ({lo}, {hi})")
    lut = palette_lut(palette)
    missing = np.isnan(values)
    norm = np.clip((np.nan_to_num(values, nan=lo) - lo) / (hi - lo), 0.0, 1.0)
    idx = np.rint(norm * 255).astype(np.int64)
    rgb = lut[idx]
    rgb[missing] = MISSING_COLOR
    rgb = np.kron(rgb, np.ones((cell_px, cell_px, 1), dtype=np.uint8))
    if colorbar:
        height = rgb.shape[0]
        ramp = np.linspace(1.0, 0.0, height)
        bar = lut[np.rint(ramp * 255).astype(np.int64)][:, None, :]
        bar = np.repeat(bar, 16, axis=1)
        gap = np.full((height, 3, 3), 255, dtype=np.uint8)
        rgb = np.concatenate([rgb, gap, bar], axis=1)
    return rgb


# ---------------------------------------------------------------------------
# Pairing


@dataclass(frozen=True)
class PairReport:
    lag: int
    correlation: float
    by_lag: dict[int, float]


def _transform_values(values: np.ndarray, transform: str) -> np.ndarray:
    if transform == "none":
        return values
    if transform == "flip_h":
        return values[:, ::-1]
    if transform == "rot180":
        return values[::-1, ::-1]
    raise ValueError(f"unknown transform '{transform}' (expected flip_h, rot180, or none)")


def _profile(values: np.ndarray, axis: str) -> np.ndarray:
    if axis == "rows":
        return np.nanmean(values, axis=1)
    if axis == "cols":
        return np.nanmean(values, axis=0)
    raise ValueError(f"axis must be 'rows' or 'cols', got '{axis}'")


def pair_compare(
    a: DensityMap,
    b: DensityMap,
    transform: str = "flip_h",
    axis: str = "rows",
    max_lag: int = 10,
) -> PairReport:
    """Best normalized cross-correlation of mean profiles over integer lags.

    The transform is applied to b first.  Lag L compares a[i] with b[i+L];
    the reported lag maximizes the Pearson correlation of the overlapping
    profile entries (at least 3 valid pairs required).
    """
    if a.shift_px != b.shift_px or a.patch_px != b.patch_px:
        raise ValueError("maps must share cell pitch for comparison")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN rows are legal
        pa = _profile(a.values, axis)
        pb = _profile(_transform_values(b.values, transform), axis)
    by_lag: dict[int, float] = {}
    for lag in range(-max_lag, max_lag + 1):
        pairs_a = []
        pairs_b = []
        for i in range(pa.size):
            j = i + lag
            if 0 <= j < pb.size and math.isfinite(pa[i]) and math.isfinite(pb[j]):
                pairs_a.append(pa[i])
                pairs_b.append(pb[j])
        if len(pairs_a) < 3:
            continue
        va = np.asarray(pairs_a) - np.mean(pairs_a)
        vb = np.asarray(pairs_b) - np.mean(pairs_b)
        denom = math.sqrt(float(va @ va) * float(vb @ vb))
        if denom == 0:
            continue
        by_lag[lag] = float(va @ vb) / denom
    if not by_lag:
        raise ValueError("no overlapping extent between the two maps")
    best = max(by_lag, key=lambda k: by_lag[k])
    return PairReport(best, by_lag[best], by_lag)


def side_by_side(
    a: DensityMap,
    b: DensityMap,
    transform: str = "flip_h",
    palette: str = "viridis",
    value_range: tuple[float, float] | None = None,
    cell_px: int = 8,
) -> np.ndarray:
    """Two maps rendered side by side, separated by a dashed line."""
    bt = replace(b, values=_transform_values(b.values, transform).copy())
    if value_range is None:
        merged = np.concatenate([a.values.ravel(), bt.values.ravel()])
        if np.all(np.isnan(merged)):
            raise ValueError("cannot render empty maps")
        value_range = (float(np.nanmin(merged)), float(np.nanmax(merged)))
        if value_range[1] <= value_range[0]:
            value_range = (value_range[0], value_range[0] + 1.0)
    left = render(a, palette, value_range, cell_px, colorbar=False)
    right = render(bt, palette, value_range, cell_px, colorbar=True)
    height = max(left.shape[0], right.shape[0])

    def pad_to(img: np.ndarray) -> np.ndarray:
        if img.shape[0] == height:
            return img
        pad = np.full((height - img.shape[0], img.shape[1], 3), 255, dtype=np.uint8)
        return np.concatenate([img, pad], axis=0)

    dash = np.full((height, 3, 3), 255, dtype=np.uint8)
    period = max(2, 2 * cell_px)
    for y in range(height):
        if (y // (period // 2)) % 2 == 0:
            dash[y, :, :] = 0
    return np.concatenate([pad_to(left), dash, pad_to(right)], axis=1)


# ---------------------------------------------------------------------------
# CSV round trip: a plain numeric grid, empty cells for missing.


def map_to_csv(dmap: DensityMap, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in dmap.values:
            writer.writerow(["" if not math.isfinite(v) else f"{v:.6f}" for v in row])


def map_from_csv(path: str | Path, shift_px: int, patch_px: int = PATCH_PX) -> DensityMap:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if not record:
                continue
            rows.append([float(tok) if tok else np.nan for tok in record])
    if not rows:
        raise ValueError(f"{path}: empty map file")
    return DensityMap(np.asarray(rows, dtype=np.float64), shift_px, patch_px)
