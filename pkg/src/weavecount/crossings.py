"""From probability maps to crossing-point centroids.

Binarize (fixed 0.5 or Otsu), label 8-connected components, drop specks
below a minimum area, and reduce each component to its pixel-mean centroid.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

THRESHOLD_RULES = ("fixed-0.5", "otsu")

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.int8)


@dataclass(frozen=True)
class CentroidSet:
    """Crossing-point coordinates in pixels, with the source raster geometry.

    points is an (M, 2) array of (x, y); x is the column coordinate and y
    the row coordinate of the source map.
    """

    points: np.ndarray
    width: int
    height: int
    ppc: float

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if pts.size:
            if pts[:, 0].min() < 0 or pts[:, 0].max() >= self.width:
                raise ValueError("centroid x coordinates outside [0, width)")
            if pts[:, 1].min() < 0 or pts[:, 1].max() >= self.height:
                raise ValueError("centroid y coordinates outside [0, height)")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance over a histogram.

    Candidate thresholds are interior bin edges; the returned threshold is
    used as `value >= t`.  Degenerate (near-constant) inputs fall back to
    0.5 with a warning.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    counts, edges = np.histogram(flat, bins=bins, range=(0.0, 1.0))
    total = counts.sum()
    occupied = np.count_nonzero(counts)
    if total == 0 or occupied < 2:
        warnings.warn("degenerate map for Otsu thresholding; falling back to 0.5")
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight = counts / total
    cum_w = np.cumsum(weight)
    cum_mean = np.cumsum(weight * centers)
    grand_mean = cum_mean[-1]
    # Between-class variance for the split after each bin k (classes
    # [0..k] and [k+1..]); the last entry is the degenerate one-class split.
    w0 = cum_w[:-1]
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    if not np.any(valid):
        warnings.warn("degenerate map for Otsu thresholding; falling back to 0.5")
        return 0.5
    mu0 = np.divide(cum_mean[:-1], w0, out=np.zeros_like(w0), where=w0 > 0)
    mu1 = np.divide(grand_mean - cum_mean[:-1], w1, out=np.zeros_like(w1), where=w1 > 0)
    var_between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    # Empty bins between two clusters give a plateau of equal variance;
    # take its middle split for a threshold centered in the gap.
    maxima = np.flatnonzero(var_between == var_between.max())
    k = int(maxima[(maxima.size - 1) // 2])
    return float(edges[k + 1])


def binarize(prob_map: np.ndarray, rule: str = "fixed-0.5") -> np.ndarray:
    """Threshold a probability map to a boolean mask (map >= threshold)."""
    prob_map = np.asarray(prob_map, dtype=np.float64)
    if rule == "fixed-0.5":
        threshold = 0.5
    elif rule == "otsu":
        threshold = otsu_threshold(prob_map)
    else:
        raise ValueError(f"unknown threshold rule '{rule}' (expected one of {THRESHOLD_RULES})")
    return prob_map >= threshold


def extract_centroids(mask: np.ndarray, ppc: float, min_area: int = 4) -> CentroidSet:
    """8-connected component centroids, skipping components below min_area.

    The centroid is the arithmetic mean of member pixel coordinates; an
    empty mask yields an empty set.
    """
    mask = np.asarray(mask).astype(bool)
    height, width = mask.shape
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return CentroidSet(np.empty((0, 2)), width, height, ppc)
    areas = np.bincount(labels.ravel())[1:]
    keep = np.flatnonzero(areas >= min_area) + 1
    if keep.size == 0:
        return CentroidSet(np.empty((0, 2)), width, height, ppc)
    rows, cols = np.nonzero(mask)
    lab = labels[rows, cols]
    sum_x = np.bincount(lab, weights=cols, minlength=n + 1)
    sum_y = np.bincount(lab, weights=rows, minlength=n + 1)
    count = np.bincount(lab, minlength=n + 1)
    points = np.column_stack([sum_x[keep] / count[keep], sum_y[keep] / count[keep]])
    return CentroidSet(points, width, height, ppc)


def centroids_to_csv(cset: CentroidSet, path: str | Path) -> None:
    """Write x,y rows; the leading comment line carries dims and ppc."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# width={cset.width} height={cset.height} ppc={cset.ppc}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in cset.points:
            writer.writerow([f"{x:.6f}", f"{y:.6f}"])


def centroids_from_csv(path: str | Path, ppc: float | None = None) -> CentroidSet:
    width = height = 0
    file_ppc: float | None = None
    points: list[tuple[float, float]] = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first[1:].split():
                key, _, value = token.partition("=")
                if key == "width":
                    width = int(value)
                elif key == "height":
                    height = int(value)
                elif key == "ppc":
                    file_ppc = float(value)
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0] == "x":
                continue
            points.append((float(row[0]), float(row[1])))
    if ppc is None:
        ppc = file_ppc
    if ppc is None:
        raise ValueError(f"{path}: no ppc in header; pass ppc explicitly")
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if width == 0 or height == 0:
        width = int(np.ceil(arr[:, 0].max() + 1)) if arr.size else 1
        height = int(np.ceil(arr[:, 1].max() + 1)) if arr.size else 1
    return CentroidSet(arr, width, height, ppc)
