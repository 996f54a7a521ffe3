"""Spatial counting: thread densities and angles from crossing centroids.

For every centroid the m nearest others are found (exact search), their
direction vectors are binned into up/down/left/right wedges of half-width
alpha, and the minimal distance per wedge is collected.  Left/right
spacings form the vector h, up/down spacings the vector v.  After an
optional percentile trim, densities follow as ppc / mean spacing, and the
mean folded wedge angles give the signed axis deviations.

Angles are measured with the y axis pointing up, in degrees, range
(-180, 180]: a neighbor straight above (smaller row) sits at +90.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossings import CentroidSet

_CHUNK = 256


@dataclass(frozen=True)
class SCParams:
    m: int = 9
    alpha_deg: float = 25.0
    q: float = 10.0
    ppc: float = 200.0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 0 < self.alpha_deg <= 45:
            raise ValueError(f"alpha must be in (0, 45], got {self.alpha_deg}")
        if not 0 <= self.q < 50:
            raise ValueError(f"q must be in [0, 50), got {self.q}")
        if not self.ppc > 0:
            raise ValueError(f"ppc must be positive, got {self.ppc}")


@dataclass(frozen=True)
class DensityEstimate:
    """Per-patch thread densities (thr/cm) and angle deviations (degrees).

    A direction with no binned spacings reports density/angle as None and
    count 0; missing is never coerced to zero.
    """

    h_density: float | None
    v_density: float | None
    h_angle_dev: float | None
    v_angle_dev: float | None
    n_h: int
    n_v: int


@dataclass(frozen=True)
class DirectionalSpacings:
    """Minimal per-wedge neighbor distances and their folded angles."""

    h_dist: np.ndarray
    h_angle: np.ndarray
    v_dist: np.ndarray
    v_angle: np.ndarray


def knn_table(points: np.ndarray | CentroidSet, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Distances and angles from each point to its m nearest others.

    Returns (D, A) of shape (M, k) with k = min(m, M-1); neighbor columns
    are sorted by distance (ties broken by point index).  Exact O(M^2)
    search, chunked to bound memory.
    """
    if isinstance(points, CentroidSet):
        points = points.points
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    k = min(m, n - 1)
    dists = np.empty((n, k))
    angles = np.empty((n, k))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = pts[None, :, :] - pts[start:stop, None, :]
        d = np.hypot(diff[:, :, 0], diff[:, :, 1])
        for i in range(start, stop):
            d[i - start, i] = np.inf
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        dists[start:stop] = np.take_along_axis(d, order, axis=1)
        dx = np.take_along_axis(diff[:, :, 0], order, axis=1)
        dy = np.take_along_axis(diff[:, :, 1], order, axis=1)
        a = np.degrees(np.arctan2(-dy, dx))
        angles[start:stop] = np.where(a == -180.0, 180.0, a)
    return dists, angles


def _fold(angles: np.ndarray, reference: float) -> np.ndarray:
    """Signed deviation from a reference direction, on the circle."""
    dev = (angles - reference + 180.0) % 360.0 - 180.0
    return dev


def direction_gather(dists: np.ndarray, angles: np.ndarray, alpha_deg: float) -> DirectionalSpacings:
    """Collect the minimal distance per axis wedge for every point.

    The four wedges are centered at 0, 180 (appended to h) and +90, -90
    (appended to v); each wedge contributes independently, so one point can
    add up to two entries per vector.  The 180 wedge wraps through +/-180.
    """
    h_dist: list[np.ndarray] = []
    h_angle: list[np.ndarray] = []
    v_dist: list[np.ndarray] = []
    v_angle: list[np.ndarray] = []
    for reference, dist_out, angle_out in (
        (0.0, h_dist, h_angle),
        (180.0, h_dist, h_angle),
        (90.0, v_dist, v_angle),
        (-90.0, v_dist, v_angle),
    ):
        dev = _fold(angles, reference)
        in_bin = np.abs(dev) <= alpha_deg
        masked = np.where(in_bin, dists, np.inf)
        best = np.argmin(masked, axis=1)
        rows = np.flatnonzero(in_bin.any(axis=1))
        dist_out.append(masked[rows, best[rows]])
        angle_out.append(dev[rows, best[rows]])
    return DirectionalSpacings(
        h_dist=np.concatenate(h_dist),
        h_angle=np.concatenate(h_angle),
        v_dist=np.concatenate(v_dist),
        v_angle=np.concatenate(v_angle),
    )


def trim_mask(xs: np.ndarray, q: float) -> np.ndarray:
    """Boolean mask keeping values within the [q, 100-q] percentile band.

    Percentiles use linear interpolation; q = 0 keeps everything.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("empty input")
    if not 0 <= q < 50:
        raise ValueError(f"q must be in [0, 50), got {q}")
    if q == 0:
        return np.ones(xs.shape, dtype=bool)
    lo, hi = np.percentile(xs, [q, 100.0 - q])
    return (xs >= lo) & (xs <= hi)


def percentile_trim(xs: np.ndarray, q: float) -> np.ndarray:
    """Values surviving the symmetric percentile trim, in input order."""
    xs = np.asarray(xs, dtype=np.float64)
    return xs[trim_mask(xs, q)]


def estimate(centroids: CentroidSet | np.ndarray, params: SCParams = SCParams()) -> DensityEstimate:
    """Density and angle estimates for one patch worth of centroids."""
    if isinstance(centroids, CentroidSet):
        ppc = centroids.ppc
        pts = centroids.points
    else:
        ppc = params.ppc
        pts = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    dists, angles = knn_table(pts, params.m)
    gathered = direction_gather(dists, angles, params.alpha_deg)

    def reduce(dist: np.ndarray, angle: np.ndarray) -> tuple[float | None, float | None, int]:
        if dist.size == 0:
            return None, None, 0
        keep = trim_mask(dist, params.q)
        kept_d = dist[keep]
        kept_a = angle[keep]
        return ppc / float(kept_d.mean()), float(kept_a.mean()), int(kept_d.size)

    h_density, h_angle, n_h = reduce(gathered.h_dist, gathered.h_angle)
    v_density, v_angle, n_v = reduce(gathered.v_dist, gathered.v_angle)
    return DensityEstimate(h_density, v_density, h_angle, v_angle, n_h, n_v)
