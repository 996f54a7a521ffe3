"""Three-stage X-ray plate enhancement.

Stage 1 subtracts the local mean over a w x w window, stage 2 divides by
the local standard deviation, and stage 3 clips rare extreme values and
rescales to [0, 1].  The windowed statistics use edge-replicated padding
and a summed-area table, so cost is O(1) per pixel regardless of w.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoDynamicRangeError
from .imgproc import GrayImage


@dataclass(frozen=True)
class PreprocessParams:
    """Window size w (odd), division guard epsilon, clip probability gamma,
    and histogram bin count for the clipping stage."""

    w: int = 13
    epsilon: float = 1e-6
    gamma: float = 1e-3
    bins: int = 256

    def __post_init__(self) -> None:
        if self.w < 3 or self.w % 2 == 0:
            raise ValueError(f"w must be odd and >= 3, got {self.w}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.gamma < 0.5:
            raise ValueError(f"gamma must be in [0, 0.5), got {self.gamma}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")


def _check_window(img: GrayImage, w: int) -> None:
    if w % 2 == 0:
        raise ValueError(f"window size must be odd, got {w}")
    if w > min(img.width, img.height):
        raise ValueError(f"window {w} exceeds image size {img.width}x{img.height}")


def _box_mean(arr: np.ndarray, w: int) -> np.ndarray:
    """Mean over the w x w window centered at each pixel, edge-replicated.

    The array is centered on its global mean before the summed-area table
    so that a constant image comes back bit-exact (no cumsum drift), which
    keeps x - boxmean(x) exactly zero there.
    """
    s = w // 2
    mu = arr.mean()
    padded = np.pad(arr - mu, s, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w_img = arr.shape
    sums = (
        integral[w : w + h, w : w + w_img]
        - integral[0:h, w : w + w_img]
        - integral[w : w + h, 0:w_img]
        + integral[0:h, 0:w_img]
    )
    return sums / float(w * w) + mu


def local_mean_filter(img: GrayImage, w: int = 13) -> GrayImage:
    """Subtract the windowed mean; output is zero-centered locally."""
    _check_window(img, w)
    return img.with_pixels(img.pixels - _box_mean(img.pixels, w))


def local_std_normalize(img: GrayImage, w: int = 13, epsilon: float = 1e-6) -> GrayImage:
    """Divide by the windowed standard deviation, guarded by epsilon.

    The variance is the windowed mean of squares: the input is assumed to
    be locally zero-mean (output of :func:`local_mean_filter`).
    """
    _check_window(img, w)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    sigma = np.sqrt(np.maximum(_box_mean(img.pixels * img.pixels, w), 0.0))
    return img.with_pixels(img.pixels / np.maximum(sigma, epsilon))


def clip_bounds(values: np.ndarray, gamma: float, bins: int) -> tuple[float, float]:
    """Clip bounds from a histogram scan.

    Starting at the extreme bins and walking inward, the bound is the edge
    of the first bin whose empirical probability reaches gamma.  If no bin
    qualifies the full range is kept.
    """
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax <= vmin:
        raise NoDynamicRangeError("constant image: no dynamic range to rescale")
    counts, edges = np.histogram(values, bins=bins, range=(vmin, vmax))
    probs = counts / values.size
    qualified = np.flatnonzero(probs >= gamma)
    if qualified.size == 0:
        return vmin, vmax
    lo = float(edges[qualified[0]])
    hi = float(edges[qualified[-1] + 1])
    return lo, hi


def clip_scale(img: GrayImage, gamma: float = 1e-3, bins: int = 256) -> GrayImage:
    """Clip rare extreme values, then affinely map the kept range to [0, 1]."""
    if not 0 <= gamma < 0.5:
        raise ValueError(f"gamma must be in [0, 0.5), got {gamma}")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    lo, hi = clip_bounds(img.pixels, gamma, bins)
    clipped = np.clip(img.pixels, lo, hi)
    return img.with_pixels((clipped - lo) / (hi - lo))


def preprocess(img: GrayImage, params: PreprocessParams = PreprocessParams()) -> GrayImage:
    """Run all three enhancement stages; output values lie in [0, 1]."""
    stage1 = local_mean_filter(img, params.w)
    stage2 = local_std_normalize(stage1, params.w, params.epsilon)
    return clip_scale(stage2, params.gamma, params.bins)
