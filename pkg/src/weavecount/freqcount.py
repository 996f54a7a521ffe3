"""Frequency-domain thread counting (the transform baseline).

The patch is mean-removed, Hann-tapered, zero-padded to n_fft x n_fft, and
the magnitude spectrum searched inside two wedges around the frequency
axes.  Peaks near the vertical frequency axis correspond to spacings
measured vertically and produce the horizontal estimate; the transposed
wedge produces the vertical estimate.  Peak position is refined by 3-point
parabolic interpolation along the radial direction, and converted with
density = f* . ppc / n_fft.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoDominantFrequencyError
from .imgproc import GrayImage

# Peak acceptance: relative to the strongest in-band response anywhere on
# the spectrum, and to the wedge's own background level.
_REL_FLOOR = 1e-3
_MEDIAN_FACTOR = 4.0


@dataclass(frozen=True)
class FTParams:
    n_fft: int = 2048
    band: tuple[float, float] = (4.0, 30.0)
    wedge_deg: float = 15.0
    window: str = "hann"

    def __post_init__(self) -> None:
        if self.n_fft < 2:
            raise ValueError(f"n_fft must be >= 2, got {self.n_fft}")
        if not 0 < self.band[0] < self.band[1]:
            raise ValueError(f"band must satisfy 0 < min < max, got {self.band}")
        if not 0 < self.wedge_deg <= 45:
            raise ValueError(f"wedge_deg must be in (0, 45], got {self.wedge_deg}")
        if self.window not in ("hann", "none"):
            raise ValueError(f"unknown window '{self.window}'")


def _magnitude_spectrum(values: np.ndarray, p: FTParams) -> np.ndarray:
    """Centered magnitude spectrum of the tapered, zero-padded patch."""
    a = values - values.mean()
    if p.window == "hann":
        wy = np.hanning(a.shape[0])
        wx = np.hanning(a.shape[1])
        a = a * wy[:, None] * wx[None, :]
    spec = np.fft.fft2(a, s=(p.n_fft, p.n_fft))
    return np.fft.fftshift(np.abs(spec))


def _interp_radial(mag: np.ndarray, center: int, kx: float, ky: float, radius: float) -> float:
    """Parabolic sub-bin refinement along the ray through the peak bin."""
    norm = math.hypot(kx, ky)
    ux, uy = kx / norm, ky / norm

    def sample(r: float) -> float:
        x = center + ux * r
        y = center + uy * r
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        n = mag.shape[0]
        x0 = min(max(x0, 0), n - 2)
        y0 = min(max(y0, 0), n - 2)
        return float(
            mag[y0, x0] * (1 - fx) * (1 - fy)
            + mag[y0, x0 + 1] * fx * (1 - fy)
            + mag[y0 + 1, x0] * (1 - fx) * fy
            + mag[y0 + 1, x0 + 1] * fx * fy
        )

    m_lo, m_mid, m_hi = sample(radius - 1.0), sample(radius), sample(radius + 1.0)
    denom = m_lo - 2.0 * m_mid + m_hi
    if denom >= 0 or not math.isfinite(denom):
        return radius
    delta = 0.5 * (m_lo - m_hi) / denom
    return radius + max(-0.5, min(0.5, delta))


def _wedge_peak(
    mag: np.ndarray,
    abs_kx: np.ndarray,
    abs_ky: np.ndarray,
    in_band: np.ndarray,
    axis: str,
    p: FTParams,
    ppc: float,
    band_scale: float,
) -> float | None:
    """Best radial frequency (thr/cm) inside one axis wedge, or None."""
    n = p.n_fft
    center = n // 2
    # The vertical-axis wedge captures variation along y (horizontal
    # threads stacked vertically); the horizontal-axis wedge is symmetric.
    if axis == "vertical":
        off_axis, on_axis = abs_kx, abs_ky
    else:
        off_axis, on_axis = abs_ky, abs_kx
    tan_w = math.tan(math.radians(p.wedge_deg))
    mask = in_band & (off_axis <= on_axis * tan_w)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return None
    values = mag[rows, cols]
    peak_flat = int(np.argmax(values))
    peak_val = float(values[peak_flat])
    if peak_val < _REL_FLOOR * band_scale:
        return None
    background = float(np.median(values))
    if background > 0 and peak_val < _MEDIAN_FACTOR * background:
        return None
    py, px = int(rows[peak_flat]), int(cols[peak_flat])
    kx, ky = px - center, py - center
    r_peak = _interp_radial(mag, center, kx, ky, math.hypot(kx, ky))
    return r_peak * ppc / n


def ft_density(patch: GrayImage, p: FTParams = FTParams()) -> tuple[float | None, float | None]:
    """(h_density, v_density) in thr/cm from the patch spectrum.

    Each estimate is None when its wedge holds no acceptable peak; a flat
    patch with no peak anywhere raises :class:`NoDominantFrequencyError`.
    """
    if patch.width != patch.height:
        raise ValueError(f"patch must be square, got {patch.width}x{patch.height}")
    if p.n_fft < max(patch.width, patch.height):
        raise ValueError(f"n_fft={p.n_fft} smaller than patch size {patch.width}")
    if np.ptp(patch.pixels) == 0:
        raise NoDominantFrequencyError("flat patch: no dominant frequency")
    mag = _magnitude_spectrum(patch.pixels, p)
    n = p.n_fft
    center = n // 2
    coords = np.abs(np.arange(n) - center).astype(np.float64)
    abs_ky = coords[:, None]
    abs_kx = coords[None, :]
    radius_sq = abs_kx * abs_kx + abs_ky * abs_ky
    r_lo = p.band[0] * n / patch.ppc
    r_hi = p.band[1] * n / patch.ppc
    in_band = (radius_sq >= r_lo * r_lo) & (radius_sq <= r_hi * r_hi)
    if not np.any(in_band):
        raise NoDominantFrequencyError("search band holds no frequency bins")
    # Reference level is the global spectrum maximum, so leakage from a
    # strong out-of-band component cannot masquerade as an in-band peak.
    band_scale = float(mag.max())
    if band_scale <= 0:
        raise NoDominantFrequencyError("empty spectrum: no dominant frequency")
    h = _wedge_peak(mag, abs_kx, abs_ky, in_band, "vertical", p, patch.ppc, band_scale)
    v = _wedge_peak(mag, abs_kx, abs_ky, in_band, "horizontal", p, patch.ppc, band_scale)
    if h is None and v is None:
        raise NoDominantFrequencyError("no peak above the noise floor in the search band")
    return h, v


def fa_on_mask(
    mask: np.ndarray | GrayImage,
    p: FTParams = FTParams(),
    ppc: float | None = None,
) -> tuple[float | None, float | None]:
    """Frequency analysis of a segmentation output (mask or probability map)."""
    if isinstance(mask, GrayImage):
        patch = mask
    else:
        if ppc is None:
            raise ValueError("ppc required when mask is a bare array")
        patch = GrayImage(np.asarray(mask, dtype=np.float64), ppc)
    return ft_density(patch, p)
