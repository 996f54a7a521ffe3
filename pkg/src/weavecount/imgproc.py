"""Grayscale image container, file I/O, and geometric primitives.

Every pipeline stage consumes and produces :class:`GrayImage`: a 2D float
raster in [0, 1] (or unbounded between normalization stages) together with
its physical resolution in pixels per cm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageFormatError, MissingMetadataError

ORIENTATIONS = (
    "identity",
    "flip_lr",
    "flip_ud",
    "rot90",
    "rot90+flip_lr",
    "rot90+flip_ud",
)


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster with resolution in pixels per cm (ppc)."""

    pixels: np.ndarray
    ppc: float

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"pixels must be a non-empty 2D array, got shape {px.shape}")
        if not self.ppc > 0:
            raise ValueError(f"ppc must be positive, got {self.ppc}")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "ppc", float(self.ppc))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def with_pixels(self, pixels: np.ndarray) -> "GrayImage":
        """Same resolution, new pixel data."""
        return GrayImage(pixels, self.ppc)


# ---------------------------------------------------------------------------
# File I/O: binary PGM (P5) and PNG, 8 or 16 bit, single channel only.
# Resolution comes from an explicit argument or a sidecar "<file>.meta"
# containing a line "ppc=<real>".


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta")


def read_meta(path: Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise ImageFormatError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            tokens.append(int(data[start:pos]))
        else:
            raise ImageFormatError(f"{path}: malformed PGM header")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: PGM maxval {maxval} out of range")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raw.size != count:
        raise ImageFormatError(f"{path}: truncated PGM pixel data")
    return raw.reshape(height, width).astype(np.float64), maxval


def _write_pgm(path: Path, values: np.ndarray, maxval: int) -> None:
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode("ascii")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    path.write_bytes(header + values.astype(dtype).tobytes())


def _read_png(path: Path) -> tuple[np.ndarray, int]:
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64), 255
        if im.mode in ("I;16", "I"):
            arr = np.asarray(im, dtype=np.float64)
            if arr.max(initial=0.0) > 65535:
                raise ImageFormatError(f"{path}: unsupported bit depth")
            return arr, 65535
        raise ImageFormatError(f"{path}: multi-channel input (mode {im.mode})")


def load_image(path: str | Path, ppc: float | None = None) -> GrayImage:
    """Load an 8/16-bit single-channel PGM or PNG, scaled to [0, 1].

    Resolution is taken from `ppc` when given, otherwise from the sidecar
    `<file>.meta`.  Raises :class:`MissingMetadataError` if neither exists.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageFormatError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        values, maxval = _read_pgm(path)
    elif suffix == ".png":
        values, maxval = _read_png(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format '{suffix}'")
    if ppc is None:
        meta_file = _meta_path(path)
        if meta_file.is_file():
            meta = read_meta(meta_file)
            if "ppc" in meta:
                ppc = float(meta["ppc"])
    if ppc is None:
        raise MissingMetadataError(f"{path}: resolution unknown; pass ppc or provide {_meta_path(path).name}")
    return GrayImage(values / float(maxval), ppc)


def save_image(img: GrayImage, path: str | Path, bits: int = 16, write_meta: bool = True) -> None:
    """Write a GrayImage as PGM or PNG (by suffix) plus a ppc sidecar.

    Values are clipped to [0, 1] and quantized to the requested bit depth.
    """
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    path = Path(path)
    maxval = 255 if bits == 8 else 65535
    values = np.rint(np.clip(img.pixels, 0.0, 1.0) * maxval)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        _write_pgm(path, values, maxval)
    elif suffix == ".png":
        if bits == 8:
            Image.fromarray(values.astype(np.uint8)).save(path)
        else:
            Image.fromarray(values.astype(np.uint16)).save(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format '{suffix}'")
    if write_meta:
        _meta_path(path).write_text(f"ppc={img.ppc}\n")


def save_rgb(rgb: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, 3) uint8 array as a PNG."""
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(Path(path))


# ---------------------------------------------------------------------------
# Geometry


def crop(img: GrayImage, x0: int, y0: int, w: int, h: int) -> GrayImage:
    """Axis-aligned crop; the rectangle must lie fully inside the image."""
    if w <= 0 or h <= 0:
        raise ValueError(f"crop size must be positive, got {w}x{h}")
    if x0 < 0 or y0 < 0 or x0 + w > img.width or y0 + h > img.height:
        raise ValueError(
            f"crop rectangle ({x0},{y0},{w},{h}) out of bounds for {img.width}x{img.height} image"
        )
    return img.with_pixels(img.pixels[y0 : y0 + h, x0 : x0 + w].copy())


def resample(img: GrayImage, target_ppc: float) -> GrayImage:
    """Rescale to a new resolution with bilinear interpolation.

    Output dimensions are round(dim * target_ppc / ppc).
    """
    if not target_ppc > 0:
        raise ValueError(f"target_ppc must be positive, got {target_ppc}")
    if target_ppc == img.ppc:
        return GrayImage(img.pixels.copy(), target_ppc)
    scale = target_ppc / img.ppc
    new_w = int(round(img.width * scale))
    new_h = int(round(img.height * scale))
    if new_w < 1 or new_h < 1:
        raise ValueError(f"resample to {target_ppc} ppc collapses {img.width}x{img.height} to zero size")
    # Pixel-center mapping: out pixel i samples input at (i + 0.5)/scale - 0.5,
    # which is the identity when scale == 1.
    xs = (np.arange(new_w) + 0.5) * (img.width / new_w) - 0.5
    ys = (np.arange(new_h) + 0.5) * (img.height / new_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return GrayImage(sample_bilinear(img.pixels, gx, gy), target_ppc)


def sample_bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup at real-valued coordinates, edge-replicated outside."""
    h, w = arr.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    # Clamp the fractional part as well so coordinates left of 0 replicate.
    fx = np.clip(np.where(x0 < 0, 0.0, fx), 0.0, 1.0)
    fy = np.clip(np.where(y0 < 0, 0.0, fy), 0.0, 1.0)
    top = arr[y0i, x0i] * (1 - fx) + arr[y0i, x1i] * fx
    bot = arr[y1i, x0i] * (1 - fx) + arr[y1i, x1i] * fx
    return top * (1 - fy) + bot * fy


def rotate_array(arr: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate raster content about its center; bilinear, edge-replicated.

    Positive angles follow the same direction as the point-set convention
    used for thread angles (counter-clockwise with the y axis pointing up).
    """
    h, w = arr.shape
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = cols - cx
    dy_up = cy - rows
    src_x = cx + dx * cos_t + dy_up * sin_t
    src_y = cy - (-dx * sin_t + dy_up * cos_t)
    return sample_bilinear(arr, src_x, src_y)


def rotate(img: GrayImage, angle_deg: float) -> GrayImage:
    """Rotate about the image center within the augmentation range."""
    if abs(angle_deg) > 45:
        raise ValueError(f"|angle| must be <= 45 degrees, got {angle_deg}")
    if angle_deg == 0:
        return img.with_pixels(img.pixels.copy())
    return img.with_pixels(rotate_array(img.pixels, angle_deg))


def orient_array(arr: np.ndarray, transform: str) -> np.ndarray:
    """Apply one of the six exact dihedral permutations.

    The quarter turn uses the fixed convention out[i, j] = in[n-1-j, i];
    composites apply the flip after the quarter turn.
    """
    if transform == "identity":
        return arr.copy()
    if transform == "flip_lr":
        return arr[:, ::-1].copy()
    if transform == "flip_ud":
        return arr[::-1, :].copy()
    if transform == "rot90":
        return np.rot90(arr, k=-1).copy()
    if transform == "rot90+flip_lr":
        return np.rot90(arr, k=-1)[:, ::-1].copy()
    if transform == "rot90+flip_ud":
        return np.rot90(arr, k=-1)[::-1, :].copy()
    raise ValueError(f"unknown orientation '{transform}' (expected one of {ORIENTATIONS})")


def orient(img: GrayImage, transform: str) -> GrayImage:
    return img.with_pixels(orient_array(img.pixels, transform))


def rotate_points(points: np.ndarray, angle_deg: float, center: tuple[float, float]) -> np.ndarray:
    """Rotate (x, y) pixel coordinates with the same convention as rotate().

    y is a row coordinate (increasing downward), so the rotation matrix is
    conjugated by the y flip.
    """
    pts = np.asarray(points, dtype=np.float64)
    theta = math.radians(angle_deg)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    cx, cy = center
    dx = pts[:, 0] - cx
    dy_up = cy - pts[:, 1]
    rx = dx * cos_t - dy_up * sin_t
    ry_up = dx * sin_t + dy_up * cos_t
    return np.column_stack([cx + rx, cy - ry_up])
