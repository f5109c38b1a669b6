"""Pure 8-bit image primitives.

All operations are deterministic: float math in float64, rounding half away
from zero, results clamped to [0, 255]. Images are HWC uint8 numpy arrays
wrapped in :class:`Image8` (1 channel = gray, 3 = RGB).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "Image8",
    "ImagingError",
    "to_grayscale",
    "resize_area",
    "resize_cubic",
    "adjust_brightness",
    "adjust_contrast",
    "apply_levels",
    "crop",
    "flip",
    "load_png",
    "save_png",
]

# Rec. 601 luma weights
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class ImagingError(ValueError):
    """Raised on contract violations of the imaging kernel."""


@dataclass
class Image8:
    """8-bit raster, row-major interleaved, shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8:
            raise ImagingError(f"Image8 requires uint8 data, got {d.dtype}")
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ImagingError(f"Image8 requires (h, w, 1|3) shape, got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ImagingError(f"Image8 requires positive dimensions, got {d.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def constant(cls, width: int, height: int, channels: int, value: int) -> "Image8":
        return cls(np.full((height, width, channels), value, dtype=np.uint8))

    def copy(self) -> "Image8":
        return Image8(self.data.copy())

    def same_pixels(self, other: "Image8") -> bool:
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(_round_half_away(x), 0, 255).astype(np.uint8)


def to_grayscale(img: Image8) -> Image8:
    """Rec. 601 luma: gray = round(0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise ImagingError("to_grayscale expects a 3-channel image")
    luma = img.data.astype(np.float64) @ _GRAY_WEIGHTS
    return Image8(_to_u8(luma)[..., None])


def _area_weights_int(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box overlaps scaled by n_out, which makes them exact
    integers; dividing the 2D accumulation by h*w recovers the mean."""
    w = np.zeros((n_out, n_in), dtype=np.int64)
    for i in range(n_out):
        a = i * n_in  # box bounds scaled by n_out
        b = (i + 1) * n_in
        for j in range(a // n_out, min(n_in, -(-b // n_out))):
            w[i, j] = max(0, min(b, (j + 1) * n_out) - max(a, j * n_out))
    return w


def _catmull_rom(x: np.ndarray) -> np.ndarray:
    # kernel parameter a = -0.5
    a = -0.5
    ax = np.abs(x)
    near = (a + 2) * ax**3 - (a + 3) * ax**2 + 1
    far = a * ax**3 - 5 * a * ax**2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _cubic_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) Catmull-Rom weights, edge-clamped taps."""
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        s = (i + 0.5) * scale - 0.5
        base = int(np.floor(s))
        for t in range(base - 1, base + 3):
            w[i, min(max(t, 0), n_in - 1)] += float(_catmull_rom(np.float64(s - t)))
    return w


def _resample(img: Image8, wy: np.ndarray, wx: np.ndarray) -> Image8:
    arr = img.data.astype(np.float64)
    tmp = np.tensordot(wy, arr, axes=(1, 0))  # (oh, w, c)
    out = np.tensordot(tmp, wx, axes=([1], [1]))  # (oh, c, ow)
    return Image8(_to_u8(out.transpose(0, 2, 1)))


def resize_area(img: Image8, out_w: int, out_h: int) -> Image8:
    """Box/area resampling: each output pixel averages its covered source box.

    Computed in exact integer arithmetic (rounding half away from zero) so
    results are bit-identical across platforms.
    """
    if out_w < 1 or out_h < 1:
        raise ImagingError("resize_area target dimensions must be >= 1")
    if out_w == img.width and out_h == img.height:
        return img.copy()
    wy = _area_weights_int(img.height, out_h)
    wx = _area_weights_int(img.width, out_w)
    arr = img.data.astype(np.int64)
    tmp = np.tensordot(wy, arr, axes=(1, 0))  # (oh, w, c)
    num = np.tensordot(tmp, wx, axes=([1], [1])).transpose(0, 2, 1)  # (oh, ow, c)
    den = img.height * img.width
    return Image8(((2 * num + den) // (2 * den)).astype(np.uint8))


def resize_cubic(img: Image8, out_w: int, out_h: int) -> Image8:
    """Separable Catmull-Rom resampling with edge clamping."""
    if out_w < 1 or out_h < 1:
        raise ImagingError("resize_cubic target dimensions must be >= 1")
    if out_w == img.width and out_h == img.height:
        return img.copy()
    return _resample(img, _cubic_weights(img.height, out_h), _cubic_weights(img.width, out_w))


def adjust_brightness(img: Image8, factor: float) -> Image8:
    """Multiplicative brightness: out = clamp(round(in * factor))."""
    if factor <= 0:
        raise ImagingError(f"brightness factor must be > 0, got {factor}")
    if factor == 1.0:
        return img.copy()
    return Image8(_to_u8(img.data.astype(np.float64) * factor))


def adjust_contrast(img: Image8, factor: float) -> Image8:
    """Contrast about mid-gray 127.5: out = (in - 127.5) * factor + 127.5."""
    if factor <= 0:
        raise ImagingError(f"contrast factor must be > 0, got {factor}")
    if factor == 1.0:
        return img.copy()
    return Image8(_to_u8((img.data.astype(np.float64) - 127.5) * factor + 127.5))


def apply_levels(img: Image8, norm_low: int, norm_high: int) -> Image8:
    """Linear levels remap: norm_low -> 0, norm_high -> 255.

    A degenerate range (high <= low) is widened to low+1 so a live slider
    sweep can never fault the frame loop.
    """
    norm_low = int(norm_low)
    norm_high = int(norm_high)
    if not (0 <= norm_low <= 255 and 0 <= norm_high <= 255):
        raise ImagingError("norm_low/norm_high must be in [0, 255]")
    if norm_high <= norm_low:
        norm_high = norm_low + 1
    if norm_low == 0 and norm_high == 255:
        return img.copy()
    scaled = (img.data.astype(np.float64) - norm_low) * (255.0 / (norm_high - norm_low))
    return Image8(_to_u8(scaled))


def crop(img: Image8, x: int, y: int, w: int, h: int) -> Image8:
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > img.width or y + h > img.height:
        raise ImagingError(
            f"crop rect ({x},{y},{w},{h}) out of bounds for {img.width}x{img.height}"
        )
    return Image8(np.ascontiguousarray(img.data[y : y + h, x : x + w]))


def flip(img: Image8, horizontal: bool, vertical: bool) -> Image8:
    out = img.data
    if horizontal:
        out = out[:, ::-1]
    if vertical:
        out = out[::-1]
    return Image8(np.ascontiguousarray(out))


def load_png(path) -> Image8:
    """Load an 8-bit gray or RGB image. Palette/16-bit/alpha are rejected."""
    with PILImage.open(path) as pil:
        if pil.mode == "L":
            arr = np.asarray(pil, dtype=np.uint8)[..., None]
        elif pil.mode == "RGB":
            arr = np.asarray(pil, dtype=np.uint8)
        else:
            raise ImagingError(
                f"{path}: unsupported mode {pil.mode!r}; only 8-bit gray (L) and RGB are accepted"
            )
    return Image8(np.ascontiguousarray(arr))


def save_png(img: Image8, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = img.data[..., 0] if img.channels == 1 else img.data
    PILImage.fromarray(arr, mode="L" if img.channels == 1 else "RGB").save(path, format="PNG")
