"""Parameterized preprocessing chain.

The same operator chain serves two purposes: during training it turns a
random crop of a target image into its paired blurry-gray input, and at
performance time it turns camera frames into model inputs under live
parameter control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .imaging import Image8

__all__ = [
    "PreprocessConfig",
    "PreprocessParams",
    "LiveParams",
    "sample_params",
    "make_pair",
    "apply_live",
    "prepare_frame",
    "live_from_prepared",
]


@dataclass
class PreprocessConfig:
    desired_size: int = 128
    scale_min: float = 1.00
    scale_max: float = 1.30
    allow_flip_h: bool = True
    allow_flip_v: bool = False
    downscale_factor: float = 24.0
    brightness_range: float = 0.20
    contrast_range: float = 0.15

    def __post_init__(self):
        if self.desired_size < 1:
            raise ValueError("desired_size must be >= 1")
        if not (1.0 <= self.scale_min <= self.scale_max):
            raise ValueError("need 1.0 <= scale_min <= scale_max")
        if self.downscale_factor <= 1:
            raise ValueError("downscale_factor must be > 1")
        if not (0 <= self.brightness_range < 1 and 0 <= self.contrast_range < 1):
            raise ValueError("brightness/contrast ranges must be in [0, 1)")

    @property
    def lowres_size(self) -> int:
        return max(1, round(self.desired_size / self.downscale_factor))


@dataclass(frozen=True)
class PreprocessParams:
    """One concrete draw of the random chain parameters.

    Crop offsets are stored normalized (u, v in [0, 1)) so a single draw
    applies to any target size; they map to pixel offsets at apply time.
    """

    scale: float
    crop_u: float
    crop_v: float
    flip_h: bool
    flip_v: bool
    brightness: float
    contrast: float


@dataclass(frozen=True)
class LiveParams:
    norm_low: int = 0
    norm_high: int = 255
    brightness: float = 1.0
    contrast: float = 1.0

    def __post_init__(self):
        if not (0 <= self.norm_low <= 255 and 0 <= self.norm_high <= 255):
            raise ValueError("norm_low/norm_high must be integers in [0, 255]")


def sample_params(config: PreprocessConfig, rng: np.random.Generator) -> PreprocessParams:
    """Draw one uniform sample of every chain parameter. Draw order is fixed
    so a seeded generator reproduces the stream bit-exactly."""
    scale = float(rng.uniform(config.scale_min, config.scale_max))
    crop_u = float(rng.random())
    crop_v = float(rng.random())
    flip_h = bool(rng.integers(0, 2)) if config.allow_flip_h else False
    flip_v = bool(rng.integers(0, 2)) if config.allow_flip_v else False
    brightness = float(
        rng.uniform(1.0 - config.brightness_range, 1.0 + config.brightness_range)
    )
    contrast = float(rng.uniform(1.0 - config.contrast_range, 1.0 + config.contrast_range))
    return PreprocessParams(scale, crop_u, crop_v, flip_h, flip_v, brightness, contrast)


def _map_offset(u: float, slack: int) -> int:
    # uniform over {0 .. slack} for u in [0, 1)
    return min(slack, int(u * (slack + 1)))


def _scaled_dims(w: int, h: int, short_target: int) -> tuple[int, int]:
    if w <= h:
        return short_target, max(short_target, round(h * short_target / w))
    return max(short_target, round(w * short_target / h)), short_target


def _blur_gray(gray: Image8, config: PreprocessConfig) -> Image8:
    s = config.desired_size
    low = config.lowres_size
    return imaging.resize_cubic(imaging.resize_area(gray, low, low), s, s)


def make_pair(
    target: Image8, config: PreprocessConfig, params: PreprocessParams
) -> tuple[Image8, Image8]:
    """Synthesize one (input, target_crop) training pair.

    Chain: isotropic cubic rescale (short side = desired_size * scale),
    random crop, optional flips, grayscale, 24x area-down / cubic-up blur,
    brightness, contrast. Returns (1-channel input, 3-channel target crop),
    both desired_size square.
    """
    if target.channels != 3:
        raise ValueError("make_pair expects a 3-channel target")
    s = config.desired_size
    short_target = round(s * params.scale)
    if min(target.width, target.height) < s:
        raise ValueError(
            f"target {target.width}x{target.height} smaller than desired_size {s}"
        )
    new_w, new_h = _scaled_dims(target.width, target.height, short_target)
    scaled = imaging.resize_cubic(target, new_w, new_h)

    x = _map_offset(params.crop_u, new_w - s)
    y = _map_offset(params.crop_v, new_h - s)
    target_crop = imaging.crop(scaled, x, y, s, s)
    if params.flip_h or params.flip_v:
        target_crop = imaging.flip(target_crop, params.flip_h, params.flip_v)

    gray = imaging.to_grayscale(target_crop)
    blurred = _blur_gray(gray, config)
    inp = imaging.adjust_contrast(
        imaging.adjust_brightness(blurred, params.brightness), params.contrast
    )
    return inp, target_crop


def prepare_frame(frame: Image8, config: PreprocessConfig) -> Image8:
    """Deterministic live-path head: center square crop + cubic resize to
    desired_size. Kept separate so composites can show the color view."""
    side = min(frame.width, frame.height)
    x = (frame.width - side) // 2
    y = (frame.height - side) // 2
    square = imaging.crop(frame, x, y, side, side)
    return imaging.resize_cubic(square, config.desired_size, config.desired_size)


def live_from_prepared(prepared: Image8, config: PreprocessConfig, live: LiveParams) -> Image8:
    """Tail of the live path on an already prepared (square, color) frame."""
    gray = prepared if prepared.channels == 1 else imaging.to_grayscale(prepared)
    blurred = _blur_gray(gray, config)
    out = imaging.adjust_contrast(
        imaging.adjust_brightness(blurred, live.brightness), live.contrast
    )
    return imaging.apply_levels(out, live.norm_low, live.norm_high)


def apply_live(frame: Image8, config: PreprocessConfig, live: LiveParams) -> Image8:
    """Full deterministic inference-time preprocessing of a camera frame."""
    if frame.channels != 3:
        raise ValueError("apply_live expects a 3-channel frame")
    return live_from_prepared(prepare_frame(frame, config), config, live)
