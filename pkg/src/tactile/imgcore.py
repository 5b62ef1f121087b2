"""Image containers and the reference-difference primitives used everywhere else.

Frames hold float RGB in [0, 1] with shape (height, width, 3), row-major.
Pixel coordinates are (x, y) = (column, row).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, ShapeMismatchError

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 480
DEFAULT_PIXEL_SCALE = 0.024  # mm / pixel


class PixelCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    pixel_scale: float = DEFAULT_PIXEL_SCALE

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] == 0 or px.shape[1] == 0:
            raise InvalidInputError(f"frame pixels must have shape (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise InvalidInputError("frame channel values must lie in [0, 1]")
        if not self.pixel_scale > 0:
            raise InvalidInputError(f"pixel_scale must be positive, got {self.pixel_scale}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape[:2]

    def gray(self) -> np.ndarray:
        return self.pixels.mean(axis=2)


@dataclass(frozen=True)
class DeltaImage:
    deltas: np.ndarray
    intensity: np.ndarray

    @classmethod
    def from_deltas(cls, deltas: np.ndarray) -> "DeltaImage":
        deltas = np.asarray(deltas, dtype=np.float64)
        intensity = np.sqrt(np.sum(deltas * deltas, axis=2))
        deltas.setflags(write=False)
        intensity.setflags(write=False)
        return cls(deltas, intensity)

    @property
    def width(self) -> int:
        return self.deltas.shape[1]

    @property
    def height(self) -> int:
        return self.deltas.shape[0]

    @property
    def shape(self):
        return self.deltas.shape[:2]


def color_delta(current: Frame, reference: Frame) -> DeltaImage:
    """Per-pixel signed color change of ``current`` relative to ``reference``."""
    if current.pixels.shape != reference.pixels.shape:
        raise ShapeMismatchError(
            f"frame shapes differ: current {current.pixels.shape[:2]} vs reference {reference.pixels.shape[:2]}"
        )
    if not np.isclose(current.pixel_scale, reference.pixel_scale, rtol=1e-9, atol=0.0):
        raise ShapeMismatchError(
            f"pixel scales differ: {current.pixel_scale} vs {reference.pixel_scale}"
        )
    return DeltaImage.from_deltas(current.pixels - reference.pixels)


def max_intensity_pixel(delta: DeltaImage) -> PixelCoord:
    # argmax returns the first occurrence in row-major order, which is the tie-break.
    flat = int(np.argmax(delta.intensity))
    y, x = divmod(flat, delta.width)
    return PixelCoord(x, y)


def window_origin(shape, center: PixelCoord, side: int):
    """Top-left (x0, y0) of a side x side window centered at ``center``, shifted to fit."""
    h, w = shape[:2]
    if side <= 0:
        raise InvalidInputError(f"window side must be positive, got {side}")
    if side > w or side > h:
        raise InvalidInputError(f"window side {side} exceeds image size {w}x{h}")
    x0 = min(max(int(center[0]) - side // 2, 0), w - side)
    y0 = min(max(int(center[1]) - side // 2, 0), h - side)
    return x0, y0


ImageLike = Union[Frame, DeltaImage, np.ndarray]


def _as_array(image: ImageLike) -> np.ndarray:
    if isinstance(image, Frame):
        return image.pixels
    if isinstance(image, DeltaImage):
        return image.intensity
    return np.asarray(image)


def crop_window(image: ImageLike, center: PixelCoord, side: int) -> np.ndarray:
    """Crop a side x side patch; windows crossing the border are translated, never shrunk.

    A DeltaImage is cropped on its intensity channel (the gray-scale change image).
    """
    arr = _as_array(image)
    x0, y0 = window_origin(arr.shape, center, side)
    return arr[y0:y0 + side, x0:x0 + side]


def local_darkness(rgb: np.ndarray, size: int = 15) -> np.ndarray:
    """Relative darkness of each pixel against its local bright background.

    The background is a gray-scale morphological closing, which erases dark
    blobs narrower than ``size`` while preserving smooth shading ramps.
    """
    gray = np.asarray(rgb, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    background = ndimage.grey_closing(gray, size=(size, size), mode="nearest")
    with np.errstate(divide="ignore", invalid="ignore"):
        dark = (background - gray) / np.maximum(background, 1e-6)
    return np.clip(dark, 0.0, 1.0)


def dark_spot_mask(rgb: np.ndarray, size: int = 15, contrast: float = 0.12, grow: int = 1) -> np.ndarray:
    """Boolean mask of marker-like dark spots, dilated by ``grow`` pixels."""
    mask = local_darkness(rgb, size) > contrast
    if grow > 0:
        mask = ndimage.binary_dilation(mask, iterations=grow)
    return mask


def read_png(path, pixel_scale: float = DEFAULT_PIXEL_SCALE) -> Frame:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Frame(arr, pixel_scale)


def write_png(frame: Frame, path) -> None:
    from PIL import Image

    arr = np.clip(np.rint(frame.pixels * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG", optimize=False)
