"""Image container, color conversion, resize and crop, plus PPM/PGM I/O."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .geometry import BoundingBox
from .nn.layers import interpolation_matrix


class ColorSpace(str, enum.Enum):
    GRAY = "gray"
    RGB = "rgb"
    YCBCR = "ycbcr"

    @property
    def channels(self) -> int:
        return 1 if self is ColorSpace.GRAY else 3


class DegenerateRegionError(ValueError):
    """A crop box has no pixels left after rounding and clipping."""


# BT.601 full-range, chroma offset +0.5 so every output stays in [0, 1]
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCBCR_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


@dataclass(frozen=True)
class Image:
    """Pixels as an (H, W, C) float64 array with values in [0, 1]."""

    data: np.ndarray
    color_space: ColorSpace

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image data must be (H, W, C), got shape {data.shape}")
        cs = ColorSpace(self.color_space)
        if data.shape[2] != cs.channels:
            raise ValueError(f"{cs.value} image needs {cs.channels} channels, got {data.shape[2]}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be nonempty")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        data = data.copy() if data is self.data else data
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "color_space", cs)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def planes(self) -> np.ndarray:
        """Channel-first (C, H, W) copy."""
        return np.ascontiguousarray(self.data.transpose(2, 0, 1))


def _luma(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    # neutral pixels map exactly, so gray -> rgb -> gray is lossless
    return np.where((r == g) & (g == b), r, y)


def _to_rgb(img: Image) -> np.ndarray:
    if img.color_space is ColorSpace.RGB:
        return img.data
    if img.color_space is ColorSpace.GRAY:
        return np.repeat(img.data, 3, axis=2)
    return np.clip((img.data - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T, 0.0, 1.0)


def convert_color(img: Image, target: ColorSpace | str) -> Image:
    target = ColorSpace(target)
    if target is img.color_space:
        return img
    if target is ColorSpace.GRAY:
        if img.color_space is ColorSpace.YCBCR:
            return Image(img.data[:, :, :1].copy(), target)
        return Image(np.clip(_luma(img.data), 0.0, 1.0), target)
    if target is ColorSpace.YCBCR and img.color_space is ColorSpace.GRAY:
        # lossy inverse: luma carried in Y, neutral chroma
        h, w, _ = img.data.shape
        out = np.empty((h, w, 3))
        out[:, :, 0] = img.data[:, :, 0]
        out[:, :, 1:] = 0.5
        return Image(out, target)
    rgb = _to_rgb(img)
    if target is ColorSpace.RGB:
        return Image(rgb.copy(), target)
    ycc = rgb @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET
    ycc[..., 0] = _luma(rgb)
    return Image(np.clip(ycc, 0.0, 1.0), target)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def shorter_side_dims(width: int, height: int, target: int) -> tuple[int, int]:
    """(new_width, new_height) with the shorter side equal to ``target``."""
    if target < 1:
        raise ValueError(f"resize target must be >= 1, got {target}")
    if height <= width:
        return max(1, _round_half_up(width * target / height)), target
    return target, max(1, _round_half_up(height * target / width))


def resize(img: Image, width: int, height: int) -> Image:
    if (width, height) == (img.width, img.height):
        return img
    rh = interpolation_matrix(img.height, height)
    rw = interpolation_matrix(img.width, width)
    out = np.einsum("ih,hwc,jw->ijc", rh, img.data, rw, optimize=True)
    return Image(np.clip(out, 0.0, 1.0), img.color_space)


def resize_shorter_side(img: Image, target: int) -> Image:
    """Bilinear, aspect-preserving resize so ``min(width, height) == target``."""
    w, h = shorter_side_dims(img.width, img.height, target)
    return resize(img, w, h)


def crop_region(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer pixel region ``(x0, y0, x1, y1)`` of ``box`` rounded and clipped to the image."""
    x0 = min(max(_round_half_up(box.x_min), 0), width)
    y0 = min(max(_round_half_up(box.y_min), 0), height)
    x1 = min(max(_round_half_up(box.x_max), 0), width)
    y1 = min(max(_round_half_up(box.y_max), 0), height)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateRegionError(
            f"crop box {box.to_list()} is empty inside a {width}x{height} image"
        )
    return x0, y0, x1, y1


def crop(img: Image, box: BoundingBox) -> Image:
    x0, y0, x1, y1 = crop_region(box, img.width, img.height)
    if (x0, y0, x1, y1) == (0, 0, img.width, img.height):
        return img
    return Image(img.data[y0:y1, x0:x1].copy(), img.color_space)


def read_image(path: str | Path) -> Image:
    """Load a binary PPM (P6) as RGB or PGM (P5) as gray, scaled to [0, 1]."""
    with PILImage.open(path) as pil:
        if pil.format != "PPM":
            raise ValueError(f"{path}: only PPM/PGM images are supported, got {pil.format}")
        if pil.mode == "L":
            return Image(np.asarray(pil, dtype=np.float64) / 255.0, ColorSpace.GRAY)
        return Image(np.asarray(pil.convert("RGB"), dtype=np.float64) / 255.0, ColorSpace.RGB)


def write_image(path: str | Path, img: Image) -> None:
    """Write gray images as PGM and everything else as RGB PPM (maxval 255)."""
    if img.color_space is ColorSpace.GRAY:
        arr = np.round(img.data[:, :, 0] * 255.0).astype(np.uint8)
        PILImage.fromarray(arr, mode="L").save(path, format="PPM")
    else:
        rgb = _to_rgb(img)
        arr = np.round(rgb * 255.0).astype(np.uint8)
        PILImage.fromarray(arr, mode="RGB").save(path, format="PPM")
