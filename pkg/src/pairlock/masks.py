"""Binary attention channels, Gaussian locality targets and aPBB assembly."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geometry import BoundingBox, area
from .imaging import Image

log = logging.getLogger(__name__)

SIGMA_FRACTION = 0.25
SIGMA_FLOOR = 0.5


class ObjectClass(str, enum.Enum):
    HUMAN = "human"
    GUN = "gun"
    RIFLE = "rifle"

    @property
    def is_firearm(self) -> bool:
        return self is not ObjectClass.HUMAN


# plane order shared by attention masks and locality maps
PLANE_INDEX = {ObjectClass.GUN: 0, ObjectClass.RIFLE: 1, ObjectClass.HUMAN: 2}


class AttentionMode(str, enum.Enum):
    NONE = "none"  # HFPL: image channels only
    MERGED = "merged"  # A-HFPL: one firearm mask + human mask
    SPLIT = "split"  # E-HFPL: gun, rifle and human masks

    @property
    def mask_planes(self) -> int:
        return {"none": 0, "merged": 2, "split": 3}[self.value]


@dataclass(frozen=True)
class AttentionStack:
    """Channel-first (K, H, W) input: image planes followed by the mask planes."""

    planes: np.ndarray
    image_channels: int

    def __post_init__(self) -> None:
        if self.planes.ndim != 3:
            raise ValueError(f"attention stack must be (K, H, W), got {self.planes.shape}")
        masks = self.planes[self.image_channels :]
        if masks.size and not np.all((masks == 0.0) | (masks == 1.0)):
            raise ValueError("attention mask planes must be binary")

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass(frozen=True)
class LocalityMap:
    """(3, H, W) gun/rifle/human presence maps in [0, 1]."""

    planes: np.ndarray

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


def pixel_centers(region: BoundingBox, out_w: int, out_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Image-space coordinates of the pixel centers of an ``out_w x out_h`` raster of ``region``."""
    xs = region.x_min + (np.arange(out_w) + 0.5) * (region.width / out_w)
    ys = region.y_min + (np.arange(out_h) + 0.5) * (region.height / out_h)
    return xs, ys


def rasterize_box(region: BoundingBox, box: BoundingBox, out_w: int, out_h: int) -> np.ndarray:
    """Binary (H, W) plane: 1 where the pixel center falls inside ``box`` clipped to ``region``."""
    clipped = box.clip(region)
    if area(clipped) <= 0.0:
        log.warning("box %s has no area inside region %s; mask left empty", box.to_list(), region.to_list())
        return np.zeros((out_h, out_w))
    xs, ys = pixel_centers(region, out_w, out_h)
    in_x = (xs >= clipped.x_min) & (xs < clipped.x_max)
    in_y = (ys >= clipped.y_min) & (ys < clipped.y_max)
    return np.outer(in_y, in_x).astype(np.float64)


def build_attention_channels(
    pbb: BoundingBox,
    human: BoundingBox,
    firearm: BoundingBox,
    firearm_class: ObjectClass | str,
    out_w: int,
    out_h: int,
) -> np.ndarray:
    """Gun, rifle and human masks as a (3, out_h, out_w) array.

    ``pbb`` is the image region the crop was taken from; the mask of the
    firearm class not present in the pair is all zeros.
    """
    firearm_class = ObjectClass(firearm_class)
    if not firearm_class.is_firearm:
        raise ValueError("firearm_class must be gun or rifle")
    planes = np.zeros((3, out_h, out_w))
    planes[PLANE_INDEX[firearm_class]] = rasterize_box(pbb, firearm, out_w, out_h)
    planes[PLANE_INDEX[ObjectClass.HUMAN]] = rasterize_box(pbb, human, out_w, out_h)
    return planes


def select_mask_planes(masks: np.ndarray, mode: AttentionMode | str) -> np.ndarray:
    """Reduce the gun/rifle/human masks to the planes a given attention mode feeds the net."""
    mode = AttentionMode(mode)
    if mode is AttentionMode.SPLIT:
        return masks
    if mode is AttentionMode.MERGED:
        return np.stack([np.maximum(masks[0], masks[1]), masks[2]])
    return masks[:0]


def to_local(box: BoundingBox, region: BoundingBox, out_w: int, out_h: int) -> BoundingBox:
    """Map an image-space box into the pixel frame of an ``out_w x out_h`` raster of ``region``."""
    sx = out_w / region.width
    sy = out_h / region.height
    local = box.clip(region).translate(-region.x_min, -region.y_min).scale(sx, sy)
    return local.clip(BoundingBox(0.0, 0.0, float(out_w), float(out_h)))


def gaussian_plane(
    box: BoundingBox,
    out_w: int,
    out_h: int,
    sigma_fraction: float = SIGMA_FRACTION,
    sigma_floor: float = SIGMA_FLOOR,
) -> np.ndarray:
    """Axis-aligned Gaussian at the box center, peak-normalized so its maximum pixel is 1."""
    cx, cy = box.center
    sx = max(box.width * sigma_fraction, sigma_floor)
    sy = max(box.height * sigma_fraction, sigma_floor)
    xs = np.arange(out_w) + 0.5
    ys = np.arange(out_h) + 0.5
    gx = np.exp(-((xs - cx) ** 2) / (2.0 * sx * sx))
    gy = np.exp(-((ys - cy) ** 2) / (2.0 * sy * sy))
    plane = np.outer(gy / gy.max(), gx / gx.max())
    return plane


def build_locality_target(
    out_w: int,
    out_h: int,
    present: Iterable[tuple[ObjectClass | str, BoundingBox]],
    sigma_fraction: float = SIGMA_FRACTION,
    sigma_floor: float = SIGMA_FLOOR,
) -> LocalityMap:
    """Ground-truth locality map; boxes are in the map's own pixel frame.

    Absent classes keep an all-zero plane. Same-class objects are combined
    with an elementwise max.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("locality map dims must be >= 1")
    planes = np.zeros((3, out_h, out_w))
    for cls, box in present:
        idx = PLANE_INDEX[ObjectClass(cls)]
        planes[idx] = np.maximum(
            planes[idx], gaussian_plane(box, out_w, out_h, sigma_fraction, sigma_floor)
        )
    return LocalityMap(planes)


def assemble_apbb(crop: Image, masks: np.ndarray) -> AttentionStack:
    """Concatenate crop planes with mask planes: ``[image..., masks...]``."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim == 2:
        masks = masks[None]
    if masks.shape[1:] != (crop.height, crop.width):
        raise ValueError(
            f"mask planes {masks.shape[1:]} do not match crop {(crop.height, crop.width)}"
        )
    planes = np.concatenate([crop.planes(), masks], axis=0)
    return AttentionStack(planes, crop.channels)
