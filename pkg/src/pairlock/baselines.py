"""Rule-based carried/not-carried classifiers driven by keypoints or box overlap."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .geometry import contains_point, iou
from .pipeline import Detection

HIFD_ALPHA = 0.3
OHFD_BETA = 0.5
MIN_KEYPOINTS = 2


class KeypointKind(str, enum.Enum):
    HAND = "hand"
    OTHER = "other"


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float
    kind: KeypointKind = KeypointKind.HAND

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KeypointKind(self.kind))
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"keypoint confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class OhfdResult:
    carried: bool
    carrier_index: int | None


def hifd_classify(firearm: Detection, crop_keypoints: Sequence[Keypoint], alpha: float = HIFD_ALPHA) -> bool:
    """Carried iff at least two keypoints found in the firearm crop score strictly above ``alpha``.

    ``firearm`` is unused by the rule itself; the keypoints are assumed to
    come from a hand detector run on its crop.
    """
    del firearm
    return sum(kp.confidence > alpha for kp in crop_keypoints) >= MIN_KEYPOINTS


def hcfd_classify(
    firearm: Detection, body_keypoints: Sequence[Keypoint], min_confidence: float = 0.0
) -> bool:
    """Carried iff at least two hand keypoints (image frame) lie inside the firearm box."""
    inside = 0
    for kp in body_keypoints:
        if kp.kind is not KeypointKind.HAND or kp.confidence < min_confidence:
            continue
        if contains_point(firearm.box, kp.x, kp.y):
            inside += 1
    return inside >= MIN_KEYPOINTS


def ohfd_associate(
    firearms: Sequence[Detection], humans: Sequence[Detection], beta: float = OHFD_BETA
) -> list[OhfdResult]:
    """Per firearm: the human with the highest IoU carries it if that IoU is at least ``beta``."""
    out = []
    for f in firearms:
        best, best_iou = None, -1.0
        for i, h in enumerate(humans):
            v = iou(f.box, h.box)
            if v > best_iou:
                best, best_iou = i, v
        if best is not None and best_iou >= beta:
            out.append(OhfdResult(True, best))
        else:
            out.append(OhfdResult(False, None))
    return out
