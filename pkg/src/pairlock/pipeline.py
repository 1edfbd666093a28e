"""Pair enumeration, training labels, aPBB construction, scoring and maxout."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import BoundingBox, iou, union_box
from .imaging import Image, convert_color, crop, crop_region, resize_shorter_side
from .masks import (
    AttentionStack,
    LocalityMap,
    ObjectClass,
    assemble_apbb,
    build_attention_channels,
    build_locality_target,
    select_mask_planes,
    to_local,
)
from .model import GUN_HUMAN, NO_INTERACTION, RIFLE_HUMAN, CarrierNet, ModelConfig, TrainingSample

DETECTION_THRESHOLD = 0.5
MATCH_IOU = 0.5


@dataclass(frozen=True)
class Detection:
    cls: ObjectClass
    box: BoundingBox
    score: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "cls", ObjectClass(self.cls))
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")


def hold_label(cls: ObjectClass) -> int:
    if cls is ObjectClass.GUN:
        return GUN_HUMAN
    if cls is ObjectClass.RIFLE:
        return RIFLE_HUMAN
    raise ValueError(f"{cls.value} is not a firearm class")


@dataclass(frozen=True)
class PairInstance:
    """One human-firearm pair; indices point into the scene's detection lists."""

    human: Detection
    firearm: Detection
    human_index: int
    firearm_index: int
    pbb: BoundingBox
    label: int | None = None

    def __post_init__(self) -> None:
        if self.human.cls is not ObjectClass.HUMAN:
            raise ValueError("pair human must be a human detection")
        if not self.firearm.cls.is_firearm:
            raise ValueError("pair firearm must be a gun or rifle detection")
        if self.label is not None and self.label not in (hold_label(self.firearm.cls), NO_INTERACTION):
            raise ValueError(f"label {self.label} is inconsistent with firearm class {self.firearm.cls.value}")


@dataclass(frozen=True)
class ScoredPair:
    pair: PairInstance
    hold_prob: float
    final_score: float
    interacting: bool = True
    # classifier output (gun_hold, rifle_hold, no_interaction) when known
    probs: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        for name in ("hold_prob", "final_score"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def predicts_hold(self) -> bool:
        """True if the pair survived maxout and the hold class beats no-interaction."""
        if not self.interacting:
            return False
        if self.probs is None:
            return self.hold_prob > 0.5
        return self.hold_prob > self.probs[NO_INTERACTION]


def enumerate_pairs(humans: Sequence[Detection], firearms: Sequence[Detection]) -> list[PairInstance]:
    """All human x firearm pairs, human index major."""
    return [
        PairInstance(h, f, hi, fi, union_box(h.box, f.box))
        for hi, h in enumerate(humans)
        for fi, f in enumerate(firearms)
    ]


def split_detections(dets: Iterable[Detection]) -> tuple[list[Detection], list[Detection]]:
    humans, firearms = [], []
    for d in dets:
        (humans if d.cls is ObjectClass.HUMAN else firearms).append(d)
    return humans, firearms


def _best_match(box: BoundingBox, candidates: Sequence[BoundingBox], thr: float) -> int | None:
    best, best_iou = None, thr
    for i, c in enumerate(candidates):
        v = iou(box, c)
        if v > best_iou:
            best, best_iou = i, v
    return best


def assign_training_labels(
    pairs: Sequence[PairInstance],
    gt,
    score_threshold: float = DETECTION_THRESHOLD,
    iou_thr: float = MATCH_IOU,
) -> list[PairInstance]:
    """Label pairs against a ground-truth scene.

    ``gt`` needs ``humans`` (boxes), ``firearms`` ((class, box) pairs) and
    ``carry_pairs``. Pairs with a member scoring at or below
    ``score_threshold`` are dropped. Each member is matched to its
    highest-IoU GT object with IoU strictly above ``iou_thr``; the firearm
    match must also agree on class.
    """
    carry = {tuple(p) for p in gt.carry_pairs}
    gt_humans = list(gt.humans)
    out = []
    for pair in pairs:
        if pair.human.score <= score_threshold or pair.firearm.score <= score_threshold:
            continue
        label = NO_INTERACTION
        h = _best_match(pair.human.box, gt_humans, iou_thr)
        same_class = [
            (i, box) for i, (cls, box) in enumerate(gt.firearms) if ObjectClass(cls) is pair.firearm.cls
        ]
        f_local = _best_match(pair.firearm.box, [b for _, b in same_class], iou_thr)
        if h is not None and f_local is not None and (h, same_class[f_local][0]) in carry:
            label = hold_label(pair.firearm.cls)
        out.append(replace(pair, label=label))
    return out


@dataclass(frozen=True)
class PreparedPair:
    apbb: AttentionStack
    g_map: LocalityMap
    region: BoundingBox


def build_sample(image: Image, pair: PairInstance, config: ModelConfig) -> PreparedPair:
    """Crop the PBB, convert color, resize and attach attention masks and the locality target."""
    x0, y0, x1, y1 = crop_region(pair.pbb, image.width, image.height)
    region = BoundingBox(float(x0), float(y0), float(x1), float(y1))
    patch = crop(image, region)
    patch = resize_shorter_side(convert_color(patch, config.color_space), config.resize_target)
    w, h = patch.width, patch.height
    masks = build_attention_channels(region, pair.human.box, pair.firearm.box, pair.firearm.cls, w, h)
    apbb = assemble_apbb(patch, select_mask_planes(masks, config.attention_mode))
    g_map = build_locality_target(
        w,
        h,
        [
            (pair.firearm.cls, to_local(pair.firearm.box, region, w, h)),
            (ObjectClass.HUMAN, to_local(pair.human.box, region, w, h)),
        ],
        sigma_fraction=config.sigma_fraction,
    )
    return PreparedPair(apbb, g_map, region)


def training_samples(image: Image, pairs: Sequence[PairInstance], config: ModelConfig) -> list[TrainingSample]:
    out = []
    for pair in pairs:
        if pair.label is None:
            raise ValueError("training pairs must be labeled")
        prep = build_sample(image, pair, config)
        out.append(TrainingSample(prep.apbb, pair.label, prep.g_map))
    return out


def score_pair(
    pair: PairInstance,
    hold_prob: float,
    include_human_score: bool = False,
    probs: Sequence[float] | None = None,
) -> ScoredPair:
    """``final_score = firearm.score * hold_prob`` (times ``human.score`` if requested)."""
    score = pair.firearm.score * hold_prob
    if include_human_score:
        score *= pair.human.score
    return ScoredPair(
        pair,
        float(hold_prob),
        float(min(max(score, 0.0), 1.0)),
        True,
        None if probs is None else tuple(float(p) for p in probs),
    )


def maxout(scored: Sequence[ScoredPair], key: str = "hold_prob") -> list[ScoredPair]:
    """Keep one interacting pair per firearm; the rest become NoInteraction with score 0.

    The winner has the largest ``key`` (``hold_prob`` or ``final_score``);
    ties go to the lowest human index. Output order matches input order.
    """
    if key not in ("hold_prob", "final_score"):
        raise ValueError(f"maxout key must be hold_prob or final_score, got {key!r}")
    winners: dict[int, ScoredPair] = {}
    for sp in scored:
        cur = winners.get(sp.pair.firearm_index)
        if cur is None:
            winners[sp.pair.firearm_index] = sp
            continue
        a, b = getattr(sp, key), getattr(cur, key)
        if a > b or (a == b and sp.pair.human_index < cur.pair.human_index):
            winners[sp.pair.firearm_index] = sp
    out = []
    for sp in scored:
        if winners[sp.pair.firearm_index] is sp:
            out.append(sp)
        else:
            out.append(replace(sp, interacting=False, final_score=0.0))
    return out


def predict_scene(
    net: CarrierNet,
    image: Image,
    detections: Sequence[Detection],
    use_maxout: bool = True,
    include_human_score: bool = False,
    maxout_key: str = "hold_prob",
) -> list[ScoredPair]:
    """Score every human-firearm pair of one image."""
    humans, firearms = split_detections(detections)
    scored = []
    for pair in enumerate_pairs(humans, firearms):
        apbb = build_sample(image, pair, net.config).apbb
        probs = net.forward(apbb, training=False, with_decoder=False).probs
        hold = float(probs[hold_label(pair.firearm.cls)])
        if not math.isfinite(hold):
            raise FloatingPointError("classifier produced a non-finite probability")
        scored.append(score_pair(pair, hold, include_human_score, np.asarray(probs)))
    return maxout(scored, maxout_key) if use_maxout else scored
