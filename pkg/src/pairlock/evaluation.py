"""Hold-interaction AP with dual-IoU matching, and carried/not-carried accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import BoundingBox, iou
from .masks import ObjectClass

FIREARM_CLASSES = (ObjectClass.GUN, ObjectClass.RIFLE)
AP_METHODS = ("all_point", "envelope", "11point")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthScene:
    scene_id: str
    humans: tuple[BoundingBox, ...]
    firearms: tuple[tuple[ObjectClass, BoundingBox], ...]
    carry_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "humans", tuple(self.humans))
        object.__setattr__(self, "firearms", tuple((ObjectClass(c), b) for c, b in self.firearms))
        object.__setattr__(self, "carry_pairs", tuple((int(h), int(f)) for h, f in self.carry_pairs))
        seen = set()
        for h, f in self.carry_pairs:
            if not (0 <= h < len(self.humans)) or not (0 <= f < len(self.firearms)):
                raise EvaluationError(f"scene {self.scene_id}: carry pair ({h}, {f}) out of range")
            if f in seen:
                raise EvaluationError(f"scene {self.scene_id}: firearm {f} appears in two carry pairs")
            seen.add(f)

    def carrier_of(self, firearm_index: int) -> int | None:
        for h, f in self.carry_pairs:
            if f == firearm_index:
                return h
        return None


@dataclass(frozen=True)
class MatchedPrediction:
    scene_id: str
    cls: ObjectClass
    score: float
    tp: bool


@dataclass
class MatchResult:
    matches: list[MatchedPrediction]
    num_gt: dict[ObjectClass, int]

    def flags(self, cls: ObjectClass | None = None) -> list[bool]:
        return [m.tp for m in self.matches if cls is None or m.cls is cls]


def _index_gt(gt: Sequence[GroundTruthScene] | Mapping[str, GroundTruthScene]) -> dict[str, GroundTruthScene]:
    if isinstance(gt, Mapping):
        return dict(gt)
    out = {}
    for scene in gt:
        if scene.scene_id in out:
            raise EvaluationError(f"duplicate ground-truth scene id {scene.scene_id!r}")
        out[scene.scene_id] = scene
    return out


def match_pairs(
    predictions: Mapping[str, Sequence],
    gt: Sequence[GroundTruthScene] | Mapping[str, GroundTruthScene],
    iou_thr: float = 0.5,
) -> MatchResult:
    """Greedy matching of interacting pairs to GT carry pairs in descending score order.

    ``predictions`` maps scene id to scored pairs. A prediction is a true
    positive iff an unused GT carry pair of the same firearm class overlaps
    both its human and its firearm with IoU > ``iou_thr``; among several
    candidates the one with the highest ``min(IoU_h, IoU_f)`` is taken.
    Equal scores keep scene order, then list order.
    """
    scenes = _index_gt(gt)
    num_gt = {c: 0 for c in FIREARM_CLASSES}
    for scene in scenes.values():
        for _, f in scene.carry_pairs:
            num_gt[scene.firearms[f][0]] += 1

    flat = []
    for scene_id, pairs in predictions.items():
        if scene_id not in scenes:
            raise EvaluationError(f"prediction scene {scene_id!r} has no ground truth")
        for sp in pairs:
            if sp.interacting:
                flat.append((scene_id, sp))
    order = sorted(range(len(flat)), key=lambda i: -flat[i][1].final_score)

    used: set[tuple[str, int]] = set()
    matches = []
    for i in order:
        scene_id, sp = flat[i]
        scene = scenes[scene_id]
        cls = sp.pair.firearm.cls
        best, best_q = None, -1.0
        for k, (h, f) in enumerate(scene.carry_pairs):
            if (scene_id, k) in used or scene.firearms[f][0] is not cls:
                continue
            iou_h = iou(sp.pair.human.box, scene.humans[h])
            iou_f = iou(sp.pair.firearm.box, scene.firearms[f][1])
            if iou_h > iou_thr and iou_f > iou_thr and min(iou_h, iou_f) > best_q:
                best, best_q = k, min(iou_h, iou_f)
        if best is not None:
            used.add((scene_id, best))
        matches.append(MatchedPrediction(scene_id, cls, sp.final_score, best is not None))
    return MatchResult(matches, num_gt)


def average_precision(flags: Sequence[bool], num_gt: int, method: str = "all_point") -> float | None:
    """AP of a score-ordered TP/FP sequence; ``None`` when there is no ground truth.

    ``all_point`` sums precision at each TP and divides by ``num_gt``.
    ``envelope`` uses the monotone precision envelope (VOC 2010+) and
    ``11point`` samples that envelope at recall 0, 0.1, ..., 1.
    """
    if method not in AP_METHODS:
        raise ValueError(f"unknown AP method {method!r}; choose from {AP_METHODS}")
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    if num_gt == 0:
        return None
    tp = np.cumsum(np.asarray(flags, dtype=bool), dtype=np.int64)
    if tp.size and tp[-1] > num_gt:
        raise ValueError(f"{tp[-1]} true positives exceed num_gt={num_gt}")
    if not tp.size:
        return 0.0
    precision = tp / np.arange(1, tp.size + 1)
    is_tp = np.asarray(flags, dtype=bool)
    if method == "all_point":
        return float(precision[is_tp].sum() / num_gt)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    recall = tp / num_gt
    if method == "envelope":
        return float(envelope[is_tp].sum() / num_gt)
    total = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        reached = recall >= r - 1e-12
        total += envelope[reached].max() if reached.any() else 0.0
    return float(total / 11.0)


@dataclass
class EvalReport:
    ap_gun_hold: float | None = None
    ap_rifle_hold: float | None = None
    ap_hold: float | None = None
    ap_hold_pooled: float | None = None
    accuracy_gun: float | None = None
    accuracy_rifle: float | None = None
    accuracy_overall: float | None = None
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "ap_gun_hold": self.ap_gun_hold,
            "ap_rifle_hold": self.ap_rifle_hold,
            "ap_hold": self.ap_hold,
            "ap_hold_pooled": self.ap_hold_pooled,
            "accuracy_gun": self.accuracy_gun,
            "accuracy_rifle": self.accuracy_rifle,
            "accuracy_overall": self.accuracy_overall,
            "counts": self.counts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        data = dict(data)
        data.pop("v", None)
        return cls(**data)


def _fmt(v: float | None, scale: float = 100.0) -> str:
    return "-" if v is None else f"{v * scale:.1f}"


def render_ap_table(rows: Mapping[str, EvalReport]) -> str:
    """Aligned table with one row per variant (e.g. with / without maxout)."""
    header = ("variant", "AP_Ghold", "AP_Rhold", "AP_hold", "pooled")
    body = [
        (name, _fmt(r.ap_gun_hold), _fmt(r.ap_rifle_hold), _fmt(r.ap_hold), _fmt(r.ap_hold_pooled))
        for name, r in rows.items()
    ]
    return _render([header, *body])


def render_accuracy_table(rows: Mapping[str, EvalReport]) -> str:
    header = ("method", "gun %", "rifle %", "overall %")
    body = [
        (name, _fmt(r.accuracy_gun, 1.0), _fmt(r.accuracy_rifle, 1.0), _fmt(r.accuracy_overall, 1.0))
        for name, r in rows.items()
    ]
    return _render([header, *body])


def _render(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for n, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def evaluate_hold(
    predictions: Mapping[str, Sequence],
    gt: Sequence[GroundTruthScene] | Mapping[str, GroundTruthScene],
    iou_thr: float = 0.5,
    method: str = "all_point",
) -> EvalReport:
    """Per-class AP_hold, their mean over defined classes, and pooled AP."""
    result = match_pairs(predictions, gt, iou_thr)
    aps = {c: average_precision(result.flags(c), result.num_gt[c], method) for c in FIREARM_CLASSES}
    defined = [v for v in aps.values() if v is not None]
    pooled = average_precision(result.flags(), sum(result.num_gt.values()), method)
    counts = {}
    for c in FIREARM_CLASSES:
        flags = result.flags(c)
        counts[c.value] = {"tp": sum(flags), "fp": len(flags) - sum(flags), "num_gt": result.num_gt[c]}
    return EvalReport(
        ap_gun_hold=aps[ObjectClass.GUN],
        ap_rifle_hold=aps[ObjectClass.RIFLE],
        ap_hold=float(np.mean(defined)) if defined else None,
        ap_hold_pooled=pooled,
        counts=counts,
    )


@dataclass(frozen=True)
class FirearmDecision:
    carried: bool
    carrier: BoundingBox | None = None


def carried_accuracy(
    predictions: Mapping[str, Sequence[FirearmDecision | None]],
    gt: Sequence[GroundTruthScene] | Mapping[str, GroundTruthScene],
    carrier_aware: bool = False,
    iou_thr: float = 0.5,
) -> EvalReport:
    """Per-class and overall carried/not-carried accuracy in percent.

    ``predictions[scene_id][i]`` is the decision for GT firearm ``i``;
    missing entries count as not carried. With ``carrier_aware`` a carried
    decision is only correct if its carrier box overlaps the GT carrier with
    IoU > ``iou_thr``.
    """
    scenes = _index_gt(gt)
    for scene_id in predictions:
        if scene_id not in scenes:
            raise EvaluationError(f"prediction scene {scene_id!r} has no ground truth")
    correct = {c: 0 for c in FIREARM_CLASSES}
    total = {c: 0 for c in FIREARM_CLASSES}
    for scene_id, scene in scenes.items():
        decisions = list(predictions.get(scene_id, ()))
        for i, (cls, _) in enumerate(scene.firearms):
            d = decisions[i] if i < len(decisions) and decisions[i] is not None else FirearmDecision(False)
            carrier = scene.carrier_of(i)
            if carrier is None:
                ok = not d.carried
            elif not d.carried:
                ok = False
            elif carrier_aware:
                ok = d.carrier is not None and iou(d.carrier, scene.humans[carrier]) > iou_thr
            else:
                ok = True
            correct[cls] += int(ok)
            total[cls] += 1

    def pct(c: int, t: int) -> float | None:
        return None if t == 0 else 100.0 * c / t

    counts = {c.value: {"correct": correct[c], "total": total[c]} for c in FIREARM_CLASSES}
    return EvalReport(
        accuracy_gun=pct(correct[ObjectClass.GUN], total[ObjectClass.GUN]),
        accuracy_rifle=pct(correct[ObjectClass.RIFLE], total[ObjectClass.RIFLE]),
        accuracy_overall=pct(sum(correct.values()), sum(total.values())),
        counts=counts,
    )
