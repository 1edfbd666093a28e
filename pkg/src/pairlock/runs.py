"""Scene-level workflows shared by the CLI and the test suites."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Mapping, Sequence

from .baselines import hcfd_classify, hifd_classify, ohfd_associate
from .datasets import SceneKeypoints, SceneRecord
from .evaluation import FirearmDecision
from .geometry import iou
from .imaging import Image
from .model import CarrierNet, ModelConfig, TrainingSample
from .pipeline import (
    DETECTION_THRESHOLD,
    Detection,
    ScoredPair,
    assign_training_labels,
    enumerate_pairs,
    predict_scene,
    split_detections,
    training_samples,
)


def worker_count() -> int:
    """``PAIRLOCK_THREADS`` if set, else the number of usable CPUs."""
    env = os.environ.get("PAIRLOCK_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"PAIRLOCK_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"PAIRLOCK_THREADS must be a positive integer, got {env!r}")
        return n
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_training_set(
    records: Sequence[SceneRecord],
    image_of: Callable[[SceneRecord], Image],
    config: ModelConfig,
    detections: Mapping[str, Sequence[Detection]] | None = None,
    score_threshold: float = DETECTION_THRESHOLD,
) -> list[TrainingSample]:
    """Labeled aPBB samples for every pair in every scene (GT boxes unless detections are given)."""
    out = []
    for r in records:
        dets = r.gt_detections() if detections is None else detections.get(r.scene_id, [])
        humans, firearms = split_detections(dets)
        pairs = assign_training_labels(enumerate_pairs(humans, firearms), r, score_threshold)
        out.extend(training_samples(image_of(r), pairs, config))
    return out


def infer_scenes(
    net: CarrierNet,
    scene_ids: Sequence[str],
    image_of: Callable[[str], Image],
    detections: Mapping[str, Sequence[Detection]],
    use_maxout: bool = True,
    include_human_score: bool = False,
    maxout_key: str = "hold_prob",
    workers: int | None = None,
) -> dict[str, list[ScoredPair]]:
    """Scored pairs per scene; scenes fan out over threads but results keep input order."""

    def one(sid: str) -> list[ScoredPair]:
        return predict_scene(
            net, image_of(sid), detections.get(sid, []), use_maxout, include_human_score, maxout_key
        )

    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(scene_ids) <= 1:
        results = [one(s) for s in scene_ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, scene_ids))
    return dict(zip(scene_ids, results))


def _align_to_gt(record: SceneRecord, firearms: Sequence[Detection], decisions: Sequence[FirearmDecision]):
    """Map decisions made on detected firearms onto GT firearm indices (IoU > 0.5, same class)."""
    out: list[FirearmDecision | None] = []
    for cls, box in record.firearms:
        best, best_iou = None, 0.5
        for d, dec in zip(firearms, decisions):
            v = iou(d.box, box)
            if d.cls is cls and v > best_iou:
                best, best_iou = dec, v
        out.append(best)
    return out


def baseline_decisions(
    method: str,
    records: Sequence[SceneRecord],
    detections: Mapping[str, Sequence[Detection]] | None = None,
    keypoints: Mapping[str, SceneKeypoints] | None = None,
    alpha: float = 0.3,
    beta: float = 0.5,
    min_confidence: float = 0.0,
) -> dict[str, list[FirearmDecision | None]]:
    """Per-GT-firearm decisions of a rule baseline; crop keypoints are indexed by detected firearm."""
    if method not in ("hifd", "hcfd", "ohfd"):
        raise ValueError(f"unknown baseline {method!r}")
    if method in ("hifd", "hcfd") and keypoints is None:
        raise ValueError(f"{method} needs a keypoints file")
    out = {}
    for r in records:
        dets = r.gt_detections() if detections is None else detections.get(r.scene_id, [])
        humans, firearms = split_detections(dets)
        kp = (keypoints or {}).get(r.scene_id, SceneKeypoints())
        if method == "ohfd":
            decisions = [
                FirearmDecision(res.carried, None if res.carrier_index is None else humans[res.carrier_index].box)
                for res in ohfd_associate(firearms, humans, beta)
            ]
        elif method == "hifd":
            decisions = [FirearmDecision(hifd_classify(f, kp.crops.get(i, []), alpha)) for i, f in enumerate(firearms)]
        else:
            decisions = [FirearmDecision(hcfd_classify(f, kp.image, min_confidence)) for f in firearms]
        out[r.scene_id] = _align_to_gt(r, firearms, decisions)
    return out


def model_decisions(
    records: Sequence[SceneRecord], predictions: Mapping[str, Sequence[ScoredPair]]
) -> dict[str, list[FirearmDecision | None]]:
    """Carried decisions from scored pairs: a firearm is carried if one of its pairs predicts hold."""
    out = {}
    for r in records:
        by_firearm: dict[int, tuple[Detection, FirearmDecision]] = {}
        for sp in predictions.get(r.scene_id, []):
            fi = sp.pair.firearm_index
            if fi not in by_firearm:
                by_firearm[fi] = (sp.pair.firearm, FirearmDecision(False))
            if sp.predicts_hold:
                by_firearm[fi] = (sp.pair.firearm, FirearmDecision(True, sp.pair.human.box))
        order = sorted(by_firearm)
        out[r.scene_id] = _align_to_gt(r, [by_firearm[i][0] for i in order], [by_firearm[i][1] for i in order])
    return out

