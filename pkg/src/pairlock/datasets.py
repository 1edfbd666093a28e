"""JSON schemas for annotations, detections, keypoints and predictions, plus a synthetic scene generator.

Every file carries ``"v": 1`` at the top level. Coordinates are image pixels
with half-open extents. Image paths inside annotation files are relative to
the file's directory unless absolute.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .baselines import Keypoint, KeypointKind
from .evaluation import GroundTruthScene
from .geometry import BoundingBox, iou
from .imaging import ColorSpace, Image, write_image
from .masks import ObjectClass
from .pipeline import Detection, PairInstance, ScoredPair
from .util import strict_from_dict, to_dict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CLASS_ALIASES = {
    "human": ObjectClass.HUMAN,
    "person": ObjectClass.HUMAN,
    "pedestrian": ObjectClass.HUMAN,
    "gun": ObjectClass.GUN,
    "handgun": ObjectClass.GUN,
    "pistol": ObjectClass.GUN,
    "rifle": ObjectClass.RIFLE,
    "long_gun": ObjectClass.RIFLE,
}


class DatasetError(ValueError):
    """Base class for data-file problems."""


class SchemaError(DatasetError):
    """Malformed JSON or a structural schema violation."""


class IndexRangeError(DatasetError):
    """A carry pair or crop reference points outside its list."""


class DuplicateCarryError(DatasetError):
    """A firearm appears in more than one carry pair."""


class UnknownClassError(DatasetError):
    pass


class ValueRangeError(DatasetError):
    """A score or confidence outside [0, 1]."""


class GenerationError(RuntimeError):
    """Synthetic scene placement failed."""


# records --------------------------------------------------------------------


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    image: str
    humans: tuple[BoundingBox, ...]
    firearms: tuple[tuple[ObjectClass, BoundingBox], ...]
    carry_pairs: tuple[tuple[int, int], ...] = ()
    width: int | None = None
    height: int | None = None

    def ground_truth(self) -> GroundTruthScene:
        return GroundTruthScene(self.scene_id, self.humans, self.firearms, self.carry_pairs)

    def gt_detections(self) -> list[Detection]:
        """Ground-truth boxes as score-1 detections, humans first."""
        dets = [Detection(ObjectClass.HUMAN, b, 1.0) for b in self.humans]
        dets += [Detection(c, b, 1.0) for c, b in self.firearms]
        return dets

    def image_path(self, base: str | Path) -> Path:
        p = Path(self.image)
        return p if p.is_absolute() else Path(base) / p


@dataclass
class SceneKeypoints:
    """Image-frame keypoints and per-firearm crop-frame keypoints of one scene."""

    image: list[Keypoint] = field(default_factory=list)
    crops: dict[int, list[Keypoint]] = field(default_factory=dict)


# parsing helpers --------------------------------------------------------------


def _read_json(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    if data.get("v") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: expected schema version \"v\": {SCHEMA_VERSION}, got {data.get('v')!r}")
    scenes = data.get("scenes")
    if not isinstance(scenes, list):
        raise SchemaError(f"{path}: \"scenes\" must be a list")
    return data


def _write_json(path: str | Path, scenes: list[dict], **extra: Any) -> None:
    payload = {"v": SCHEMA_VERSION, **extra, "scenes": scenes}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def parse_class(name: Any, where: str) -> ObjectClass:
    if not isinstance(name, str) or name.lower() not in CLASS_ALIASES:
        raise UnknownClassError(f"{where}: unknown class {name!r}")
    return CLASS_ALIASES[name.lower()]


def _parse_box(value: Any, where: str, clip: BoundingBox | None = None) -> BoundingBox:
    if not isinstance(value, list) or len(value) != 4 or not all(isinstance(v, (int, float)) for v in value):
        raise SchemaError(f"{where}: box must be a list of 4 numbers, got {value!r}")
    try:
        box = BoundingBox.from_seq(value)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return box.clip(clip) if clip is not None else box


def _parse_unit(value: Any, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ValueRangeError(f"{where}: {value} is outside [0, 1]")
    return float(value)


def _scene_id(entry: Any, i: int) -> str:
    if not isinstance(entry, dict):
        raise SchemaError(f"scene #{i}: expected an object")
    sid = entry.get("id")
    if not isinstance(sid, str) or not sid:
        raise SchemaError(f"scene #{i}: missing string \"id\"")
    return sid


def _field(entry: dict, key: str, kind: type, where: str):
    if key not in entry or not isinstance(entry[key], kind):
        raise SchemaError(f"{where}: field {key!r} must be a {kind.__name__}")
    return entry[key]


# annotations ------------------------------------------------------------------


def load_annotations(path: str | Path) -> list[SceneRecord]:
    data = _read_json(path)
    out = []
    seen = set()
    for i, entry in enumerate(data["scenes"]):
        sid = _scene_id(entry, i)
        where = f"scene {sid}"
        if sid in seen:
            raise SchemaError(f"{where}: duplicate scene id")
        seen.add(sid)
        image = _field(entry, "image", str, where)
        width, height = entry.get("width"), entry.get("height")
        bounds = None
        if width is not None or height is not None:
            if not (isinstance(width, int) and isinstance(height, int) and width > 0 and height > 0):
                raise SchemaError(f"{where}: width/height must both be positive integers")
            bounds = BoundingBox(0.0, 0.0, float(width), float(height))
        humans = tuple(
            _parse_box(b, f"{where} humans[{j}]", bounds)
            for j, b in enumerate(_field(entry, "humans", list, where))
        )
        firearms = []
        for j, f in enumerate(_field(entry, "firearms", list, where)):
            fw = f"{where} firearms[{j}]"
            if not isinstance(f, dict):
                raise SchemaError(f"{fw}: expected an object")
            cls = parse_class(f.get("class"), fw)
            if not cls.is_firearm:
                raise UnknownClassError(f"{fw}: class {f.get('class')!r} is not a firearm")
            firearms.append((cls, _parse_box(f.get("box"), fw, bounds)))
        carry = []
        used = {}
        for j, pair in enumerate(entry.get("carry_pairs", [])):
            pw = f"{where} carry_pairs[{j}]"
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, int) for v in pair)):
                raise SchemaError(f"{pw}: expected [human_index, firearm_index]")
            h, f = pair
            if not 0 <= h < len(humans):
                raise IndexRangeError(f"{pw}: human index {h} out of range for {len(humans)} humans")
            if not 0 <= f < len(firearms):
                raise IndexRangeError(f"{pw}: firearm index {f} out of range for {len(firearms)} firearms")
            if f in used:
                raise DuplicateCarryError(f"{pw}: firearm {f} already carried by human {used[f]}")
            used[f] = h
            carry.append((h, f))
        out.append(SceneRecord(sid, image, humans, tuple(firearms), tuple(carry), width, height))
    return out


def write_annotations(path: str | Path, records: Sequence[SceneRecord]) -> None:
    scenes = []
    for r in records:
        entry = {
            "id": r.scene_id,
            "image": r.image,
            "humans": [b.to_list() for b in r.humans],
            "firearms": [{"class": c.value, "box": b.to_list()} for c, b in r.firearms],
            "carry_pairs": [list(p) for p in r.carry_pairs],
        }
        if r.width is not None:
            entry["width"], entry["height"] = r.width, r.height
        scenes.append(entry)
    _write_json(path, scenes)


# detections -------------------------------------------------------------------


def _parse_detection(d: Any, where: str) -> Detection:
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object")
    return Detection(parse_class(d.get("class"), where), _parse_box(d.get("box"), where), _parse_unit(d.get("score"), f"{where} score"))


def load_detections(path: str | Path) -> dict[str, list[Detection]]:
    data = _read_json(path)
    out = {}
    for i, entry in enumerate(data["scenes"]):
        sid = _scene_id(entry, i)
        dets = _field(entry, "detections", list, f"scene {sid}")
        out[sid] = [_parse_detection(d, f"scene {sid} detections[{j}]") for j, d in enumerate(dets)]
    return out


def _detection_dict(d: Detection) -> dict:
    return {"class": d.cls.value, "box": d.box.to_list(), "score": d.score}


def write_detections(path: str | Path, detections: Mapping[str, Sequence[Detection]]) -> None:
    scenes = [{"id": sid, "detections": [_detection_dict(d) for d in dets]} for sid, dets in detections.items()]
    _write_json(path, scenes)


# keypoints --------------------------------------------------------------------


def _parse_keypoint(k: Any, where: str) -> Keypoint:
    if not isinstance(k, dict):
        raise SchemaError(f"{where}: expected an object")
    x, y = k.get("x"), k.get("y")
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in (x, y)):
        raise SchemaError(f"{where}: x and y must be finite numbers")
    kind = k.get("kind", "hand")
    if kind not in ("hand", "other"):
        raise SchemaError(f"{where}: kind must be 'hand' or 'other', got {kind!r}")
    return Keypoint(float(x), float(y), _parse_unit(k.get("confidence"), f"{where} confidence"), KeypointKind(kind))


def load_keypoints(path: str | Path) -> dict[str, SceneKeypoints]:
    """Entries with ``frame: image`` feed HCFD; ``frame: crop`` entries need ``crop_ref`` and feed HiFD."""
    data = _read_json(path)
    out: dict[str, SceneKeypoints] = {}
    for i, entry in enumerate(data["scenes"]):
        sid = _scene_id(entry, i)
        where = f"scene {sid}"
        frame = entry.get("frame", "image")
        kps = [_parse_keypoint(k, f"{where} keypoints[{j}]") for j, k in enumerate(_field(entry, "keypoints", list, where))]
        rec = out.setdefault(sid, SceneKeypoints())
        if frame == "image":
            rec.image.extend(kps)
        elif frame == "crop":
            ref = entry.get("crop_ref")
            if not isinstance(ref, int) or ref < 0:
                raise IndexRangeError(f"{where}: crop-frame keypoints need a non-negative integer crop_ref")
            rec.crops.setdefault(ref, []).extend(kps)
        else:
            raise SchemaError(f"{where}: frame must be 'image' or 'crop', got {frame!r}")
    return out


def _kp_dict(k: Keypoint) -> dict:
    return {"x": k.x, "y": k.y, "confidence": k.confidence, "kind": k.kind.value}


def write_keypoints(path: str | Path, keypoints: Mapping[str, SceneKeypoints]) -> None:
    scenes = []
    for sid, rec in keypoints.items():
        scenes.append({"id": sid, "frame": "image", "keypoints": [_kp_dict(k) for k in rec.image]})
        for ref in sorted(rec.crops):
            scenes.append(
                {"id": sid, "frame": "crop", "crop_ref": ref, "keypoints": [_kp_dict(k) for k in rec.crops[ref]]}
            )
    _write_json(path, scenes)


# predictions ------------------------------------------------------------------


def write_predictions(path: str | Path, predictions: Mapping[str, Sequence[ScoredPair]], maxout: bool) -> None:
    scenes = []
    for sid, pairs in predictions.items():
        scenes.append(
            {
                "id": sid,
                "pairs": [
                    {
                        "human_index": sp.pair.human_index,
                        "firearm_index": sp.pair.firearm_index,
                        "human": _detection_dict(sp.pair.human),
                        "firearm": _detection_dict(sp.pair.firearm),
                        "hold_prob": sp.hold_prob,
                        "final_score": sp.final_score,
                        "interacting": sp.interacting,
                        "probs": None if sp.probs is None else list(sp.probs),
                    }
                    for sp in pairs
                ],
            }
        )
    _write_json(path, scenes, maxout=maxout)


def load_predictions(path: str | Path) -> dict[str, list[ScoredPair]]:
    from .geometry import union_box

    data = _read_json(path)
    out = {}
    for i, entry in enumerate(data["scenes"]):
        sid = _scene_id(entry, i)
        pairs = []
        for j, p in enumerate(_field(entry, "pairs", list, f"scene {sid}")):
            where = f"scene {sid} pairs[{j}]"
            if not isinstance(p, dict):
                raise SchemaError(f"{where}: expected an object")
            human = _parse_detection(p.get("human"), f"{where} human")
            firearm = _parse_detection(p.get("firearm"), f"{where} firearm")
            hi, fi = p.get("human_index"), p.get("firearm_index")
            if not (isinstance(hi, int) and isinstance(fi, int)):
                raise SchemaError(f"{where}: human_index and firearm_index must be integers")
            probs = p.get("probs")
            try:
                pair = PairInstance(human, firearm, hi, fi, union_box(human.box, firearm.box))
            except ValueError as exc:
                raise SchemaError(f"{where}: {exc}") from exc
            pairs.append(
                ScoredPair(
                    pair,
                    _parse_unit(p.get("hold_prob"), f"{where} hold_prob"),
                    _parse_unit(p.get("final_score"), f"{where} final_score"),
                    bool(p.get("interacting", True)),
                    None if probs is None else tuple(float(v) for v in probs),
                )
            )
        out[sid] = pairs
    return out


# synthetic scenes -------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    num_scenes: int = 100
    num_test_scenes: int = 0
    image_size: int = 96
    humans_range: tuple[int, int] = (1, 3)
    firearms_range: tuple[int, int] = (1, 2)
    carry_prob: float = 0.6
    gun_ratio: float = 0.5
    clutter_count: int = 4
    noise_amplitude: float = 0.04
    hard_case_rate: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "humans_range", tuple(int(v) for v in self.humans_range))
        object.__setattr__(self, "firearms_range", tuple(int(v) for v in self.firearms_range))
        for name in ("carry_prob", "gun_ratio", "hard_case_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("humans_range", "firearms_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a nonempty range [lo, hi] with lo >= 0")
        if self.humans_range[1] < 1:
            raise ValueError("humans_range must allow at least one human")
        if self.num_scenes < 0 or self.num_test_scenes < 0:
            raise ValueError("scene counts must be >= 0")
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if self.clutter_count < 0 or self.noise_amplitude < 0.0:
            raise ValueError("clutter_count and noise_amplitude must be >= 0")

    @classmethod
    def from_dict(cls, data) -> "SynthConfig":
        return strict_from_dict(cls, data, "synth")

    def to_dict(self) -> dict:
        return to_dict(self)


MAX_ATTEMPTS = 1000
CARRY_MIN_IOU = 0.55
FREE_GAP_FRACTION = 0.5


@dataclass
class _Placed:
    cls: ObjectClass
    box: BoundingBox
    carrier: int | None = None
    hidden: bool = False


def _scene_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([seed, split, index]))


def _ibox(x0: float, y0: float, w: float, h: float) -> BoundingBox:
    x0, y0 = int(round(x0)), int(round(y0))
    return BoundingBox(float(x0), float(y0), float(x0 + max(1, int(round(w)))), float(y0 + max(1, int(round(h)))))


def _gap(a: BoundingBox, b: BoundingBox) -> float:
    dx = max(0.0, a.x_min - b.x_max, b.x_min - a.x_max)
    dy = max(0.0, a.y_min - b.y_max, b.y_min - a.y_max)
    return math.hypot(dx, dy)


def _firearm_dims(rng: np.random.Generator, cls: ObjectClass, hw: float, hh: float) -> tuple[float, float]:
    if cls is ObjectClass.GUN:
        side = hw * rng.uniform(0.9, 1.05)
        return side, side
    return hw * rng.uniform(0.55, 0.7), hh * rng.uniform(0.9, 1.0)


def _place_humans(rng, n: int, size: int) -> list[BoundingBox]:
    humans: list[BoundingBox] = []
    for _ in range(n):
        for _ in range(MAX_ATTEMPTS):
            w = size * rng.uniform(0.14, 0.2)
            h = w * rng.uniform(1.35, 1.6)
            box = _ibox(rng.uniform(0, size - w), rng.uniform(0, size - h), w, h)
            if box.x_max > size or box.y_max > size:
                continue
            if all(_gap(box, o) >= 0.5 * max(box.width, o.width) for o in humans):
                humans.append(box)
                break
        else:
            raise GenerationError(f"could not place {n} non-overlapping humans in a {size}px image")
    return humans


def _place_carried(rng, cls: ObjectClass, human: BoundingBox, others: list[BoundingBox], size: int) -> BoundingBox | None:
    """A firearm over the carrier's upper-third side band with IoU >= CARRY_MIN_IOU."""
    fw, fh = _firearm_dims(rng, cls, human.width, human.height)
    band = human.y_min + human.height / 3.0
    for _ in range(MAX_ATTEMPTS):
        side = rng.integers(2)
        if side == 0:
            x0 = human.x_min + rng.uniform(-0.1, 0.05) * human.width
        else:
            x0 = human.x_max - fw + rng.uniform(-0.05, 0.1) * human.width
        y0 = human.y_min + rng.uniform(0.0, 0.2) * human.height
        box = _ibox(x0, y0, fw, fh)
        if box.x_min < 0 or box.y_min < 0 or box.x_max > size or box.y_max > size or box.y_min >= band:
            continue
        if iou(box, human) < CARRY_MIN_IOU:
            continue
        if any(iou(box, o) > 0.0 for o in others):
            continue
        return box
    return None


def _place_free(rng, cls: ObjectClass, humans: list[BoundingBox], firearms: list[BoundingBox], size: int) -> BoundingBox | None:
    ref = humans[rng.integers(len(humans))]
    fw, fh = _firearm_dims(rng, cls, ref.width, ref.height)
    if rng.random() < 0.5:
        fw, fh = fh, fw  # lying flat
    for _ in range(MAX_ATTEMPTS):
        box = _ibox(rng.uniform(0, size - fw), rng.uniform(0, size - fh), fw, fh)
        if box.x_max > size or box.y_max > size:
            continue
        if any(_gap(box, h) < FREE_GAP_FRACTION * h.width for h in humans):
            continue
        if any(iou(box, f) > 0.0 for f in firearms):
            continue
        return box
    return None


def _layout(rng, cfg: SynthConfig) -> tuple[list[BoundingBox], list[_Placed]]:
    size = cfg.image_size
    for _ in range(MAX_ATTEMPTS):
        humans = _place_humans(rng, int(rng.integers(cfg.humans_range[0], cfg.humans_range[1] + 1)), size)
        n_fire = int(rng.integers(cfg.firearms_range[0], cfg.firearms_range[1] + 1))
        hard_scene = rng.random() < cfg.hard_case_rate
        firearms: list[_Placed] = []
        busy: set[int] = set()
        ok = True
        for _ in range(n_fire):
            cls = ObjectClass.GUN if rng.random() < cfg.gun_ratio else ObjectClass.RIFLE
            free_humans = [i for i in range(len(humans)) if i not in busy]
            taken = [f.box for f in firearms]
            if free_humans and rng.random() < cfg.carry_prob:
                h = free_humans[rng.integers(len(free_humans))]
                others = [humans[i] for i in range(len(humans)) if i != h] + taken
                box = _place_carried(rng, cls, humans[h], others, size)
                if box is None:
                    ok = False
                    break
                busy.add(h)
                firearms.append(_Placed(cls, box, carrier=h))
            elif hard_scene and free_humans:
                # looks carried by box overlap but sits behind an idle person
                h = free_humans[rng.integers(len(free_humans))]
                others = [humans[i] for i in range(len(humans)) if i != h] + taken
                box = _place_carried(rng, cls, humans[h], others, size)
                if box is None:
                    ok = False
                    break
                busy.add(h)
                hard_scene = False
                firearms.append(_Placed(cls, box, hidden=True))
            else:
                box = _place_free(rng, cls, humans, taken, size)
                if box is None:
                    ok = False
                    break
                firearms.append(_Placed(cls, box))
        if ok:
            return humans, firearms
    raise GenerationError("could not place firearms under the distance constraints")


_GUN_BASE = np.array([0.12, 0.14, 0.35])
_RIFLE_BASE = np.array([0.15, 0.32, 0.12])


def _fill(canvas: np.ndarray, box: BoundingBox, color) -> None:
    canvas[int(box.y_min) : int(box.y_max), int(box.x_min) : int(box.x_max)] = color


def _draw_human(rng, canvas: np.ndarray, box: BoundingBox) -> None:
    hue = rng.uniform(0.0, 1.0)
    base = np.array([0.75 + 0.2 * hue, 0.35 + 0.3 * (1 - hue), 0.3 + 0.4 * hue])
    stripe = base * rng.uniform(0.45, 0.65)
    period = int(rng.integers(2, 5))
    y0, y1, x0, x1 = int(box.y_min), int(box.y_max), int(box.x_min), int(box.x_max)
    rows = np.arange(y0, y1)
    canvas[y0:y1, x0:x1] = base
    canvas[rows[((rows - y0) // period) % 2 == 1], x0:x1] = stripe
    head_h = max(1, (y1 - y0) // 5)
    canvas[y0 : y0 + head_h, x0 + (x1 - x0) // 4 : x1 - (x1 - x0) // 4] = [0.85, 0.7, 0.55]


def _draw_firearm(rng, canvas: np.ndarray, cls: ObjectClass, box: BoundingBox) -> None:
    base = (_GUN_BASE if cls is ObjectClass.GUN else _RIFLE_BASE) + rng.uniform(-0.05, 0.05, size=3)
    _fill(canvas, box, np.clip(base, 0.0, 1.0))
    # darker grip/barrel stripe along the long axis
    if box.width >= box.height:
        mid = int((box.y_min + box.y_max) / 2)
        canvas[mid : mid + 1, int(box.x_min) : int(box.x_max)] = base * 0.5
    else:
        mid = int((box.x_min + box.x_max) / 2)
        canvas[int(box.y_min) : int(box.y_max), mid : mid + 1] = base * 0.5


def _render(rng, cfg: SynthConfig, humans: list[BoundingBox], firearms: list[_Placed]) -> Image:
    size = cfg.image_size
    canvas = np.empty((size, size, 3))
    canvas[:] = rng.uniform(0.6, 0.85) + rng.uniform(-0.05, 0.05, size=3)
    for _ in range(cfg.clutter_count):
        w, h = rng.uniform(0.05, 0.3, size=2) * size
        box = _ibox(rng.uniform(0, size - w), rng.uniform(0, size - h), w, h).clip(BoundingBox(0, 0, size, size))
        _fill(canvas, box, rng.uniform(0.45, 0.95) + rng.uniform(-0.08, 0.08, size=3))
    for f in firearms:
        if f.hidden:
            _draw_firearm(rng, canvas, f.cls, f.box)
    for h in humans:
        _draw_human(rng, canvas, h)
    for f in firearms:
        if not f.hidden:
            _draw_firearm(rng, canvas, f.cls, f.box)
    if cfg.noise_amplitude > 0:
        canvas += rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude, size=canvas.shape)
    # quantize now so the in-memory image equals the file written
    canvas = np.round(np.clip(canvas, 0.0, 1.0) * 255.0) / 255.0
    return Image(canvas, ColorSpace.RGB)


def _hand_points(rng, human: BoundingBox, carried: BoundingBox | None) -> list[Keypoint]:
    pts = []
    for side in (0, 1):
        if carried is not None:
            x = rng.uniform(carried.x_min, carried.x_max)
            y = rng.uniform(carried.y_min, carried.y_max)
        else:
            x = human.x_min - 1.0 if side == 0 else human.x_max
            y = human.y_min + rng.uniform(0.4, 0.6) * human.height
        pts.append(Keypoint(float(x), float(y), float(rng.uniform(0.4, 1.0)), KeypointKind.HAND))
    cx, _ = human.center
    pts.append(Keypoint(float(cx), human.y_min + 0.1 * human.height, float(rng.uniform(0.5, 1.0)), KeypointKind.OTHER))
    return pts


def _crop_points(rng, box: BoundingBox, carried: bool) -> list[Keypoint]:
    if carried:
        n, lo, hi = 2, 0.35, 1.0
    else:
        n, lo, hi = int(rng.integers(0, 2)), 0.0, 0.3
    return [
        Keypoint(float(rng.uniform(0, box.width)), float(rng.uniform(0, box.height)), float(rng.uniform(lo, hi)))
        for _ in range(n)
    ]


@dataclass
class SyntheticSplit:
    records: list[SceneRecord]
    images: dict[str, Image]
    keypoints: dict[str, SceneKeypoints]


def synthesize(cfg: SynthConfig, split: str = "train") -> SyntheticSplit:
    """Generate one split in memory; each scene has its own RNG stream keyed by (seed, split, index)."""
    split_code, count = {"train": (0, cfg.num_scenes), "test": (1, cfg.num_test_scenes)}[split]
    records, images, keypoints = [], {}, {}
    for i in range(count):
        rng = _scene_rng(cfg.seed, split_code, i)
        humans, firearms = _layout(rng, cfg)
        sid = f"{split}_{i:05d}"
        image = _render(rng, cfg, humans, firearms)
        carried_by = {f.carrier: f.box for f in firearms if f.carrier is not None}
        kp = SceneKeypoints()
        for hi, h in enumerate(humans):
            kp.image.extend(_hand_points(rng, h, carried_by.get(hi)))
        for fi, f in enumerate(firearms):
            kp.crops[fi] = _crop_points(rng, f.box, f.carrier is not None)
        records.append(
            SceneRecord(
                sid,
                f"images/{sid}.ppm",
                tuple(humans),
                tuple((f.cls, f.box) for f in firearms),
                tuple((f.carrier, fi) for fi, f in enumerate(firearms) if f.carrier is not None),
                cfg.image_size,
                cfg.image_size,
            )
        )
        images[sid] = image
        keypoints[sid] = kp
    return SyntheticSplit(records, images, keypoints)


def write_split(out_dir: str | Path, data: SyntheticSplit) -> None:
    """Write images, annotations.json, detections.json (GT boxes, score 1) and keypoints.json."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for r in data.records:
        write_image(out_dir / r.image, data.images[r.scene_id])
    write_annotations(out_dir / "annotations.json", data.records)
    write_detections(out_dir / "detections.json", {r.scene_id: r.gt_detections() for r in data.records})
    write_keypoints(out_dir / "keypoints.json", data.keypoints)


def generate_synthetic(cfg: SynthConfig, out_dir: str | Path) -> dict[str, list[SceneRecord]]:
    """Write ``out_dir/train`` and, when ``num_test_scenes > 0``, ``out_dir/test``."""
    out = {}
    for split in ("train", "test"):
        data = synthesize(cfg, split)
        if split == "test" and not data.records:
            continue
        write_split(Path(out_dir) / split, data)
        out[split] = data.records
    return out
