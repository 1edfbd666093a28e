import hashlib
import json

import numpy as np
import pytest

from pairlock.baselines import Keypoint
from pairlock.datasets import (
    DuplicateCarryError,
    GenerationError,
    IndexRangeError,
    SceneKeypoints,
    SchemaError,
    SynthConfig,
    UnknownClassError,
    ValueRangeError,
    generate_synthetic,
    load_annotations,
    load_detections,
    load_keypoints,
    load_predictions,
    synthesize,
    write_annotations,
    write_keypoints,
    write_predictions,
)
from pairlock.geometry import iou
from pairlock.imaging import read_image
from pairlock.masks import ObjectClass
from pairlock.pipeline import Detection, maxout, score_pair, enumerate_pairs
from pairlock.runs import baseline_decisions
from pairlock.evaluation import carried_accuracy


def write(tmp_path, scenes, name="f.json", v=1):
    p = tmp_path / name
    p.write_text(json.dumps({"v": v, "scenes": scenes}))
    return p


SCENE = {
    "id": "s0",
    "image": "img.ppm",
    "humans": [[0, 0, 10, 20], [30, 0, 40, 20]],
    "firearms": [{"class": "pistol", "box": [2, 2, 8, 8]}, {"class": "Long_Gun", "box": [32, 0, 38, 20]}],
    "carry_pairs": [[0, 0]],
}


def test_annotation_round_trip(tmp_path):
    recs = load_annotations(write(tmp_path, [SCENE]))
    assert recs[0].firearms[0][0] is ObjectClass.GUN and recs[0].firearms[1][0] is ObjectClass.RIFLE
    out = tmp_path / "out.json"
    write_annotations(out, recs)
    assert load_annotations(out) == recs


def test_annotation_clipping(tmp_path):
    scene = dict(SCENE, width=35, height=15)
    rec = load_annotations(write(tmp_path, [scene]))[0]
    assert rec.humans[1].to_list() == [30, 0, 35, 15]


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda s: s.update(carry_pairs=[[5, 0]]), IndexRangeError),
        (lambda s: s.update(carry_pairs=[[0, 9]]), IndexRangeError),
        (lambda s: s.update(carry_pairs=[[0, 0], [1, 0]]), DuplicateCarryError),
        (lambda s: s["firearms"].append({"class": "cannon", "box": [0, 0, 1, 1]}), UnknownClassError),
        (lambda s: s["firearms"].append({"class": "person", "box": [0, 0, 1, 1]}), UnknownClassError),
        (lambda s: s.update(humans=[[0, 0, 10]]), SchemaError),
        (lambda s: s.update(humans=[[5, 0, 1, 10]]), SchemaError),
        (lambda s: s.pop("image"), SchemaError),
        (lambda s: s.update(width=10), SchemaError),
    ],
)
def test_annotation_errors(tmp_path, mutate, error):
    scene = json.loads(json.dumps(SCENE))
    mutate(scene)
    with pytest.raises(error):
        load_annotations(write(tmp_path, [scene]))


def test_file_level_errors(tmp_path):
    with pytest.raises(SchemaError, match="version"):
        load_annotations(write(tmp_path, [SCENE], v=2))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError, match="malformed"):
        load_annotations(bad)
    with pytest.raises(SchemaError, match="duplicate"):
        load_annotations(write(tmp_path, [SCENE, SCENE]))


def test_detections(tmp_path):
    p = write(tmp_path, [{"id": "s0", "detections": [{"class": "person", "box": [0, 0, 5, 5], "score": 0.7}]}])
    dets = load_detections(p)
    assert dets["s0"][0].cls is ObjectClass.HUMAN and dets["s0"][0].score == 0.7
    p = write(tmp_path, [{"id": "s0", "detections": [{"class": "gun", "box": [0, 0, 5, 5], "score": 1.2}]}])
    with pytest.raises(ValueRangeError):
        load_detections(p)


def test_keypoints_round_trip(tmp_path):
    kp = {"s0": SceneKeypoints([Keypoint(1, 2, 0.5)], {1: [Keypoint(0, 0, 0.9, "other")]})}
    out = tmp_path / "kp.json"
    write_keypoints(out, kp)
    assert load_keypoints(out) == kp
    p = write(tmp_path, [{"id": "s0", "frame": "crop", "keypoints": []}])
    with pytest.raises(IndexRangeError):
        load_keypoints(p)
    p = write(tmp_path, [{"id": "s0", "keypoints": [{"x": 0, "y": 0, "confidence": -0.1}]}])
    with pytest.raises(ValueRangeError):
        load_keypoints(p)


def test_predictions_round_trip(tmp_path):
    from pairlock.geometry import BoundingBox

    dets = [Detection(ObjectClass.HUMAN, BoundingBox(0, 0, 10, 20), 0.9), Detection(ObjectClass.HUMAN, BoundingBox(20, 0, 30, 20))]
    pairs = enumerate_pairs(dets, [Detection(ObjectClass.GUN, BoundingBox(5, 5, 12, 9), 0.8)])
    scored = maxout([score_pair(pairs[0], 0.25, probs=(0.25, 0.05, 0.7)), score_pair(pairs[1], 0.5)])
    out = tmp_path / "pred.json"
    write_predictions(out, {"s0": scored}, maxout=True)
    assert json.loads(out.read_text())["maxout"] is True
    back = load_predictions(out)["s0"]
    assert back == scored


def small_cfg(**kw):
    return SynthConfig(**{"num_scenes": 12, "num_test_scenes": 3, "image_size": 64, "seed": 5, **kw})


def test_synthesis_is_deterministic(tmp_path):
    generate_synthetic(small_cfg(), tmp_path / "a")
    generate_synthetic(small_cfg(), tmp_path / "b")

    def digest(root):
        h = hashlib.sha256()
        for f in sorted(p for p in root.rglob("*") if p.is_file()):
            h.update(str(f.relative_to(root)).encode() + f.read_bytes())
        return h.hexdigest()

    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    generate_synthetic(small_cfg(seed=6), tmp_path / "c")
    assert digest(tmp_path / "a") != digest(tmp_path / "c")


def test_written_split_matches_memory(tmp_path):
    cfg = small_cfg()
    generate_synthetic(cfg, tmp_path)
    data = synthesize(cfg, "test")
    recs = load_annotations(tmp_path / "test" / "annotations.json")
    assert recs == data.records
    img = read_image(recs[0].image_path(tmp_path / "test"))
    np.testing.assert_allclose(img.data, data.images[recs[0].scene_id].data, atol=1e-12)
    assert load_keypoints(tmp_path / "test" / "keypoints.json") == data.keypoints
    dets = load_detections(tmp_path / "test" / "detections.json")
    assert all(d.score == 1.0 for ds in dets.values() for d in ds)


def test_train_and_test_streams_differ():
    cfg = small_cfg(num_test_scenes=12)
    train, test = synthesize(cfg, "train"), synthesize(cfg, "test")
    assert [r.humans for r in train.records] != [r.humans for r in test.records]


@pytest.mark.parametrize("seed", range(25))
def test_scene_invariants(seed):
    cfg = SynthConfig(num_scenes=8, image_size=96, seed=seed, hard_case_rate=0.3)
    for r in synthesize(cfg).records:
        bounds = (0, 0, 96, 96)
        for b in list(r.humans) + [b for _, b in r.firearms]:
            assert b.x_min >= bounds[0] and b.y_min >= bounds[1] and b.x_max <= 96 and b.y_max <= 96
            assert b.x_min == int(b.x_min) and b.y_max == int(b.y_max)
        for i in range(len(r.humans)):
            for j in range(i + 1, len(r.humans)):
                assert iou(r.humans[i], r.humans[j]) == 0.0
        for h, f in r.carry_pairs:
            assert iou(r.firearms[f][1], r.humans[h]) >= 0.55
        carriers = [h for h, _ in r.carry_pairs]
        assert len(set(carriers)) == len(carriers)


def test_carry_prob_extremes():
    always = synthesize(SynthConfig(num_scenes=20, humans_range=(2, 3), firearms_range=(1, 2), carry_prob=1.0, seed=1))
    assert all(len(r.carry_pairs) == len(r.firearms) for r in always.records)
    never = synthesize(SynthConfig(num_scenes=20, carry_prob=0.0, hard_case_rate=0.0, seed=1))
    assert all(not r.carry_pairs for r in never.records)


def test_impossible_layout_raises():
    with pytest.raises(GenerationError):
        synthesize(SynthConfig(num_scenes=1, humans_range=(40, 40), image_size=32))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(carry_prob=1.5)
    with pytest.raises(ValueError):
        SynthConfig(humans_range=(3, 1))
    with pytest.raises(ValueError):
        SynthConfig(image_size=16)


def test_ohfd_on_gt_boxes_is_strong():
    data = synthesize(SynthConfig(num_scenes=150, seed=3))
    gt = [r.ground_truth() for r in data.records]
    acc = carried_accuracy(baseline_decisions("ohfd", data.records), gt).accuracy_overall
    assert acc >= 95.0


def test_keypoint_baselines_on_synthetic():
    data = synthesize(SynthConfig(num_scenes=60, seed=4, hard_case_rate=0.0))
    gt = [r.ground_truth() for r in data.records]
    for method in ("hifd", "hcfd"):
        acc = carried_accuracy(baseline_decisions(method, data.records, keypoints=data.keypoints), gt)
        assert acc.accuracy_overall == 100.0
