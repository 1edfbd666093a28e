import pytest

from pairlock.baselines import Keypoint, KeypointKind, hcfd_classify, hifd_classify, ohfd_associate
from pairlock.geometry import BoundingBox
from pairlock.masks import ObjectClass
from pairlock.pipeline import Detection

GUN = Detection(ObjectClass.GUN, BoundingBox(10, 10, 20, 20), 0.9)


def kp(x, y, c=0.9, kind="hand"):
    return Keypoint(x, y, c, KeypointKind(kind))


@pytest.mark.parametrize(
    "confs, expected",
    [
        ([], False),
        ([0.9], False),
        ([0.31, 0.31], True),
        ([0.3, 0.9], False),
        ([0.3, 0.3, 0.3], False),
        ([0.1, 0.5, 0.4], True),
    ],
)
def test_hifd_threshold(confs, expected):
    assert hifd_classify(GUN, [kp(1, 1, c) for c in confs]) is expected


def test_hifd_alpha_is_strict():
    pts = [kp(0, 0, 0.5), kp(1, 1, 0.5)]
    assert not hifd_classify(GUN, pts, alpha=0.5)
    assert hifd_classify(GUN, pts, alpha=0.49)


def test_hcfd_half_open_box():
    assert hcfd_classify(GUN, [kp(10, 10), kp(19.99, 19.99)])
    assert not hcfd_classify(GUN, [kp(10, 10), kp(20, 15)])
    assert not hcfd_classify(GUN, [kp(15, 15)])


def test_hcfd_ignores_non_hand_and_low_confidence():
    assert not hcfd_classify(GUN, [kp(12, 12), kp(13, 13, kind="other")])
    assert not hcfd_classify(GUN, [kp(12, 12, 0.2), kp(13, 13, 0.9)], min_confidence=0.5)
    assert hcfd_classify(GUN, [kp(12, 12, 0.5), kp(13, 13, 0.9)], min_confidence=0.5)


def human(x0, x1):
    return Detection(ObjectClass.HUMAN, BoundingBox(x0, 0, x1, 10), 1.0)


def test_ohfd_threshold_and_ties():
    f = Detection(ObjectClass.RIFLE, BoundingBox(0, 0, 10, 10), 1.0)
    # IoU exactly 0.5 counts as carried
    res = ohfd_associate([f], [human(-10, 10), human(0, 20)])
    assert res[0].carried and res[0].carrier_index == 0
    low = ohfd_associate([f], [human(0, 21)])
    assert not low[0].carried and low[0].carrier_index is None
    assert ohfd_associate([f], []) == [ohfd_associate([f], [human(50, 60)])[0]]
    best = ohfd_associate([f], [human(5, 15), human(1, 11)])
    assert best[0].carrier_index == 1


def test_ohfd_one_result_per_firearm():
    fs = [Detection(ObjectClass.GUN, BoundingBox(i * 20, 0, i * 20 + 10, 10), 1.0) for i in range(3)]
    res = ohfd_associate(fs, [human(0, 10), human(40, 50)])
    assert [r.carrier_index for r in res] == [0, None, 1]


def test_keypoint_confidence_range():
    with pytest.raises(ValueError):
        Keypoint(0, 0, 1.5)
