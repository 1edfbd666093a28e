import numpy as np
import pytest

from pairlock.geometry import BoundingBox
from pairlock.imaging import ColorSpace, Image
from pairlock.masks import (
    AttentionMode,
    AttentionStack,
    ObjectClass,
    assemble_apbb,
    build_attention_channels,
    build_locality_target,
    gaussian_plane,
    rasterize_box,
    select_mask_planes,
    to_local,
)

B = BoundingBox.from_seq


def loop_raster(region, box, w, h):
    """Direct per-pixel oracle for rasterize_box."""
    c = box.clip(region)
    out = np.zeros((h, w))
    if c.width <= 0 or c.height <= 0:
        return out
    for i in range(h):
        for j in range(w):
            x = region.x_min + (j + 0.5) * region.width / w
            y = region.y_min + (i + 0.5) * region.height / h
            out[i, j] = float(c.x_min <= x < c.x_max and c.y_min <= y < c.y_max)
    return out


def test_human_equal_to_pbb_gives_full_mask():
    pbb = B([0, 0, 10, 20])
    m = build_attention_channels(pbb, pbb, B([2, 2, 4, 4]), ObjectClass.GUN, 5, 10)
    assert np.all(m[2] == 1.0)


def test_absent_class_plane_is_zero():
    pbb = B([0, 0, 10, 10])
    m = build_attention_channels(pbb, B([0, 0, 6, 10]), B([5, 5, 10, 10]), ObjectClass.GUN, 10, 10)
    assert not m[1].any()
    m = build_attention_channels(pbb, B([0, 0, 6, 10]), B([5, 5, 10, 10]), "rifle", 10, 10)
    assert not m[0].any() and m[1].any()


def test_quarter_gun_has_25_ones():
    pbb = B([0, 0, 10, 10])
    m = build_attention_channels(pbb, pbb, B([0, 0, 5, 5]), ObjectClass.GUN, 10, 10)
    assert m[0].sum() == 25


def test_human_class_is_not_a_firearm():
    with pytest.raises(ValueError):
        build_attention_channels(B([0, 0, 4, 4]), B([0, 0, 4, 4]), B([0, 0, 2, 2]), "human", 4, 4)


def test_rasterize_matches_loop_oracle(rng):
    for _ in range(200):
        x0, y0 = rng.uniform(-20, 20, 2)
        region = BoundingBox(x0, y0, x0 + rng.uniform(1, 40), y0 + rng.uniform(1, 40))
        bx, by = rng.uniform(-30, 40, 2)
        box = BoundingBox(bx, by, bx + rng.uniform(0, 30), by + rng.uniform(0, 30))
        w, h = rng.integers(1, 20, 2)
        np.testing.assert_array_equal(rasterize_box(region, box, w, h), loop_raster(region, box, w, h))


def test_disjoint_box_logs_and_returns_zero(caplog):
    out = rasterize_box(B([0, 0, 10, 10]), B([20, 20, 30, 30]), 5, 5)
    assert not out.any()
    assert "no area" in caplog.text


def test_select_mask_planes():
    masks = np.stack([np.eye(3), np.zeros((3, 3)), np.ones((3, 3))])
    assert select_mask_planes(masks, "split").shape == (3, 3, 3)
    merged = select_mask_planes(masks, AttentionMode.MERGED)
    np.testing.assert_array_equal(merged[0], np.eye(3))
    np.testing.assert_array_equal(merged[1], np.ones((3, 3)))
    assert select_mask_planes(masks, "none").shape == (0, 3, 3)


def test_locality_empty():
    g = build_locality_target(6, 4, [])
    assert g.planes.shape == (3, 4, 6) and not g.planes.any()


def test_locality_peak_and_zero_planes():
    g = build_locality_target(20, 30, [(ObjectClass.HUMAN, B([4, 6, 10, 18]))])
    human = g.planes[2]
    assert human.max() == pytest.approx(1.0, abs=1e-12)
    # center (7, 12) sits on a pixel edge; the nearest pixel centers share the peak
    assert human[11, 6] == pytest.approx(1.0, abs=1e-12)
    assert not g.planes[0].any() and not g.planes[1].any()


def test_locality_symmetry():
    g = build_locality_target(16, 12, [(ObjectClass.GUN, B([4, 3, 12, 9]))]).planes[0]
    np.testing.assert_allclose(g, g[:, ::-1], atol=1e-15)
    np.testing.assert_allclose(g, g[::-1, :], atol=1e-15)


def test_locality_radial_decay():
    g = gaussian_plane(B([2.0, 2.0, 12.0, 12.0]), 15, 15)
    row = g[6, 7:]
    col = g[7:, 6]
    assert np.all(np.diff(row) < 0) and np.all(np.diff(col) < 0)


def test_gaussian_sigma_floor_for_zero_width_box():
    g = gaussian_plane(B([3.5, 0, 3.5, 8]), 8, 8)
    assert np.isfinite(g).all() and g.max() == pytest.approx(1.0)


def test_same_class_uses_max():
    a, b = B([0, 0, 4, 4]), B([10, 10, 14, 14])
    g = build_locality_target(16, 16, [("gun", a), ("gun", b)]).planes[0]
    np.testing.assert_allclose(g, np.maximum(gaussian_plane(a, 16, 16), gaussian_plane(b, 16, 16)))


def test_to_local_maps_region_to_raster():
    region = B([10, 20, 30, 60])
    assert to_local(region, region, 8, 16) == B([0, 0, 8, 16])
    assert to_local(B([20, 40, 30, 60]), region, 8, 16) == B([4, 8, 8, 16])


@pytest.mark.parametrize("space, k", [(ColorSpace.RGB, 6), (ColorSpace.GRAY, 4)])
def test_assemble_channel_count(space, k):
    img = Image(np.random.default_rng(0).random((5, 7, space.channels)), space)
    stack = assemble_apbb(img, np.zeros((3, 5, 7)))
    assert stack.channels == k
    np.testing.assert_array_equal(stack.planes[: space.channels], img.planes())
    assert not stack.planes[space.channels :].any()


def test_assemble_rejects_mismatch_and_nonbinary():
    img = Image(np.zeros((5, 7, 3)), ColorSpace.RGB)
    with pytest.raises(ValueError):
        assemble_apbb(img, np.zeros((3, 4, 7)))
    with pytest.raises(ValueError):
        assemble_apbb(img, np.full((3, 5, 7), 0.5))
    with pytest.raises(ValueError):
        AttentionStack(np.zeros((4, 4)), 3)
