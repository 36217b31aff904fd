import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssdapc.geometry import (Box, CornerBox, decode, decode_checked, encode, iou, iou_matrix,
                             jaccard_distance)

from oracles import loop_iou, pixel_iou


def corner_box(x0, y0, x1, y1, scale=1.0):
    return Box.from_corners(x0 / scale, y0 / scale, x1 / scale, y1 / scale)


def test_identical_boxes():
    b = Box(0.5, 0.5, 0.4, 0.4)
    assert iou(b, b) == 1.0
    assert jaccard_distance(b, b) == 0.0


def test_disjoint_boxes():
    a, b = corner_box(0, 0, 2, 2, 4), corner_box(3, 3, 4, 4, 4)
    assert iou(a, b) == 0.0
    assert jaccard_distance(a, b) == 1.0


def test_partial_overlap_one_seventh():
    a, b = corner_box(0, 0, 2, 2, 3), corner_box(1, 1, 3, 3, 3)
    # oracle value on the raster; the corners land on pixel edges so it is exact
    assert pixel_iou((0, 0, 2 / 3, 2 / 3), (1 / 3, 1 / 3, 1, 1)) == pytest.approx(1 / 7, abs=1e-12)
    assert iou(a, b) == pytest.approx(1 / 7, abs=1e-12)
    assert jaccard_distance(a, b) == pytest.approx(6 / 7, abs=1e-12)


def test_degenerate_pair_is_zero():
    assert iou(Box(0.5, 0.5, 0.0, 0.0), Box(0.5, 0.5, 0.0, 0.0)) == 0.0


def test_matrix_matches_scalar_loop():
    rng = np.random.default_rng(3)
    a = np.column_stack([rng.random((20, 2)), rng.uniform(0.01, 0.5, (20, 2))])
    b = np.column_stack([rng.random((15, 2)), rng.uniform(0.01, 0.5, (15, 2))])
    m = iou_matrix(a, b)
    expected = np.array([[loop_iou(x, y) for y in b] for x in a])
    np.testing.assert_allclose(m, expected, atol=1e-15)


def test_decode_examples():
    d = Box(0.5, 0.5, 0.2, 0.2)
    assert decode([0, 0, 0, 0], d) == d
    out = decode([0.1, -0.1, 0.05, 0.0], d)
    np.testing.assert_allclose(out.as_array(), [0.6, 0.4, 0.25, 0.2], atol=1e-15)


def test_decode_clamps_negative_size():
    box, clamped = decode_checked([0, 0, -0.5, 0.1], Box(0.5, 0.5, 0.2, 0.2))
    assert clamped and box.w == 0.0
    assert not decode_checked([0, 0, 0, 0], Box(0.5, 0.5, 0.2, 0.2))[1]


def test_encode_decode_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g = Box(*rng.random(2), *rng.uniform(0.01, 1, 2))
        d = Box(*rng.random(2), *rng.uniform(0.01, 1, 2))
        np.testing.assert_allclose(decode(encode(g, d), d).as_array(), g.as_array(), atol=1e-12, rtol=0)


def test_corner_round_trip():
    b = Box(0.3, 0.7, 0.25, 0.1)
    back = b.to_corners().to_box()
    np.testing.assert_allclose(back.as_array(), b.as_array(), atol=1e-12)


def test_inverted_corners_rejected():
    with pytest.raises(ValueError):
        CornerBox(0.5, 0.0, 0.4, 1.0)


coord = st.floats(0.0, 1.0, allow_nan=False)
size = st.floats(0.0, 1.0, allow_nan=False)
boxes = st.builds(Box, coord, coord, size, size)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0


@given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
def test_containment_monotonicity(v):
    # nested boxes a ⊆ b ⊆ c around a shared interior point
    cx, cy = 0.5, 0.5
    wa, wb, wc = sorted(v[:3])
    ha, hb, hc = sorted(v[3:])
    a, b, c = Box(cx, cy, wa, ha), Box(cx, cy, wb, hb), Box(cx, cy, wc, hc)
    assert iou(a, b) >= iou(a, c) - 1e-12


def test_agrees_with_raster_for_arbitrary_corners():
    # off-lattice corners put each edge within half a pixel; with boxes of
    # at least 0.1 that bounds the raster error well under 1e-2
    rng = np.random.default_rng(17)
    for _ in range(50):
        boxes = [Box(*rng.uniform(0.3, 0.7, 2), *rng.uniform(0.1, 0.6, 2)) for _ in range(2)]
        corners = [b.to_corners() for b in boxes]
        raster = pixel_iou(*[(c.xmin, c.ymin, c.xmax, c.ymax) for c in corners])
        assert iou(*boxes) == pytest.approx(raster, abs=1e-2)
