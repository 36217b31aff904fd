import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdapc.anchors import AnchorConfig, generate
from ssdapc.geometry import Box, decode, iou
from ssdapc.matching import GroundTruthObject, match

L = 4  # background + three object classes


def test_no_ground_truth():
    defaults = np.tile([0.5, 0.5, 0.2, 0.2], (10, 1))
    m = match(defaults, [], L)
    assert len(m.pos) == 0 and len(m.neg) == 10
    assert not m.Z.any() and not m.B.any()


def test_exact_match_gives_zero_offset():
    defaults = generate(AnchorConfig((2,))).boxes
    gt = GroundTruthObject(3, Box(*defaults[3]))
    m = match(defaults, [gt], L)
    assert 3 in m.pos
    assert m.Z[3, 2] == 1.0 and m.Z[3].sum() == 1.0
    np.testing.assert_array_equal(m.B[3], 0.0)


def test_one_seventh_overlap_is_negative():
    first = Box.from_corners(0, 0, 2 / 3, 2 / 3)
    second = Box.from_corners(1 / 3, 1 / 3, 1, 1)
    m = match(np.array([first.as_array(), second.as_array()]), [GroundTruthObject(2, first)], L)
    assert list(m.pos) == [0] and list(m.neg) == [1]


def test_ties_go_to_lowest_gt_index():
    d = Box(0.5, 0.5, 0.5, 0.5)
    g1, g2 = Box(0.25, 0.5, 0.5, 0.5), Box(0.75, 0.5, 0.5, 0.5)
    assert iou(d, g1) == iou(d, g2) == 1 / 3
    m = match(d.as_array()[None], [GroundTruthObject(2, g1), GroundTruthObject(3, g2)], L, threshold=0.3)
    assert m.assigned[0] == 0 and m.Z[0, 1] == 1.0


def test_rejects_background_label():
    with pytest.raises(ValueError):
        GroundTruthObject(1, Box(0.5, 0.5, 0.1, 0.1))


def random_gts(rng, k):
    return [GroundTruthObject(int(rng.integers(2, L + 1)),
                              Box(*rng.uniform(0.1, 0.9, 2), *rng.uniform(0.05, 0.6, 2))) for _ in range(k)]


DEFAULTS = generate(AnchorConfig((6, 3, 1))).boxes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 5), st.floats(0.1, 0.9))
def test_match_properties(seed, k, tau):
    gts = random_gts(np.random.default_rng(seed), k)
    m = match(DEFAULTS, gts, L, tau)
    n = len(DEFAULTS)
    # partition
    assert set(m.pos) | set(m.neg) == set(range(n)) and not set(m.pos) & set(m.neg)
    assert np.all(m.Z.sum(axis=1) <= 1) and set(np.unique(m.Z)) <= {0.0, 1.0}
    # threshold monotonicity
    assert set(match(DEFAULTS, gts, L, min(tau + 0.1, 1.0)).pos) <= set(m.pos)
    for i in m.pos:
        overlaps = [iou(DEFAULTS[i], g.box) for g in gts]
        assert overlaps[m.assigned[i]] == max(overlaps)
        np.testing.assert_allclose(decode(m.B[i], DEFAULTS[i]).as_array(),
                                   gts[m.assigned[i]].box.as_array(), atol=1e-12)
    assert not m.B[m.neg].any()
