import random

import pytest
from hypothesis import given, strategies as st

from pagebench.geometry import BoundingBox, iou, merge_boxes, vertically_adjacent


def pixel_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Brute-force oracle: count unit cells on the integer grid."""
    inter = 0
    union = 0
    x0 = int(min(a.x, b.x))
    y0 = int(min(a.y, b.y))
    x1 = int(max(a.right, b.right))
    y1 = int(max(a.bottom, b.bottom))
    for x in range(x0, x1):
        for y in range(y0, y1):
            in_a = a.x <= x < a.right and a.y <= y < a.bottom
            in_b = b.x <= x < b.right and b.y <= y < b.bottom
            if in_a and in_b:
                inter += 1
            if in_a or in_b:
                union += 1
    return inter / union if union else 0.0


def test_iou_identity():
    box = BoundingBox(0, 0, 10, 10)
    assert iou(box, box) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 10, 10)) == 0.0


def test_iou_half_overlap_matches_pixel_oracle():
    a = BoundingBox(0, 0, 10, 10)
    b = BoundingBox(5, 0, 10, 10)
    # intersection 50, union 150
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(a, b) == pytest.approx(pixel_iou(a, b))


def test_iou_zero_area_boxes():
    z = BoundingBox(0, 0, 0, 0)
    assert iou(z, z) == 0.0
    assert iou(z, BoundingBox(0, 0, 5, 5)) == 0.0


def test_iou_against_pixel_oracle_randomized():
    rng = random.Random(7)
    for _ in range(200):
        a = BoundingBox(rng.randint(0, 20), rng.randint(0, 20), rng.randint(0, 15), rng.randint(0, 15))
        b = BoundingBox(rng.randint(0, 20), rng.randint(0, 20), rng.randint(0, 15), rng.randint(0, 15))
        assert iou(a, b) == pytest.approx(pixel_iou(a, b))


def test_merge_overlapping():
    assert merge_boxes(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 10, 10)) == BoundingBox(0, 0, 15, 10)


def test_merge_identity():
    box = BoundingBox(0, 0, 10, 10)
    assert merge_boxes(box, box) == box


def test_merge_diagonal_hull():
    assert merge_boxes(BoundingBox(0, 0, 4, 4), BoundingBox(2, 2, 4, 4)) == BoundingBox(0, 0, 6, 6)


def test_negative_extent_rejected():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, -1, 5)


# Extents are either exactly zero or large enough that float cancellation
# against coordinates up to 1000 stays negligible (CSS-pixel scale).
extents = st.one_of(st.just(0.0), st.floats(0.01, 500))
boxes = st.builds(
    BoundingBox,
    x=st.floats(-1000, 1000),
    y=st.floats(-1000, 1000),
    width=extents,
    height=extents,
)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == pytest.approx(iou(b, a))
    assert 0.0 <= iou(a, b) <= 1.0 + 1e-12


@given(boxes)
def test_iou_self_is_one_for_positive_area(box):
    if box.area > 0:
        assert iou(box, box) == pytest.approx(1.0)


@given(boxes, boxes)
def test_merge_commutative_and_contains(a, b):
    m1 = merge_boxes(a, b)
    m2 = merge_boxes(b, a)
    assert m1 == m2
    assert m1.contains(a, tol=1e-9) and m1.contains(b, tol=1e-9)


def test_vertical_adjacency():
    top = BoundingBox(0, 0, 100, 50)
    touching = BoundingBox(0, 50, 100, 50)
    gapped = BoundingBox(0, 51, 100, 50)
    aside = BoundingBox(200, 50, 100, 50)
    assert vertically_adjacent(top, touching)
    assert not vertically_adjacent(top, gapped)
    assert not vertically_adjacent(top, aside)
