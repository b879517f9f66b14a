import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posterdiff.geometry import (
    BBox,
    Element,
    Layout,
    area,
    center_sentinel_box,
    clamp_to_canvas,
    contains,
    intersection_area,
    iou,
)

from .oracles import raster_intersection_area

finite_boxes = st.builds(
    BBox,
    cx=st.floats(-0.5, 1.5),
    cy=st.floats(-0.5, 1.5),
    w=st.floats(0, 1.2),
    h=st.floats(0, 1.2),
)


def test_area_full_canvas():
    assert area(BBox(0.5, 0.5, 1, 1)) == 1.0


def test_area_degenerate_width():
    assert area(BBox(0.2, 0.7, 0, 0.3)) == 0.0


def test_area_product():
    assert area(BBox(0.5, 0.5, 0.25, 0.4)) == pytest.approx(0.1)


def test_negative_size_rejected():
    with pytest.raises(ValueError):
        BBox(0.5, 0.5, -0.1, 0.2)


def test_intersection_self():
    b = BBox(0.3, 0.3, 0.5, 0.2)
    assert intersection_area(b, b) == pytest.approx(area(b))


def test_intersection_disjoint():
    assert intersection_area(BBox(0.1, 0.1, 0.1, 0.1), BBox(0.9, 0.9, 0.1, 0.1)) == 0.0


def test_intersection_quarter_overlap():
    # expected value frozen from the 1024^2 pixel-center oracle
    a = BBox(0.25, 0.25, 0.5, 0.5)
    b = BBox(0.5, 0.5, 0.5, 0.5)
    assert raster_intersection_area(a, b) == pytest.approx(0.0625, abs=2e-3)
    assert intersection_area(a, b) == pytest.approx(0.0625)


def test_iou_identical():
    b = BBox(0.4, 0.4, 0.2, 0.3)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0.1, 0.1, 0.1, 0.1), BBox(0.9, 0.9, 0.1, 0.1)) == 0.0


def test_iou_quarter_overlap_value():
    a = BBox(0.25, 0.25, 0.5, 0.5)
    b = BBox(0.5, 0.5, 0.5, 0.5)
    assert iou(a, b) == pytest.approx(0.0625 / (0.25 + 0.25 - 0.0625))


def test_iou_zero_area_boxes():
    z = BBox(0.5, 0.5, 0, 0)
    assert iou(z, z) == 0.0


def test_contains_full_canvas():
    outer = BBox(0.5, 0.5, 1, 1)
    assert contains(outer, BBox(0.3, 0.8, 0.2, 0.1), eps=0)


def test_contains_closed():
    b = BBox(0.5, 0.5, 0.4, 0.4)
    assert contains(b, b, eps=0)


def test_contains_shifted_out():
    eps = 0.01
    outer = BBox(0.5, 0.5, 0.4, 0.4)
    inner = BBox(0.5 + 0.4 + 2 * eps, 0.5, 0.4, 0.4)
    assert not contains(outer, inner, eps=eps)


def test_clamp_identity_in_bounds():
    b = BBox(0.5, 0.5, 0.4, 0.2)
    assert clamp_to_canvas(b) == b


def test_clamp_right_edge():
    b = clamp_to_canvas(BBox(1.2, 0.5, 0.6, 0.2))
    # corner extent (0.9, 1.5) clips to (0.9, 1.0)
    assert b.x0 == pytest.approx(0.9)
    assert b.x1 == pytest.approx(1.0)
    assert b.w == pytest.approx(0.1)
    assert b.cx == pytest.approx(0.95)
    assert b.cy == pytest.approx(0.5)


def test_clamp_fully_outside():
    b = clamp_to_canvas(BBox(2.0, -1.0, 0.2, 0.2))
    assert area(b) == 0.0
    x0, y0, x1, y1 = b.corners()
    assert 0 <= x0 <= 1 and 0 <= y0 <= 1 and 0 <= x1 <= 1 and 0 <= y1 <= 1


@given(finite_boxes, finite_boxes)
def test_iou_symmetry(a, b):
    assert iou(a, b) == iou(b, a)


@given(finite_boxes, finite_boxes)
def test_bounds(a, b):
    v = iou(a, b)
    assert 0 <= v <= 1
    assert intersection_area(a, b) <= min(area(a), area(b)) + 1e-12


# sizes bounded away from zero so that corner rounding cannot swallow a box
solid_boxes = st.builds(
    BBox,
    cx=st.floats(-0.5, 1.5),
    cy=st.floats(-0.5, 1.5),
    w=st.floats(1e-3, 1.2),
    h=st.floats(1e-3, 1.2),
)


@given(solid_boxes, solid_boxes)
def test_mutual_containment_implies_iou_one(a, b):
    if contains(a, b, 0) and contains(b, a, 0):
        assert iou(a, b) == pytest.approx(1.0)


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_intersection_matches_rasterizer(seed):
    rng = np.random.default_rng(seed)
    a = BBox(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1))
    b = BBox(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1))
    a, b = clamp_to_canvas(a), clamp_to_canvas(b)
    assert intersection_area(a, b) == pytest.approx(raster_intersection_area(a, b, 1024), abs=1e-2)


@given(finite_boxes)
def test_clamp_in_canvas(b):
    c = clamp_to_canvas(b)
    x0, y0, x1, y1 = c.corners()
    assert -1e-9 <= x0 <= x1 <= 1 + 1e-9
    assert -1e-9 <= y0 <= y1 <= 1 + 1e-9


def test_sentinel_box():
    s = center_sentinel_box()
    assert (s.cx, s.cy, s.w, s.h) == (0.5, 0.5, 0.0, 0.0)


def test_layout_json_round_trip():
    layout = Layout(
        [
            Element("text", BBox(0.5, 0.3, 0.4, 0.1)),
            Element("underlay", BBox(0.5, 0.3, 0.44, 0.14)),
            Element("logo", BBox(0.1, 0.1, 0.12, 0.08)),
        ]
    )
    again = Layout.from_json(layout.to_json())
    assert again == layout
    assert [e.category for e in again.by_category("text")] == ["text"]


def test_unknown_category_rejected():
    with pytest.raises(ValueError):
        Element("banner", BBox(0.5, 0.5, 0.1, 0.1))
