import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from builders import EGO_TO_CAM, pinhole
from oracles import monte_carlo_iou
from tod3cap.geom import (Rect2D, box_corners, clip_convex_polygon, distance, iou3d,
                          object_contexts, polygon_area, project_box, speed, viewing_direction)
from tod3cap.scene import Box3D, Pose
from builders import frame, obj, scene

ORIGIN = Pose((0.0, 0.0, 0.0), 0.0, 0.0)


def test_unit_box_corners():
    c = box_corners(Box3D((0, 0, 0), (1, 1, 1)))
    assert sorted(map(tuple, c)) == sorted(
        (x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5))
    # bottom face first, counter-clockwise from above
    assert np.all(c[:4, 2] == -0.5) and np.all(c[4:, 2] == 0.5)
    assert polygon_area(c[:4, :2]) > 0


def test_quarter_turn_swaps_extents():
    c = box_corners(Box3D((0, 0, 0), (2, 1, 1), math.pi / 2))
    assert np.ptp(c[:, 0]) == pytest.approx(1.0)
    assert np.ptp(c[:, 1]) == pytest.approx(2.0)


def test_45_degree_corner():
    c = box_corners(Box3D((0, 0, 0), (2, 2, 2), math.pi / 4))
    for z in (-1.0, 1.0):
        assert np.any(np.all(np.isclose(c, [math.sqrt(2), 0.0, z], atol=1e-12), axis=1))


def test_clip_square_against_shifted_square():
    a = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
    b = a + [1, 1]
    assert polygon_area(clip_convex_polygon(a, b)) == pytest.approx(1.0)
    assert polygon_area(clip_convex_polygon(a, a + [5, 0])) == 0.0


def test_iou_identity_and_axis_aligned():
    b = Box3D((1.3, -2, 0.4), (4.1, 1.9, 1.6), 0.7)
    assert iou3d(b, b) == 1.0
    a = Box3D((0, 0, 0), (2, 2, 2))
    assert iou3d(a, Box3D((1, 0, 0), (2, 2, 2))) == pytest.approx(1 / 3, abs=1e-15)
    assert iou3d(a, Box3D((3, 0, 0), (2, 2, 2))) == 0.0
    assert iou3d(a, Box3D((0, 0, 2.5), (2, 2, 2))) == 0.0


def test_iou_rotated_cocentered_matches_monte_carlo():
    a = Box3D((0, 0, 0), (2, 2, 2), 0.0)
    b = Box3D((0, 0, 0), (2, 2, 2), math.pi / 4)
    # footprint overlap is the regular octagon of area 8(sqrt2 - 1); heights coincide
    octagon = 8 * (math.sqrt(2) - 1)
    exact = octagon / (8 - octagon)
    oracle = monte_carlo_iou((a.center, a.size, a.yaw), (b.center, b.size, b.yaw))
    assert iou3d(a, b) == pytest.approx(exact, abs=1e-12)
    assert abs(iou3d(a, b) - oracle) <= 2e-3


coord = st.floats(-3, 3)
dim = st.floats(0.3, 4)
yaw = st.floats(-math.pi, math.pi)
boxes = st.builds(lambda x, y, z, l, w, h, t: Box3D((x, y, z), (l, w, h), t),
                  coord, coord, st.floats(-1, 1), dim, dim, dim, yaw)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_bounded(a, b):
    v = iou3d(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou3d(b, a), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, st.floats(-50, 50), st.floats(-50, 50), st.floats(-5, 5), yaw)
def test_iou_rigid_motion_invariant(a, b, tx, ty, tz, dyaw):
    c, s = math.cos(dyaw), math.sin(dyaw)

    def move(box):
        x, y, z = box.center
        return Box3D((c * x - s * y + tx, s * x + c * y + ty, z + tz), box.size, box.yaw + dyaw)

    assert iou3d(move(a), move(b)) == pytest.approx(iou3d(a, b), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(boxes, boxes)
def test_iou_monte_carlo_property(a, b):
    oracle = monte_carlo_iou((a.center, a.size, a.yaw), (b.center, b.size, b.yaw))
    assert abs(iou3d(a, b) - oracle) <= 2e-3


def test_project_centered_box_hits_principal_point():
    cam = pinhole()
    r = project_box(Box3D((0, 0, 10), (1, 1, 1)), ORIGIN, cam)
    assert r.center == pytest.approx((800.0, 450.0))


def test_project_behind_camera_is_absent():
    assert project_box(Box3D((0, 0, -10), (1, 1, 1)), ORIGIN, pinhole()) is None


def test_project_unit_box_half_extent():
    # the near face at depth 4.5 bounds the hull: 0.5 * 500 / 4.5
    r = project_box(Box3D((0, 0, 5), (1, 1, 1)), ORIGIN, pinhole())
    assert (r.max[0] - r.min[0]) / 2 == pytest.approx(0.5 * 500 / 4.5, abs=1e-9)
    # a sheet-thin box at depth 5 gives the plain similar-triangles value
    thin = project_box(Box3D((0, 0, 5), (1, 1, 1e-9)), ORIGIN, pinhole())
    # box z is the optical axis here, so size[2] is the depth extent
    assert (thin.max[0] - thin.min[0]) / 2 == pytest.approx(50.0, abs=1e-6)


def test_project_through_ego_pose_and_extrinsics():
    cam = pinhole(rotation=EGO_TO_CAM)
    ego = Pose((100.0, 50.0, 0.0), math.pi / 2, 0.0)
    # 10 m ahead of an ego facing +y
    r = project_box(Box3D((100.0, 60.0, 0.0), (1, 1, 1)), ego, cam)
    assert r.center == pytest.approx((800.0, 450.0), abs=1e-9)
    assert project_box(Box3D((100.0, 40.0, 0.0), (1, 1, 1)), ego, cam) is None


def test_project_straddling_box_clipped_to_image():
    r = project_box(Box3D((0, 0, 0.2), (1, 1, 1)), ORIGIN, pinhole())
    assert r == Rect2D((0.0, 0.0), (1600.0, 900.0))


def test_project_monotone_under_lateral_motion():
    cam = pinhole(rotation=EGO_TO_CAM)
    xs = []
    for y in np.linspace(-3, 3, 13):
        # +y in ego is left, so the image column decreases
        xs.append(project_box(Box3D((20.0, y, 0.0), (4, 2, 1.5)), ORIGIN, cam).center[0])
    assert all(b < a for a, b in zip(xs, xs[1:]))
    rows = [project_box(Box3D((20.0, 0.0, z), (4, 2, 1.5)), ORIGIN, cam).center[1]
            for z in np.linspace(-2, 2, 9)]
    assert all(b < a for a, b in zip(rows, rows[1:]))


def test_viewing_direction_cases():
    assert viewing_direction(Box3D((10, 0, 0), (1, 1, 1)), ORIGIN) == 0.0
    assert viewing_direction(Box3D((-10, 0, 0), (1, 1, 1)), ORIGIN) == 180.0
    assert viewing_direction(Box3D((0, 7, 0), (1, 1, 1)), ORIGIN) == 90.0
    assert viewing_direction(Box3D((0, -7, 0), (1, 1, 1)), ORIGIN) == 90.0
    with pytest.raises(ValueError):
        viewing_direction(Box3D((0, 0, 0), (1, 1, 1)), ORIGIN)


@given(st.floats(-math.pi, math.pi), st.floats(-180, 180), st.floats(0.5, 100), st.floats(0.01, 50))
def test_viewing_direction_scale_invariant(ego_yaw, bearing, r, scale):
    ego = Pose((3.0, -4.0, 0.0), ego_yaw, 0.0)
    ang = ego_yaw + math.radians(bearing)
    off = np.array([math.cos(ang), math.sin(ang), 0.0]) * r
    t1 = Box3D(tuple(np.array(ego.translation) + off), (1, 1, 1))
    t2 = Box3D(tuple(np.array(ego.translation) + off * scale), (1, 1, 1))
    v1, v2 = viewing_direction(t1, ego), viewing_direction(t2, ego)
    assert 0.0 <= v1 <= 180.0
    assert v1 == pytest.approx(v2, abs=1e-9)
    assert v1 == pytest.approx(abs(bearing), abs=1e-7)


def test_distance_cases():
    assert distance(Box3D((0, 0, 0), (1, 1, 1)), ORIGIN) == 0.0
    assert distance(Box3D((3, 4, 0), (1, 1, 1)), ORIGIN) == 5.0
    assert distance(Box3D((1, 2, 2), (1, 1, 1)), ORIGIN) == 3.0


pts3 = st.tuples(*[st.floats(-1e3, 1e3)] * 3)


@given(pts3, pts3, pts3)
def test_distance_metric_properties(a, b, c):
    def d(p, q):
        return distance(Box3D(p, (1, 1, 1)), Pose(q, 0.0, 0.0))
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-9)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9


def test_speed_cases():
    assert list(speed([(0, (1, 1, 1)), (1, (1, 1, 1)), (3, (1, 1, 1))])) == [0, 0, 0]
    assert list(speed([(0, (0, 0, 0)), (1, (2, 0, 0))])) == [2.0, 2.0]
    assert speed([(0, (0, 0, 0)), (1, (1, 0, 0)), (2, (4, 0, 0))])[1] == 2.0
    with pytest.raises(ValueError):
        speed([(0, (0, 0, 0)), (0, (1, 0, 0))])
    with pytest.raises(ValueError):
        speed([(0, (0, 0, 0))])


@given(st.lists(st.floats(0.1, 2.0), min_size=1, max_size=6), st.lists(pts3, min_size=7, max_size=7),
       pts3)
def test_speed_translation_invariant_nonnegative(dts, positions, shift):
    t = np.cumsum([0.0] + dts)
    track = list(zip(t, positions[:len(t)]))
    moved = [(ti, tuple(np.add(p, shift))) for ti, p in track]
    v = speed(track)
    assert np.all(v >= 0)
    np.testing.assert_allclose(speed(moved), v, rtol=1e-6, atol=1e-6)


def test_object_contexts_track_speed():
    sc = scene("s", [frame(f"f{i}", [obj("a", center=(10.0 + 2 * i, 0, 0)), obj(f"solo{i}", center=(0, 5, 0))],
                           ts=float(i)) for i in range(3)])
    ctx = object_contexts(sc)
    assert ctx[("f1", "a")].speed_mps == 2.0
    assert ctx[("f1", "a")].distance_m == 12.0
    assert ctx[("f1", "a")].viewing_direction_deg == 0.0
    assert ctx[("f0", "solo0")].speed_mps is None
    assert ctx[("f0", "solo0")].viewing_direction_deg == 90.0
