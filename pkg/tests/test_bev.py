import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tod3cap.bev import (BEVGrid, GridSpec, crop_points_in_box, load_grid, load_points, rasterize,
                         save_grid)
from tod3cap.scene import Box3D

SPEC = GridSpec((-8.0, 8.0), (-4.0, 4.0), (16, 8), (-2.0, 4.0))


def test_empty_cloud():
    g = rasterize(np.zeros((0, 4)), SPEC)
    assert g.point_count.shape == (16, 8)
    assert g.point_count.sum() == 0 and g.out_of_range == 0
    assert np.isnan(g.max_z).all()


def test_single_point_center():
    spec = GridSpec((-1.0, 1.0), (-1.0, 1.0), (1, 1), (-1.0, 1.0))
    g = rasterize([[0.0, 0.0, 0.3, 7.0]], spec)
    assert g.point_count[0, 0] == 1
    assert g.max_z[0, 0] == g.mean_z[0, 0] == 0.3
    assert g.mean_intensity[0, 0] == 7.0


def test_two_heights_in_one_cell():
    g = rasterize([[0.2, 0.2, 1.0, 0.0], [0.3, 0.4, 3.0, 1.0]], SPEC)
    cell = np.argwhere(g.point_count > 0)
    assert cell.tolist() == [[8, 4]]
    assert g.max_z[8, 4] == 3.0 and g.mean_z[8, 4] == 2.0


def test_boundary_convention():
    # left edges go to the upper cell; the range maximum stays in the last cell
    g = rasterize([[-8.0, -4.0, 0, 0], [0.0, 0.0, 0, 0], [8.0, 4.0, 0, 0], [8.01, 0, 0, 0]], SPEC)
    assert g.point_count[0, 0] == 1 and g.point_count[8, 4] == 1 and g.point_count[15, 7] == 1
    assert g.out_of_range == 1
    with pytest.raises(ValueError):
        rasterize([[math.nan, 0, 0, 0]], SPEC)
    with pytest.raises(ValueError):
        GridSpec((1.0, 1.0))
    with pytest.raises(ValueError):
        GridSpec(resolution=(0, 3))


def test_crop_center_face_and_rotated_corner():
    box = Box3D((1.0, 2.0, 0.0), (2.0, 1.0, 1.0), 0.0)
    pts = np.array([[1.0, 2.0, 0.0, 0.0], [2.0, 2.0, 0.0, 0.0], [2.0, 2.5, 0.5, 0.0],
                    [2.001, 2.0, 0.0, 0.0]])
    assert crop_points_in_box(pts, box).tolist() == pts[:3].tolist()

    rbox = Box3D((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), math.pi / 4)
    # local (0.45, 0.45) lies just inside the corner; rotate by +45 degrees by hand
    inside = [0.0, math.sqrt(2) * 0.45, 0.0, 0.0]
    outside = [0.0, math.sqrt(2) * 0.55, 0.0, 0.0]
    # an axis-aligned test would accept (0.45, 0.45) but it lies outside the diamond
    diag = [0.45, 0.45, 0.0, 0.0]
    kept = crop_points_in_box(np.array([inside, outside, diag]), rbox)
    assert kept.tolist() == [inside]
    assert crop_points_in_box(np.zeros((0, 4)), rbox).shape == (0, 4)


coord = st.integers(-80, 80).map(lambda v: v / 8)
point = st.tuples(coord, coord, st.integers(-16, 32).map(lambda v: v / 8),
                  st.integers(0, 100).map(float))
clouds = st.lists(point, max_size=60)


def _same(a: BEVGrid, b: BEVGrid):
    assert np.array_equal(a.point_count, b.point_count)
    for ch in ("max_z", "mean_z", "mean_intensity"):
        assert np.array_equal(getattr(a, ch), getattr(b, ch), equal_nan=True)
    assert a.out_of_range == b.out_of_range


@settings(max_examples=100, deadline=None)
@given(clouds, st.randoms(use_true_random=False))
def test_permutation_invariant_and_conserves_count(pts, rnd):
    g = rasterize(pts, SPEC)
    shuffled = pts[:]
    rnd.shuffle(shuffled)
    _same(g, rasterize(shuffled, SPEC))
    assert g.point_count.sum() + g.out_of_range == len(pts)
    filled = g.point_count > 0
    assert np.all(g.max_z[filled] >= g.mean_z[filled])


@settings(max_examples=100, deadline=None)
@given(clouds, st.integers(-5, 5), st.integers(-5, 5), st.integers(-2, 2))
def test_translation_invariant(pts, dx, dy, dz):
    moved = GridSpec((SPEC.x_range[0] + dx, SPEC.x_range[1] + dx),
                     (SPEC.y_range[0] + dy, SPEC.y_range[1] + dy), SPEC.resolution,
                     (SPEC.z_range[0] + dz, SPEC.z_range[1] + dz))
    a = rasterize(pts, SPEC)
    b = rasterize([(x + dx, y + dy, z + dz, i) for x, y, z, i in pts], moved)
    assert np.array_equal(a.point_count, b.point_count)
    assert np.array_equal(a.max_z + dz, b.max_z, equal_nan=True)
    assert np.allclose(a.mean_z + dz, b.mean_z, equal_nan=True, atol=1e-12)
    assert np.array_equal(a.mean_intensity, b.mean_intensity, equal_nan=True)


@settings(max_examples=60, deadline=None)
@given(clouds, clouds)
def test_merge_matches_joint_rasterization(p, q):
    joint = rasterize(p + q, SPEC)
    merged = rasterize(p, SPEC).merge(rasterize(q, SPEC))
    assert np.array_equal(joint.point_count, merged.point_count)
    assert np.array_equal(joint.max_z, merged.max_z, equal_nan=True)
    assert np.allclose(joint.mean_z, merged.mean_z, equal_nan=True, atol=1e-9)
    assert joint.out_of_range == merged.out_of_range


def test_save_load_roundtrip(tmp_path):
    pts = [[0.2, 0.2, 1.0, 5.0], [3.1, -2.2, 0.5, 1.0], [100, 0, 0, 0]]
    g = rasterize(pts, SPEC)
    meta, binary = save_grid(g, tmp_path / "grid")
    raw = np.fromfile(binary, dtype="<f8")
    assert raw.size == 4 * 16 * 8 and not np.isnan(raw).any()
    _same(g, load_grid(tmp_path / "grid"))
    empty = rasterize([], SPEC)
    _, b2 = save_grid(empty, tmp_path / "empty")
    assert not np.fromfile(b2, dtype="<f8").any()


def test_load_points(tmp_path):
    arr = np.array([[1, 2, 3, 4], [5, 6, 7, 8]], dtype="<f4")
    arr.tofile(tmp_path / "p.bin")
    assert load_points(tmp_path / "p.bin").tolist() == arr.tolist()
    (tmp_path / "p.csv").write_text("# x,y,z,i\n1,2,3,4\n")
    assert load_points(tmp_path / "p.csv").tolist() == [[1, 2, 3, 4]]
    (tmp_path / "e.csv").write_text("")
    assert load_points(tmp_path / "e.csv").shape == (0, 4)
    (tmp_path / "bad.csv").write_text("1,2,3\n")
    with pytest.raises(ValueError):
        load_points(tmp_path / "bad.csv")
