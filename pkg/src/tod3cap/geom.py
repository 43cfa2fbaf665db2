"""Oriented box geometry, pinhole projection and per-object kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .scene import Box3D, CameraCalib, Pose, Scene

__all__ = [
    "CameraCalib", "Rect2D", "ObjectContext", "box_corners", "bev_corners",
    "clip_convex_polygon", "polygon_area", "iou3d", "bev_iou", "project_box",
    "viewing_direction", "distance", "speed", "object_contexts",
]

# clipped footprints below this area (m^2) are treated as empty
AREA_EPS = 1e-12
# depth of the near plane used to cut box edges that cross behind the camera
NEAR_DEPTH = 1e-3

_UNIT_CORNERS = np.array([
    [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5],
    [-0.5, -0.5, 0.5], [0.5, -0.5, 0.5], [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5],
])
_EDGES = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
          (0, 4), (1, 5), (2, 6), (3, 7)]


@dataclass(frozen=True)
class Rect2D:
    min: Tuple[float, float]
    max: Tuple[float, float]

    def __post_init__(self):
        if not (self.min[0] <= self.max[0] and self.min[1] <= self.max[1]):
            raise ValueError(f"Rect2D min {self.min} exceeds max {self.max}")

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.min[0] + self.max[0]) / 2, (self.min[1] + self.max[1]) / 2)

    def to_list(self) -> List[float]:
        return [self.min[0], self.min[1], self.max[0], self.max[1]]


@dataclass(frozen=True)
class ObjectContext:
    viewing_direction_deg: float
    distance_m: float
    speed_mps: Optional[float]


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_corners(box: Box3D) -> np.ndarray:
    """(8, 3) corners: bottom face CCW seen from +z, then the top face."""
    local = _UNIT_CORNERS * np.asarray(box.size)
    return local @ rot_z(box.yaw).T + np.asarray(box.center)


def bev_corners(box: Box3D) -> np.ndarray:
    """(4, 2) counter-clockwise footprint of the box."""
    return box_corners(box)[:4, :2]


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def clip_convex_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip ``subject`` against convex CCW polygon ``clip``."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        a, b = clip[i], clip[(i + 1) % n]
        inp, output = output, []
        if not inp:
            break
        prev = inp[-1]
        prev_side = _cross(a, b, prev)
        for cur in inp:
            cur_side = _cross(a, b, cur)
            if cur_side >= 0:
                if prev_side < 0:
                    output.append(_intersect(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0:
                output.append(_intersect(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return np.array(output, dtype=float).reshape(-1, 2)


def _intersect(p, q, sp: float, sq: float) -> tuple:
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _bev_intersection_area(a: Box3D, b: Box3D) -> float:
    ra, rb = max(a.size[0], a.size[1]), max(b.size[0], b.size[1])
    dx, dy = a.center[0] - b.center[0], a.center[1] - b.center[1]
    if dx * dx + dy * dy > (ra + rb) ** 2:
        return 0.0
    poly = clip_convex_polygon(bev_corners(a), bev_corners(b))
    area = polygon_area(poly)
    return area if area >= AREA_EPS else 0.0


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = _bev_intersection_area(a, b)
    union = a.size[0] * a.size[1] + b.size[0] * b.size[1] - inter
    return min(1.0, max(0.0, inter / union))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact IoU of two yaw-rotated boxes."""
    if a == b:
        return 1.0
    za, zb = a.center[2], b.center[2]
    overlap_z = min(za + a.size[2] / 2, zb + b.size[2] / 2) - max(za - a.size[2] / 2, zb - b.size[2] / 2)
    if overlap_z <= 0:
        return 0.0
    inter = _bev_intersection_area(a, b) * overlap_z
    if inter <= 0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))


def world_to_ego(points: np.ndarray, ego: Pose) -> np.ndarray:
    return (np.asarray(points) - np.asarray(ego.translation)) @ rot_z(ego.yaw)


def project_box(box: Box3D, ego: Pose, cam: CameraCalib) -> Optional[Rect2D]:
    """Image-space hull of a global-frame box, clipped to the image.

    Returns None when every corner is at non-positive camera depth or when the
    hull misses the image entirely.
    """
    pts = world_to_ego(box_corners(box), ego) @ cam.R.T + cam.t
    depth = pts[:, 2]
    if np.all(depth <= 0):
        return None
    keep = [pts[i] for i in range(8) if depth[i] > 0]
    for i, j in _EDGES:
        di, dj = depth[i], depth[j]
        if (di > NEAR_DEPTH) != (dj > NEAR_DEPTH):
            t = (NEAR_DEPTH - di) / (dj - di)
            keep.append(pts[i] + t * (pts[j] - pts[i]))
    uvw = np.array(keep) @ cam.K.T
    uv = uvw[:, :2] / uvw[:, 2:3]
    w, h = cam.image_size
    lo = np.clip(uv.min(axis=0), [0, 0], [w, h])
    hi = np.clip(uv.max(axis=0), [0, 0], [w, h])
    if lo[0] >= hi[0] or lo[1] >= hi[1]:
        return None
    return Rect2D((float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1])))


def viewing_direction(target: Box3D, ego: Pose) -> float:
    """Angle in degrees between the ego heading and the ray ego -> target."""
    ray = np.asarray(target.center) - np.asarray(ego.translation)
    norm = float(np.linalg.norm(ray))
    if norm == 0.0:
        raise ValueError("viewing direction undefined: target coincides with ego position")
    heading = ego.heading
    # atan2 form of arccos(dot / norms); stays accurate near 0 and 180 degrees
    cos_part = float(np.dot(ray, heading))
    sin_part = float(np.linalg.norm(np.cross(ray, heading)))
    return math.degrees(math.atan2(sin_part, cos_part))


def distance(target: Box3D, ego: Pose) -> float:
    return math.dist(target.center, ego.translation)


def speed(track: Sequence[Tuple[float, Sequence[float]]]) -> np.ndarray:
    """Per-sample speed of a time-ordered track of (timestamp, position).

    Velocity uses the second-order central difference on the (possibly
    non-uniform) time grid at interior samples and one-sided differences at
    the two ends.
    """
    if len(track) < 2:
        raise ValueError("speed needs at least two samples")
    t = np.array([float(s[0]) for s in track])
    pos = np.array([list(map(float, s[1])) for s in track])
    if np.any(np.diff(t) <= 0):
        raise ValueError("track timestamps must be strictly increasing")
    dt = np.diff(t)[:, None]
    step = np.diff(pos, axis=0)
    velocity = np.empty_like(pos)
    velocity[0] = step[0] / dt[0]
    velocity[-1] = step[-1] / dt[-1]
    if len(t) > 2:
        hp, hn = dt[:-1], dt[1:]
        # three-point derivative on a non-uniform grid, written on the
        # increments so a constant track gives exactly zero
        velocity[1:-1] = (hp / (hn * (hp + hn))) * step[1:] + (hn / (hp * (hp + hn))) * step[:-1]
    return np.linalg.norm(velocity, axis=1)


def object_contexts(scene: Scene) -> Dict[Tuple[str, str], ObjectContext]:
    """Viewing direction, distance and speed for every (frame_id, object_id).

    Speed is taken along the object's track across the scene's frames and is
    None for objects seen in a single frame.
    """
    tracks: Dict[str, List[Tuple[float, tuple, str]]] = {}
    for frame in scene.frames:
        for obj in frame.objects:
            tracks.setdefault(obj.object_id, []).append(
                (frame.timestamp, obj.box.center, frame.frame_id))
    speeds: Dict[Tuple[str, str], float] = {}
    for oid, samples in tracks.items():
        if len(samples) < 2:
            continue
        for (_, _, fid), v in zip(samples, speed([(t, p) for t, p, _ in samples])):
            speeds[(fid, oid)] = float(v)

    out = {}
    for frame in scene.frames:
        for obj in frame.objects:
            try:
                theta = viewing_direction(obj.box, frame.ego_pose)
            except ValueError:
                theta = 0.0
            out[(frame.frame_id, obj.object_id)] = ObjectContext(
                theta, distance(obj.box, frame.ego_pose), speeds.get((frame.frame_id, obj.object_id)))
    return out
