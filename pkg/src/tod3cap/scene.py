"""Annotation and prediction data model plus the JSONL readers/writers.

All value types are frozen dataclasses holding tuples, so a loaded corpus can
be shared read-only between evaluator workers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

Vec3 = Tuple[float, float, float]


class FormatError(ValueError):
    """A record in an input file failed to parse or validate."""

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


def wrap_angle(angle: float) -> float:
    """Map an angle in radians into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _vec(values: Sequence[float], n: int, name: str) -> tuple:
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise ValueError(f"{name} must have {n} components, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} has non-finite components: {out}")
    return out


def _finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} is not finite: {value}")
    return value


@dataclass(frozen=True)
class Pose:
    """Ego pose: position, heading about +z and capture time."""

    translation: Vec3
    yaw: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec(self.translation, 3, "translation"))
        object.__setattr__(self, "yaw", wrap_angle(_finite(self.yaw, "yaw")))
        ts = _finite(self.timestamp, "timestamp")
        if ts < 0:
            raise ValueError(f"timestamp must be non-negative, got {ts}")
        object.__setattr__(self, "timestamp", ts)

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])


@dataclass(frozen=True)
class Box3D:
    """Gravity-aligned box; size is (length along heading, width, height)."""

    center: Vec3
    size: Vec3
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, 3, "center"))
        size = _vec(self.size, 3, "size")
        if not all(s > 0 for s in size):
            raise ValueError(f"size components must be positive, got {size}")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", wrap_angle(_finite(self.yaw, "yaw")))

    @property
    def volume(self) -> float:
        return self.size[0] * self.size[1] * self.size[2]

    def to_dict(self) -> Dict[str, Any]:
        return {"center": list(self.center), "size": list(self.size), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Box3D":
        return cls(center=d["center"], size=d["size"], yaw=d.get("yaw", 0.0))


CAPTION_PARTS = ("appearance", "motion", "environment", "relationship")


@dataclass(frozen=True)
class Caption:
    appearance: str = ""
    motion: str = ""
    environment: str = ""
    relationship: str = ""
    full: str = ""

    def __post_init__(self):
        for name in CAPTION_PARTS + ("full",):
            if not isinstance(getattr(self, name), str):
                raise ValueError(f"caption.{name} must be a string")
        if not self.full.strip() and any(getattr(self, p).strip() for p in CAPTION_PARTS):
            raise ValueError("caption.full is empty while a caption part is not")

    def part(self, name: str) -> str:
        return getattr(self, name)

    def to_dict(self) -> Dict[str, str]:
        return {name: getattr(self, name) for name in CAPTION_PARTS + ("full",)}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Caption":
        return cls(**{name: d.get(name, "") for name in CAPTION_PARTS + ("full",)})


@dataclass(frozen=True)
class CameraCalib:
    """Pinhole camera with an ego->camera rigid transform."""

    name: str
    intrinsics: Tuple[Vec3, Vec3, Vec3]
    extrinsic_rotation: Tuple[Vec3, Vec3, Vec3]
    extrinsic_translation: Vec3
    image_size: Tuple[int, int]

    def __post_init__(self):
        K = tuple(_vec(row, 3, "intrinsics row") for row in self.intrinsics)
        R = tuple(_vec(row, 3, "rotation row") for row in self.extrinsic_rotation)
        if len(K) != 3 or len(R) != 3:
            raise ValueError("intrinsics and rotation must be 3x3")
        Km = np.array(K)
        if Km[1, 0] != 0 or Km[2, 0] != 0 or Km[2, 1] != 0:
            raise ValueError("intrinsics must be upper-triangular")
        if Km[0, 0] <= 0 or Km[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        Rm = np.array(R)
        if not np.allclose(Rm @ Rm.T, np.eye(3), atol=1e-6, rtol=0):
            raise ValueError("extrinsic rotation is not orthonormal")
        w, h = (int(v) for v in self.image_size)
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got {self.image_size}")
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "extrinsic_rotation", R)
        object.__setattr__(
            self, "extrinsic_translation",
            _vec(self.extrinsic_translation, 3, "camera translation"))
        object.__setattr__(self, "image_size", (w, h))

    @property
    def K(self) -> np.ndarray:
        return np.array(self.intrinsics)

    @property
    def R(self) -> np.ndarray:
        return np.array(self.extrinsic_rotation)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.extrinsic_translation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "intrinsics": [list(r) for r in self.intrinsics],
            "rotation": [list(r) for r in self.extrinsic_rotation],
            "translation": list(self.extrinsic_translation),
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "CameraCalib":
        return cls(
            name=str(d["name"]),
            intrinsics=d["intrinsics"],
            extrinsic_rotation=d["rotation"],
            extrinsic_translation=d["translation"],
            image_size=d["image_size"],
        )


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: str
    category: str
    box: Box3D
    caption: Caption = field(default_factory=Caption)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "box": self.box.to_dict(),
            "caption": self.caption.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ObjectAnnotation":
        return cls(
            object_id=str(d["object_id"]),
            category=str(d["category"]),
            box=Box3D.from_dict(d["box"]),
            caption=Caption.from_dict(d.get("caption", {})),
        )


@dataclass(frozen=True)
class Frame:
    frame_id: str
    ego_pose: Pose
    objects: Tuple[ObjectAnnotation, ...] = ()
    camera_calibrations: Tuple[CameraCalib, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "camera_calibrations", tuple(self.camera_calibrations))
        seen = set()
        for obj in self.objects:
            if obj.object_id in seen:
                raise ValueError(
                    f"duplicate object_id {obj.object_id!r} in frame {self.frame_id!r}")
            seen.add(obj.object_id)

    @property
    def timestamp(self) -> float:
        return self.ego_pose.timestamp

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "timestamp": self.ego_pose.timestamp,
            "ego_pose": {"translation": list(self.ego_pose.translation), "yaw": self.ego_pose.yaw},
            "cameras": [c.to_dict() for c in self.camera_calibrations],
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Frame":
        frame_id = str(d["frame_id"])
        try:
            pose = d["ego_pose"]
            ego = Pose(pose["translation"], pose.get("yaw", 0.0), d.get("timestamp", 0.0))
            cams = tuple(CameraCalib.from_dict(c) for c in d.get("cameras", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"frame {frame_id!r}: {exc}") from exc
        objects = []
        for o in d.get("objects", []):
            try:
                objects.append(ObjectAnnotation.from_dict(o))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(
                    f"frame {frame_id!r} object {o.get('object_id')!r}: {exc}") from exc
        return cls(frame_id, ego, tuple(objects), cams)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    frames: Tuple[Frame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError(f"scene {self.scene_id!r} has no frames")
        ids = set()
        last_ts = -math.inf
        for fr in self.frames:
            if fr.frame_id in ids:
                raise ValueError(f"duplicate frame_id {fr.frame_id!r} in scene {self.scene_id!r}")
            ids.add(fr.frame_id)
            if not fr.timestamp > last_ts:
                raise ValueError(
                    f"frame {fr.frame_id!r} in scene {self.scene_id!r}: "
                    f"timestamps must be strictly increasing")
            last_ts = fr.timestamp

    def to_dict(self) -> Dict[str, Any]:
        return {"scene_id": self.scene_id, "frames": [f.to_dict() for f in self.frames]}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Scene":
        scene_id = str(d["scene_id"])
        try:
            frames = tuple(Frame.from_dict(f) for f in d["frames"])
            return cls(scene_id, frames)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"scene {scene_id!r}: {exc}") from exc


@dataclass(frozen=True)
class Prediction:
    box: Box3D
    score: float
    caption: Caption = field(default_factory=Caption)

    def __post_init__(self):
        score = _finite(self.score, "score")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {score}")
        object.__setattr__(self, "score", score)

    def to_dict(self) -> Dict[str, Any]:
        return {"box": self.box.to_dict(), "score": self.score, "caption": self.caption.to_dict()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Prediction":
        return cls(Box3D.from_dict(d["box"]), d["score"], Caption.from_dict(d.get("caption", {})))


@dataclass(frozen=True)
class PredictionSet:
    frame_id: str
    predictions: Tuple[Prediction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(self.predictions))

    def to_dict(self) -> Dict[str, Any]:
        return {"frame_id": self.frame_id, "predictions": [p.to_dict() for p in self.predictions]}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "PredictionSet":
        frame_id = str(d["frame_id"])
        preds = []
        for i, p in enumerate(d.get("predictions", [])):
            try:
                preds.append(Prediction.from_dict(p))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"frame {frame_id!r} prediction #{i}: {exc}") from exc
        return cls(frame_id, tuple(preds))


def _iter_records(path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"malformed JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise FormatError(path, lineno, "record is not a JSON object")
            yield lineno, record


def _write_records(records: Sequence[Dict[str, Any]], path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
    os.replace(tmp, path)


def load_scenes(path) -> List[Scene]:
    scenes = []
    for lineno, record in _iter_records(path):
        try:
            scenes.append(Scene.from_dict(record))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, lineno, str(exc)) from exc
    return scenes


def save_scenes(scenes: Sequence[Scene], path) -> None:
    _write_records([s.to_dict() for s in scenes], path)


def load_predictions(path) -> List[PredictionSet]:
    """Read prediction records; repeated frame_ids are merged in file order."""
    merged: Dict[str, List[Prediction]] = {}
    for lineno, record in _iter_records(path):
        try:
            ps = PredictionSet.from_dict(record)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, lineno, str(exc)) from exc
        merged.setdefault(ps.frame_id, []).extend(ps.predictions)
    return [PredictionSet(fid, tuple(preds)) for fid, preds in merged.items()]


def save_predictions(sets: Sequence[PredictionSet], path) -> None:
    _write_records([s.to_dict() for s in sets], path)


def iter_frames(scenes: Sequence[Scene]) -> Iterator[Tuple[Scene, Frame]]:
    for scene in scenes:
        for frame in scene.frames:
            yield scene, frame


def find_frame(scenes: Sequence[Scene], frame_id: str) -> Optional[Frame]:
    for _, frame in iter_frames(scenes):
        if frame.frame_id == frame_id:
            return frame
    return None
