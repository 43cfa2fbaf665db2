"""Spatial relations between objects and template-based driving QA."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .scene import Box3D, Frame, ObjectAnnotation, Pose
from .text import tokenize

SECTORS = ("front", "front-left", "left", "back-left", "back", "back-right", "right", "front-right")
RELATIONS = SECTORS + ("near",)
FAMILIES = ("existence", "counting", "query-object", "query-status", "comparison")
STATUSES = ("moving", "stopped", "parked", "walking", "standing", "unknown")
NEAR_DISTANCE = 2.0
EGO_ID = "ego"
EGO_NAMES = ("ego", "ego car", "ego vehicle")

DEFAULT_ATTRIBUTES = (
    "black", "white", "gray", "grey", "silver", "red", "blue", "green", "yellow",
    "orange", "brown", "purple", "pink", "beige", "gold", "large", "small",
)

# first matching group wins
STATUS_KEYWORDS = (
    ("parked", ("parked", "parking")),
    ("stopped", ("stopped", "stopping", "stationary", "static", "still", "halted", "waiting")),
    ("walking", ("walking", "walks", "walk", "jogging", "strolling")),
    ("standing", ("standing", "stands", "sitting")),
    ("moving", ("moving", "moves", "driving", "drives", "turning", "approaching", "running",
                "riding", "crossing", "traveling", "travelling", "going", "reversing",
                "accelerating", "slowing", "leaving", "following")),
)

_PHRASES = {
    "front": "in the front of", "back": "in the back of",
    "left": "in left of", "right": "in right of",
    "front-left": "in the front left of", "front-right": "in the front right of",
    "back-left": "in the back left of", "back-right": "in the back right of",
    "near": "next to",
}

_IRREGULAR_PLURALS = {"person": "people", "man": "men", "woman": "women", "child": "children",
                      "pedestrian": "pedestrians", "bus": "buses"}


@dataclass(frozen=True)
class SpatialRelation:
    relation: str
    anchor_id: str = EGO_ID
    near: bool = False

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    family: str
    provenance: Dict[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown QA family {self.family!r}")

    def to_dict(self, frame_id: str) -> Dict[str, Any]:
        return {"frame_id": frame_id, "family": self.family, "question": self.question,
                "answer": self.answer, "provenance": self.provenance}


def bearing(target_xy, anchor_xy, anchor_yaw: float) -> float:
    """Degrees in (-180, 180] of target seen from the anchor; +90 is to its left."""
    dx, dy = target_xy[0] - anchor_xy[0], target_xy[1] - anchor_xy[1]
    if dx == 0 and dy == 0:
        raise ValueError("relation undefined: target and anchor positions coincide")
    c, s = math.cos(anchor_yaw), math.sin(anchor_yaw)
    fwd, left = c * dx + s * dy, -s * dx + c * dy
    return math.degrees(math.atan2(left, fwd))


def sector(bearing_deg: float) -> str:
    """45-degree sectors with edges at odd multiples of 22.5; cardinal sectors closed."""
    a = abs(bearing_deg)
    if a <= 22.5:
        return "front"
    if a >= 157.5:
        return "back"
    side = "left" if bearing_deg > 0 else "right"
    if 67.5 <= a <= 112.5:
        return side
    return ("front-" if a < 67.5 else "back-") + side


def spatial_relation(target: Box3D, anchor: Union[Box3D, Pose],
                     anchor_id: str = EGO_ID) -> SpatialRelation:
    if isinstance(anchor, Pose):
        a_xy, a_yaw = anchor.translation, anchor.yaw
    else:
        a_xy, a_yaw = anchor.center, anchor.yaw
    b = bearing(target.center, a_xy, a_yaw)
    dist = math.hypot(target.center[0] - a_xy[0], target.center[1] - a_xy[1])
    return SpatialRelation(sector(b), anchor_id, dist < NEAR_DISTANCE)


def relation_phrase(target_category: str, relation: Union[SpatialRelation, str],
                    anchor_category: str) -> str:
    """Surface form of ``<target> <relation> <anchor>``.

    Ego-anchored relations read as a clause ("the car is in left of the ego
    car"); object anchors give a referring phrase ("the truck in the front of
    a bus").
    """
    rel = relation.relation if isinstance(relation, SpatialRelation) else relation
    if rel not in _PHRASES:
        raise ValueError(f"unknown relation {rel!r}")
    if not target_category.strip() or not anchor_category.strip():
        raise ValueError("categories must be non-empty")
    if anchor_category.strip().lower() in EGO_NAMES:
        return f"the {target_category} is {_PHRASES[rel]} the ego car"
    return f"the {target_category} {_PHRASES[rel]} a {anchor_category}"


def relationship_sentence(frame: Frame, object_id: str) -> str:
    """Relation to the ego car plus, when available, to the nearest other object."""
    objs = {o.object_id: o for o in frame.objects}
    target = objs[object_id]
    parts = [relation_phrase(target.category, spatial_relation(target.box, frame.ego_pose),
                             "ego car")]
    others = [o for o in frame.objects if o.object_id != object_id
              and (o.box.center[0], o.box.center[1]) != (target.box.center[0], target.box.center[1])]
    if others:
        anchor = min(others, key=lambda o: (math.dist(o.box.center, target.box.center), o.object_id))
        rel = spatial_relation(target.box, anchor.box, anchor.object_id)
        name = "near" if rel.near else rel.relation
        parts.append(_PHRASES[name] + f" a {anchor.category}")
    return " and ".join(parts)


def pluralize(noun: str) -> str:
    words = noun.split()
    last = words[-1]
    if last in _IRREGULAR_PLURALS:
        last = _IRREGULAR_PLURALS[last]
    elif last.endswith(("s", "x", "z", "ch", "sh")):
        last += "es"
    elif last.endswith("y") and len(last) > 1 and last[-2] not in "aeiou":
        last = last[:-1] + "ies"
    else:
        last += "s"
    return " ".join(words[:-1] + [last])


def attributes(obj: ObjectAnnotation, lexicon: Sequence[str] = DEFAULT_ATTRIBUTES) -> Tuple[str, ...]:
    """Lexicon words found in the appearance caption, in lexicon order."""
    words = set(tokenize(obj.caption.appearance))
    return tuple(a for a in lexicon if a in words)


def motion_status(obj: ObjectAnnotation) -> str:
    words = set(tokenize(obj.caption.motion))
    for status, keys in STATUS_KEYWORDS:
        if words.intersection(keys):
            return status
    return "unknown"


def frame_seed(seed: int, frame_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{frame_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _describe(attr: Optional[str], category: str, plural: bool = False) -> str:
    noun = pluralize(category) if plural else category
    return f"{attr} {noun}" if attr else noun


class _FrameIndex:
    """Precomputed attributes, statuses and pairwise relations of one frame."""

    def __init__(self, frame: Frame, lexicon: Sequence[str]):
        self.frame = frame
        self.objects = list(frame.objects)
        self.attrs = {o.object_id: attributes(o, lexicon) for o in self.objects}
        self.status = {o.object_id: motion_status(o) for o in self.objects}
        self.rel: Dict[Tuple[str, str], Optional[str]] = {}
        for o in self.objects:
            self.rel[(o.object_id, EGO_ID)] = _safe_sector(o.box, frame.ego_pose)
            for a in self.objects:
                if a.object_id != o.object_id:
                    self.rel[(o.object_id, a.object_id)] = _safe_sector(o.box, a.box)
        self.descriptors = sorted(
            {(a, o.category) for o in self.objects for a in self.attrs[o.object_id]}
            | {(None, o.category) for o in self.objects},
            key=lambda d: (d[1], d[0] or ""))
        self.anchors = [(EGO_ID, None, "ego car")]
        for o in sorted(self.objects, key=lambda o: o.object_id):
            desc = self._unique_description(o)
            if desc is not None:
                self.anchors.append((o.object_id, desc[0], desc[1]))

    def _unique_description(self, obj):
        for attr in self.attrs[obj.object_id] + (None,):
            hits = [o for o in self.objects if self.matches(o, attr, obj.category)]
            if len(hits) == 1:
                return attr, obj.category
        return None

    def matches(self, obj, attr, category) -> bool:
        return obj.category == category and (attr is None or attr in self.attrs[obj.object_id])

    def select(self, anchor_id, relation, attr, category=None) -> List[ObjectAnnotation]:
        return [o for o in self.objects
                if o.object_id != anchor_id
                and self.rel.get((o.object_id, anchor_id)) == relation
                and (category is None or o.category == category)
                and (attr is None or attr in self.attrs[o.object_id])]


def _safe_sector(target: Box3D, anchor) -> Optional[str]:
    try:
        return spatial_relation(target, anchor).relation
    except ValueError:
        return None


def _anchor_text(attr, category) -> str:
    return "the ego car" if category == "ego car" else f"the {_describe(attr, category)}"


def _rel_text(rel: str) -> str:
    return rel.replace("-", " ")


def _candidates(idx: _FrameIndex, family: str) -> List[QAPair]:
    out: List[QAPair] = []
    if family == "counting":
        out.append(QAPair("How many objects are there around the ego car?",
                          str(len(idx.objects)), family,
                          {"template": "count-all"}))
    for anchor_id, a_attr, a_cat in idx.anchors:
        anchor = _anchor_text(a_attr, a_cat)
        base = {"anchor_id": anchor_id, "anchor_attribute": a_attr, "anchor_category": a_cat}
        for rel in SECTORS:
            where = f"to the {_rel_text(rel)} of {anchor}"
            if family == "existence":
                for attr, cat in idx.descriptors:
                    hits = idx.select(anchor_id, rel, attr, cat)
                    out.append(QAPair(
                        f"Are there any {_describe(attr, cat, True)} {where}?",
                        "yes" if hits else "no", family,
                        dict(base, template="exist", relation=rel, attribute=attr, category=cat)))
            elif family == "counting":
                for attr, cat in idx.descriptors:
                    hits = idx.select(anchor_id, rel, attr, cat)
                    out.append(QAPair(
                        f"How many {_describe(attr, cat, True)} are {where}?",
                        str(len(hits)), family,
                        dict(base, template="count", relation=rel, attribute=attr, category=cat)))
            elif family == "query-object":
                attrs = sorted({a for a, _ in idx.descriptors if a}) + [None]
                for attr in attrs:
                    hits = idx.select(anchor_id, rel, attr)
                    if len(hits) != 1:
                        continue
                    thing = f"{attr} object" if attr else "object"
                    out.append(QAPair(
                        f"What is the {thing} {where}?", hits[0].category, family,
                        dict(base, template="query-object", relation=rel, attribute=attr,
                             target_id=hits[0].object_id)))
            elif family == "query-status":
                for attr, cat in idx.descriptors:
                    hits = idx.select(anchor_id, rel, attr, cat)
                    if len(hits) != 1:
                        continue
                    out.append(QAPair(
                        f"What is the status of the {_describe(attr, cat)} {where}?",
                        idx.status[hits[0].object_id], family,
                        dict(base, template="query-status", relation=rel, attribute=attr,
                             category=cat, target_id=hits[0].object_id)))
            elif family == "comparison":
                cats = sorted({c for _, c in idx.descriptors})
                for i, ca in enumerate(cats):
                    for cb in cats[i + 1:]:
                        na = len(idx.select(anchor_id, rel, None, ca))
                        nb = len(idx.select(anchor_id, rel, None, cb))
                        answer = "more" if na > nb else "fewer" if na < nb else "equal"
                        out.append(QAPair(
                            f"Compared with {pluralize(cb)}, are there more, fewer, or an equal "
                            f"number of {pluralize(ca)} {where}?", answer, family,
                            dict(base, template="compare", relation=rel, category=ca,
                                 category_b=cb)))
    return out


def generate_qa(frame: Frame, families: Iterable[str] = FAMILIES, seed: int = 0,
                max_per_family: Optional[int] = None,
                lexicon: Sequence[str] = DEFAULT_ATTRIBUTES) -> List[QAPair]:
    """Instantiate the QA templates over one frame.

    Candidates are enumerated in a fixed order and, when ``max_per_family`` is
    set, subsampled with an RNG seeded from ``(seed, frame_id)``.
    """
    families = set(families)
    unknown = families - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown QA families: {sorted(unknown)}")
    idx = _FrameIndex(frame, lexicon)
    rng = random.Random(frame_seed(seed, frame.frame_id))
    out: List[QAPair] = []
    for family in FAMILIES:
        if family not in families:
            continue
        cands = _candidates(idx, family)
        if max_per_family is not None and len(cands) > max_per_family:
            keep = sorted(rng.sample(range(len(cands)), max_per_family))
            cands = [cands[i] for i in keep]
        out.extend(cands)
    return out
