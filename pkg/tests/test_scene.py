import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from builders import frame, obj, pinhole, scene
from tod3cap.scene import (Box3D, Caption, FormatError, Pose, PredictionSet, Prediction,
                           load_predictions, load_scenes, save_predictions, save_scenes,
                           wrap_angle)


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def scene_record(yaw=0.0, score=None):
    return {
        "scene_id": "s0",
        "frames": [{
            "frame_id": "f0", "timestamp": 1.5,
            "ego_pose": {"translation": [1.0, 2.0, 0.0], "yaw": 0.1},
            "cameras": [],
            "objects": [{
                "object_id": "o0", "category": "car",
                "box": {"center": [5.0, 0.0, 0.5], "size": [4.0, 2.0, 1.5], "yaw": yaw},
                "caption": {"appearance": "a red car", "motion": "", "environment": "",
                            "relationship": "", "full": "a red car"},
            }],
        }],
    }


def test_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_scenes(p) == []
    assert load_predictions(p) == []


def test_single_object_roundtrip_bit_identical(tmp_path):
    p = tmp_path / "s.jsonl"
    write_lines(p, [scene_record()])
    scenes = load_scenes(p)
    assert len(scenes) == 1 and len(scenes[0].frames) == 1 and len(scenes[0].frames[0].objects) == 1
    out = tmp_path / "out.jsonl"
    save_scenes(scenes, out)
    again = load_scenes(out)
    assert again == scenes
    save_scenes(again, tmp_path / "out2.jsonl")
    assert (tmp_path / "out2.jsonl").read_bytes() == out.read_bytes()


def test_yaw_normalized_on_load(tmp_path):
    p = tmp_path / "s.jsonl"
    write_lines(p, [scene_record(yaw=4.0)])
    yaw = load_scenes(p)[0].frames[0].objects[0].box.yaw
    assert yaw == pytest.approx(4.0 - 2 * math.pi, abs=1e-15)
    assert yaw == pytest.approx(-2.2832, abs=1e-4)


def test_save_empty_and_order(tmp_path):
    out = tmp_path / "e.jsonl"
    save_scenes([], out)
    assert out.read_text() == ""
    frames = [frame(f"f{i}", [obj("a")], ts=float(t)) for t, i in enumerate((2, 0, 1))]
    save_scenes([scene("s", frames)], out)
    loaded = load_scenes(out)[0]
    assert [f.frame_id for f in loaded.frames] == ["f2", "f0", "f1"]


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(scene_record()) + "\n{not json\n")
    with pytest.raises(FormatError) as err:
        load_scenes(p)
    assert err.value.line == 2


def test_invariant_violation_names_ids(tmp_path):
    rec = scene_record()
    rec["frames"][0]["objects"][0]["box"]["size"] = [0.0, 1.0, 1.0]
    p = tmp_path / "bad.jsonl"
    write_lines(p, [rec])
    with pytest.raises(FormatError) as err:
        load_scenes(p)
    msg = str(err.value)
    assert "s0" in msg and "f0" in msg and "o0" in msg and ":1:" in msg


def test_duplicate_object_and_nonmonotone_time_rejected():
    with pytest.raises(ValueError):
        frame("f", [obj("a"), obj("a")])
    with pytest.raises(ValueError):
        scene("s", [frame("f0", ts=1.0), frame("f1", ts=1.0)])
    with pytest.raises(ValueError):
        scene("s", [])


def test_caption_full_required_when_parts_present():
    with pytest.raises(ValueError):
        Caption(appearance="red car", full="")
    Caption()


def test_prediction_score_out_of_range_names_record(tmp_path):
    p = tmp_path / "p.jsonl"
    write_lines(p, [{"frame_id": "f9", "predictions": [
        {"box": {"center": [0, 0, 0], "size": [1, 1, 1], "yaw": 0}, "score": 1.5, "caption": {}}]}])
    with pytest.raises(FormatError) as err:
        load_predictions(p)
    assert "f9" in str(err.value) and "#0" in str(err.value)


def test_two_predictions_one_set(tmp_path):
    box = {"center": [0, 0, 0], "size": [1, 1, 1], "yaw": 0}
    p = tmp_path / "p.jsonl"
    write_lines(p, [{"frame_id": "f", "predictions": [
        {"box": box, "score": 0.5, "caption": {"full": "a"}},
        {"box": box, "score": 0.7, "caption": {"full": "b"}}]}])
    sets = load_predictions(p)
    assert len(sets) == 1 and len(sets[0].predictions) == 2


def test_repeated_frame_records_merge(tmp_path):
    box = {"center": [0, 0, 0], "size": [1, 1, 1], "yaw": 0}
    p = tmp_path / "p.jsonl"
    write_lines(p, [{"frame_id": "f", "predictions": [{"box": box, "score": 0.5}]},
                    {"frame_id": "g", "predictions": []},
                    {"frame_id": "f", "predictions": [{"box": box, "score": 0.6}]}])
    sets = load_predictions(p)
    assert [s.frame_id for s in sets] == ["f", "g"]
    assert [x.score for x in sets[0].predictions] == [0.5, 0.6]


def test_camera_roundtrip(tmp_path):
    sc = scene("s", [frame("f", [obj("a", center=(10, 0, 0))], cameras=[pinhole()])])
    out = tmp_path / "c.jsonl"
    save_scenes([sc], out)
    assert load_scenes(out) == [sc]


def test_camera_validation():
    with pytest.raises(ValueError):
        pinhole(focal=-1.0)
    with pytest.raises(ValueError):
        pinhole(rotation=((1.0, 0.0, 0.0), (0.0, 2.0, 0.0), (0.0, 0.0, 1.0)))


finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(0.01, 50.0)
angle = st.floats(-20.0, 20.0)


@st.composite
def predictions(draw):
    box = Box3D((draw(finite), draw(finite), draw(finite)),
                (draw(positive), draw(positive), draw(positive)), draw(angle))
    return Prediction(box, draw(st.floats(0.0, 1.0)),
                      Caption(full=draw(st.text(max_size=20).filter(lambda s: s.strip()))))


@settings(max_examples=50, deadline=None)
@given(st.lists(predictions(), max_size=4), st.text(min_size=1, max_size=8))
def test_prediction_roundtrip_law(tmp_path_factory, preds, fid):
    out = tmp_path_factory.mktemp("rt") / "p.jsonl"
    sets = [PredictionSet(fid, tuple(preds))]
    save_predictions(sets, out)
    assert load_predictions(out) == sets


@given(st.floats(-1e6, 1e6))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)


def test_pose_rejects_negative_time():
    with pytest.raises(ValueError):
        Pose((0, 0, 0), 0.0, -1.0)
