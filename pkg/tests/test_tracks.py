"""Built-in track builders and the JSON track-file format."""

import json
import math

import pytest

from crllk.geometry import Arc, Straight
from crllk.tracks import (
    BUILTIN_TRACKS,
    TrackFileError,
    build_track,
    load_track_file,
    small_loop,
    track_from_dict,
    track_to_dict,
)


def test_builtins_build_and_validate():
    for name, builder in BUILTIN_TRACKS.items():
        t = builder()
        assert t.total_length > 1.0, name
        assert t.lane_width == pytest.approx(0.22)
        assert t.road_half_width == pytest.approx(0.25)


def test_obstacle_loop_obstacles_on_track():
    t = build_track("obstacle_loop")
    assert len(t.obstacles) == 2
    for ob in t.obstacles:
        # both sit on the reference line, well inside the drivable band
        from crllk.geometry import project_pose

        pose = project_pose(t, ob.center, 0.0)
        assert abs(pose.signed_deviation) < 1e-6


def test_build_track_unknown_name():
    with pytest.raises(TrackFileError) as ei:
        build_track("no_such_track")
    assert "small_loop" in str(ei.value)  # error lists what exists


def test_json_round_trip(tmp_path):
    t = small_loop()
    data = track_to_dict(t)
    t2 = track_from_dict(data)
    assert t2.total_length == pytest.approx(t.total_length, abs=1e-12)
    assert t2.closed == t.closed
    assert len(t2.segments) == len(t.segments)
    for a, b in zip(t.segments, t2.segments):
        assert type(a) is type(b)
    # and through an actual file
    p = tmp_path / "loop.json"
    p.write_text(json.dumps(data))
    t3 = load_track_file(p)
    assert t3.total_length == pytest.approx(t.total_length, abs=1e-12)
    assert build_track(str(p)).total_length == pytest.approx(t.total_length, abs=1e-12)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "segments": [,]\n}\n')
    with pytest.raises(TrackFileError) as ei:
        load_track_file(p)
    assert "line 2" in str(ei.value)


def test_missing_field_reports_context(tmp_path):
    data = track_to_dict(small_loop())
    del data["segments"][0]["end"]
    with pytest.raises(TrackFileError) as ei:
        track_from_dict(data)
    assert "end" in str(ei.value)


def test_discontinuous_file_rejected():
    data = track_to_dict(small_loop())
    data["segments"][2]["start"] = [9.0, 9.0]
    with pytest.raises(Exception):
        track_from_dict(data)


def test_custom_open_track_from_dict():
    data = {
        "lane_width": 0.22,
        "road_half_width": 0.25,
        "closed": False,
        "segments": [
            {"kind": "straight", "start": [0, 0], "end": [1, 0]},
            {
                "kind": "arc",
                "center": [1, 1],
                "radius": 1.0,
                "start_angle": -math.pi / 2,
                "sweep": math.pi / 2,
            },
        ],
        "obstacles": [{"center": [0.5, 0.1], "radius": 0.03}],
    }
    t = track_from_dict(data)
    assert isinstance(t.segments[0], Straight)
    assert isinstance(t.segments[1], Arc)
    assert t.total_length == pytest.approx(1.0 + math.pi / 2)
    assert len(t.obstacles) == 1
