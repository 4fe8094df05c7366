"""Built-in tracks and the JSON track-file format.

Built-in layouts use the standard 0.585 m tile pitch with a 0.22 m lane and a
0.25 m half-road. small_loop is a counterclockwise ring around a 3x3-tile
block; zig_zag is an open S-shaped course in a 5x3-tile footprint; and
obstacle_loop is the small loop with two static obstacles parked on the lane.

Track files are JSON objects:

    {"segments": [{"kind": "straight", "start": [x, y], "end": [x, y]},
                  {"kind": "arc", "center": [x, y], "radius": r,
                   "start_angle": a, "sweep": s}],
     "lane_width": 0.22, "road_half_width": 0.25,
     "obstacles": [{"center": [x, y], "radius": r, "velocity": [vx, vy]}],
     "closed": true}

Lengths are meters, angles radians.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any

from .geometry import Arc, GeometryError, Obstacle, Straight, TrackMap

TILE = 0.585
LANE_WIDTH = 0.22
ROAD_HALF_WIDTH = 0.25


class TrackFileError(ValueError):
    """A custom track file could not be parsed or fails validation."""


def small_loop() -> TrackMap:
    """Counterclockwise rounded-square loop around a 3x3-tile block.

    The road centerline square has side 2*TILE with quarter-arc corners of
    radius TILE/2; the right lane sits half a lane width outside it.
    """
    half = TILE / 2.0
    corner_r = half + LANE_WIDTH / 2.0
    lane = TILE + LANE_WIDTH / 2.0
    segments = (
        Straight(-half, -lane, half, -lane),
        Arc(half, -half, corner_r, -math.pi / 2.0, math.pi / 2.0),
        Straight(lane, -half, lane, half),
        Arc(half, half, corner_r, 0.0, math.pi / 2.0),
        Straight(half, lane, -half, lane),
        Arc(-half, half, corner_r, math.pi / 2.0, math.pi / 2.0),
        Straight(-lane, half, -lane, -half),
        Arc(-half, -half, corner_r, math.pi, math.pi / 2.0),
    )
    return TrackMap(segments, LANE_WIDTH, ROAD_HALF_WIDTH, (), closed=True)


def zig_zag() -> TrackMap:
    """Open S-shaped course in a 5x3-tile footprint: five straights, four
    alternating quarter arcs of radius TILE/2."""
    r = TILE / 2.0
    t = TILE
    segments = (
        Straight(0.0, 0.0, t, 0.0),
        Arc(t, r, r, -math.pi / 2.0, math.pi / 2.0),
        Straight(t + r, r, t + r, t + r),
        Arc(2.0 * t, t + r, r, math.pi, -math.pi / 2.0),
        Straight(2.0 * t, 2.0 * t, 3.0 * t, 2.0 * t),
        Arc(3.0 * t, t + r, r, math.pi / 2.0, -math.pi / 2.0),
        Straight(3.0 * t + r, t + r, 3.0 * t + r, r),
        Arc(4.0 * t, r, r, math.pi, math.pi / 2.0),
        Straight(4.0 * t, 0.0, 5.0 * t, 0.0),
    )
    return TrackMap(segments, LANE_WIDTH, ROAD_HALF_WIDTH, (), closed=False)


def obstacle_loop() -> TrackMap:
    """small_loop plus two static obstacles sitting on the right lane."""
    base = small_loop()
    obstacles = tuple(
        Obstacle(center=base.point_at(frac * base.total_length), radius=0.04)
        for frac in (0.30, 0.65)
    )
    return TrackMap(base.segments, base.lane_width, base.road_half_width, obstacles, closed=True)


BUILTIN_TRACKS = {
    "small_loop": small_loop,
    "zig_zag": zig_zag,
    "obstacle_loop": obstacle_loop,
}


def build_track(spec: str) -> TrackMap:
    """Build a TrackMap from a built-in name or a path to a JSON track file."""
    if spec in BUILTIN_TRACKS:
        return BUILTIN_TRACKS[spec]()
    if os.path.exists(spec) or spec.endswith(".json"):
        return load_track_file(spec)
    raise TrackFileError(
        f"unknown track {spec!r}: expected one of {sorted(BUILTIN_TRACKS)} or a JSON file path"
    )


def _parse_point(obj: Any, where: str) -> tuple[float, float]:
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise TrackFileError(f"{where}: expected a 2-element [x, y] list, got {obj!r}")
    return (float(obj[0]), float(obj[1]))


def _parse_segment(obj: Any, index: int) -> Straight | Arc:
    where = f"segments[{index}]"
    if not isinstance(obj, dict):
        raise TrackFileError(f"{where}: expected an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind == "straight":
        x0, y0 = _parse_point(obj.get("start"), f"{where}.start")
        x1, y1 = _parse_point(obj.get("end"), f"{where}.end")
        return Straight(x0, y0, x1, y1)
    if kind == "arc":
        cx, cy = _parse_point(obj.get("center"), f"{where}.center")
        try:
            return Arc(cx, cy, float(obj["radius"]), float(obj["start_angle"]), float(obj["sweep"]))
        except KeyError as e:
            raise TrackFileError(f"{where}: missing required field {e.args[0]!r}") from None
    raise TrackFileError(f"{where}: kind must be 'straight' or 'arc', got {kind!r}")


def _parse_obstacle(obj: Any, index: int) -> Obstacle:
    where = f"obstacles[{index}]"
    if not isinstance(obj, dict):
        raise TrackFileError(f"{where}: expected an object, got {type(obj).__name__}")
    center = _parse_point(obj.get("center"), f"{where}.center")
    try:
        radius = float(obj["radius"])
    except KeyError:
        raise TrackFileError(f"{where}: missing required field 'radius'") from None
    velocity = obj.get("velocity", (0.0, 0.0))
    vx, vy = _parse_point(velocity, f"{where}.velocity")
    try:
        return Obstacle(center=center, radius=radius, velocity=(vx, vy))
    except GeometryError as e:
        raise TrackFileError(f"{where}: {e}") from None


def track_from_dict(data: Any) -> TrackMap:
    if not isinstance(data, dict):
        raise TrackFileError(f"track file must hold a JSON object, got {type(data).__name__}")
    raw_segments = data.get("segments")
    if not isinstance(raw_segments, list) or not raw_segments:
        raise TrackFileError("'segments' must be a non-empty list")
    segments = tuple(_parse_segment(s, i) for i, s in enumerate(raw_segments))
    obstacles = tuple(_parse_obstacle(o, i) for i, o in enumerate(data.get("obstacles", [])))
    try:
        return TrackMap(
            segments=segments,
            lane_width=float(data.get("lane_width", LANE_WIDTH)),
            road_half_width=float(data.get("road_half_width", ROAD_HALF_WIDTH)),
            obstacles=obstacles,
            closed=bool(data.get("closed", True)),
        )
    except GeometryError as e:
        raise TrackFileError(str(e)) from None


def load_track_file(path: str) -> TrackMap:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise TrackFileError(f"cannot read track file {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise TrackFileError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return track_from_dict(data)


def track_to_dict(track: TrackMap) -> dict[str, Any]:
    """Serialize a TrackMap into the track-file schema (round-trips via
    track_from_dict)."""
    segments = []
    for seg in track.segments:
        if isinstance(seg, Straight):
            segments.append(
                {"kind": "straight", "start": [seg.x0, seg.y0], "end": [seg.x1, seg.y1]}
            )
        else:
            segments.append(
                {
                    "kind": "arc",
                    "center": [seg.cx, seg.cy],
                    "radius": seg.radius,
                    "start_angle": seg.start_angle,
                    "sweep": seg.sweep,
                }
            )
    return {
        "segments": segments,
        "lane_width": track.lane_width,
        "road_half_width": track.road_half_width,
        "obstacles": [
            {"center": list(o.center), "radius": o.radius, "velocity": list(o.velocity)}
            for o in track.obstacles
        ],
        "closed": track.closed,
    }
