"""Lane geometry: piecewise centerline tracks and the pure queries built on them.

The reference curve of a track is the right-lane centerline, a continuous chain
of straight and circular-arc segments. Every geometric quantity downstream of
the simulator (lane deviation, forward progress, collision and lane-switch
indicators) is answered here. All queries are pure functions of immutable
inputs, so a TrackMap can be shared freely across rollout workers.

Sign conventions: lateral deviation is measured from the right-lane centerline
and is positive toward the road center, i.e. to the left of the direction of
travel. Curvature is positive for left (counterclockwise) turns.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

TAU = 2.0 * math.pi

#: Distance beyond the outer road edge at which projection queries give up.
PROJECTION_MARGIN = 1.0

#: Maximum endpoint gap tolerated between consecutive segments, meters.
CONTINUITY_TOL = 1e-9


class GeometryError(ValueError):
    """A track violates a structural invariant (gaps, bad dimensions...)."""


class OffTrackError(GeometryError):
    """A query position is too far from the centerline to be meaningful."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TAU)
    if a > math.pi:
        a -= TAU
    elif a <= -math.pi:
        a += TAU
    return a


@dataclass(frozen=True)
class Straight:
    """Line segment from (x0, y0) to (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def start_point(self) -> tuple[float, float]:
        return (self.x0, self.y0)

    @property
    def end_point(self) -> tuple[float, float]:
        return (self.x1, self.y1)

    def point_at(self, s: float) -> tuple[float, float]:
        t = s / self.length
        return (self.x0 + t * (self.x1 - self.x0), self.y0 + t * (self.y1 - self.y0))

    def tangent_angle_at(self, s: float) -> float:
        return math.atan2(self.y1 - self.y0, self.x1 - self.x0)

    def curvature_at(self, s: float) -> float:
        return 0.0

    def project(self, px: float, py: float) -> tuple[float, float]:
        """Return (arc length of nearest point, distance to it)."""
        dx, dy = self.x1 - self.x0, self.y1 - self.y0
        ln = self.length
        t = ((px - self.x0) * dx + (py - self.y0) * dy) / (ln * ln)
        t = min(1.0, max(0.0, t))
        qx, qy = self.x0 + t * dx, self.y0 + t * dy
        return t * ln, math.hypot(px - qx, py - qy)


@dataclass(frozen=True)
class Arc:
    """Circular arc around (cx, cy); positive sweep runs counterclockwise."""

    cx: float
    cy: float
    radius: float
    start_angle: float
    sweep: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    def _angle_at(self, s: float) -> float:
        return self.start_angle + math.copysign(s / self.radius, self.sweep)

    @property
    def start_point(self) -> tuple[float, float]:
        return self.point_at(0.0)

    @property
    def end_point(self) -> tuple[float, float]:
        return self.point_at(self.length)

    def point_at(self, s: float) -> tuple[float, float]:
        phi = self._angle_at(s)
        return (self.cx + self.radius * math.cos(phi), self.cy + self.radius * math.sin(phi))

    def tangent_angle_at(self, s: float) -> float:
        phi = self._angle_at(s)
        # Tangent of a ccw arc leads the radius by +90 degrees, cw by -90.
        return wrap_angle(phi + math.copysign(math.pi / 2.0, self.sweep))

    def curvature_at(self, s: float) -> float:
        return math.copysign(1.0 / self.radius, self.sweep)

    def project(self, px: float, py: float) -> tuple[float, float]:
        rx, ry = px - self.cx, py - self.cy
        phi = math.atan2(ry, rx)
        # Angular offset from the start, measured along the travel direction.
        if self.sweep >= 0.0:
            rel = math.fmod(phi - self.start_angle, TAU)
        else:
            rel = math.fmod(self.start_angle - phi, TAU)
        if rel < 0.0:
            rel += TAU
        span = abs(self.sweep)
        if rel <= span:
            s = rel * self.radius
            return s, abs(math.hypot(rx, ry) - self.radius)
        # Off the angular range: the nearest point is one of the endpoints.
        s = 0.0 if (TAU - rel) < (rel - span) else self.length
        qx, qy = self.point_at(s)
        return s, math.hypot(px - qx, py - qy)


Segment = Straight | Arc


@dataclass(frozen=True)
class Obstacle:
    """Disk obstacle; velocity (m/s) is zero for static obstacles."""

    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise GeometryError(f"obstacle radius must be positive, got {self.radius}")

    @property
    def is_static(self) -> bool:
        return self.velocity == (0.0, 0.0)


@dataclass(frozen=True)
class LanePose:
    """Pose of a point relative to the right-lane centerline.

    signed_deviation: meters, positive toward the road center (left of travel).
    heading_error: radians in (-pi, pi], relative to the local lane tangent.
    progress: arc length in meters from the start of the first segment.
    """

    signed_deviation: float
    heading_error: float
    progress: float
    in_right_lane: bool


def _reflect(v: float, lo: float, hi: float) -> float:
    """Fold v into [lo, hi] by specular reflection at both ends."""
    if hi <= lo:
        return lo
    period = 2.0 * (hi - lo)
    y = math.fmod(v - lo, period)
    if y < 0.0:
        y += period
    if y > hi - lo:
        y = period - y
    return lo + y


@dataclass(frozen=True)
class TrackMap:
    """Immutable lane geometry: segments, lane dimensions, obstacles.

    segments chain head-to-tail (validated to CONTINUITY_TOL); closed tracks
    additionally join the last segment back to the first. lane_width is the
    full right-lane width; road_half_width is the distance from the lane
    centerline to the outer road boundary on either side.
    """

    segments: tuple[Segment, ...]
    lane_width: float
    road_half_width: float
    obstacles: tuple[Obstacle, ...] = ()
    closed: bool = True
    # Cumulative arc length at the start of each segment, plus the total.
    _cum: tuple[float, ...] = field(init=False, repr=False, compare=False)
    # Per-obstacle lane-frame motion state: (s0, d0, v_along, v_across).
    _obstacle_motion: tuple[tuple[float, float, float, float], ...] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if not self.segments:
            raise GeometryError("track needs at least one segment")
        if self.lane_width <= 0.0:
            raise GeometryError(f"lane_width must be positive, got {self.lane_width}")
        if self.road_half_width < self.lane_width:
            raise GeometryError(
                f"road_half_width {self.road_half_width} must cover lane_width {self.lane_width}"
            )
        cum = [0.0]
        for i, seg in enumerate(self.segments):
            if not (seg.length > 0.0 and math.isfinite(seg.length)):
                raise GeometryError(f"segment {i} has invalid length {seg.length}")
            cum.append(cum[-1] + seg.length)
        pairs = list(zip(self.segments, self.segments[1:]))
        if self.closed:
            pairs.append((self.segments[-1], self.segments[0]))
        for i, (a, b) in enumerate(pairs):
            gap = math.dist(a.end_point, b.start_point)
            if gap > CONTINUITY_TOL:
                raise GeometryError(
                    f"segments {i} and {(i + 1) % len(self.segments)} are discontinuous "
                    f"(gap {gap:.3e} m)"
                )
        object.__setattr__(self, "_cum", tuple(cum))
        motion = []
        for obs in self.obstacles:
            if obs.is_static:
                motion.append((0.0, 0.0, 0.0, 0.0))
                continue
            s0, _, d0, tangent = self._nearest(obs.center[0], obs.center[1])
            tx, ty = math.cos(tangent), math.sin(tangent)
            v_along = obs.velocity[0] * tx + obs.velocity[1] * ty
            v_across = -obs.velocity[0] * ty + obs.velocity[1] * tx
            motion.append((s0, d0, v_along, v_across))
        object.__setattr__(self, "_obstacle_motion", tuple(motion))

    @property
    def total_length(self) -> float:
        return self._cum[-1]

    @property
    def d_center(self) -> float:
        """Half the lane width: the distance from lane centerline to lane edge."""
        return self.lane_width / 2.0

    def normalize_progress(self, s: float) -> float:
        if self.closed:
            s = math.fmod(s, self.total_length)
            if s < 0.0:
                s += self.total_length
            return s
        return min(max(s, 0.0), self.total_length)

    def _locate(self, s: float) -> tuple[Segment, float]:
        s = self.normalize_progress(s)
        i = bisect.bisect_right(self._cum, s) - 1
        if i >= len(self.segments):
            i = len(self.segments) - 1
        return self.segments[i], s - self._cum[i]

    def point_at(self, s: float) -> tuple[float, float]:
        seg, s_local = self._locate(s)
        return seg.point_at(s_local)

    def tangent_angle_at(self, s: float) -> float:
        seg, s_local = self._locate(s)
        return seg.tangent_angle_at(s_local)

    def normal_at(self, s: float) -> tuple[float, float]:
        """Unit left normal (the positive-deviation direction)."""
        a = self.tangent_angle_at(s)
        return (-math.sin(a), math.cos(a))

    def curvature_at(self, s: float) -> float:
        seg, s_local = self._locate(s)
        return seg.curvature_at(s_local)

    def _nearest(self, px: float, py: float) -> tuple[float, float, float, float]:
        """Nearest centerline point: (progress, distance, signed offset, tangent angle)."""
        best_dist = math.inf
        best_seg = self.segments[0]
        best_s_local = 0.0
        best_progress = 0.0
        for seg, base in zip(self.segments, self._cum):
            s_local, dist = seg.project(px, py)
            if dist < best_dist:
                best_dist = dist
                best_seg = seg
                best_s_local = s_local
                best_progress = base + s_local
        qx, qy = best_seg.point_at(best_s_local)
        tangent = best_seg.tangent_angle_at(best_s_local)
        cross = math.cos(tangent) * (py - qy) - math.sin(tangent) * (px - qx)
        signed = math.copysign(best_dist, cross) if best_dist > 0.0 else 0.0
        return self.normalize_progress(best_progress), best_dist, signed, tangent

    def obstacle_center_at(self, idx: int, t: float) -> tuple[float, float]:
        """Obstacle center at simulation time t (seconds).

        Dynamic obstacles move at constant velocity in lane coordinates,
        reflecting off the road boundaries; progress wraps on closed tracks
        and reflects at the ends of open ones.
        """
        obs = self.obstacles[idx]
        if obs.is_static or t == 0.0:
            return obs.center
        s0, d0, v_along, v_across = self._obstacle_motion[idx]
        bound = self.road_half_width - obs.radius
        d = _reflect(d0 + v_across * t, -bound, bound)
        s = s0 + v_along * t
        if not self.closed:
            s = _reflect(s, 0.0, self.total_length)
        s = self.normalize_progress(s)
        qx, qy = self.point_at(s)
        nx, ny = self.normal_at(s)
        return (qx + d * nx, qy + d * ny)


def project_pose(track: TrackMap, position: tuple[float, float], heading: float) -> LanePose:
    """Project a world pose onto the right-lane centerline.

    Raises OffTrackError when the position is farther than
    road_half_width + PROJECTION_MARGIN from the centerline.
    """
    px, py = position
    progress, dist, signed, tangent = track._nearest(px, py)
    if dist > track.road_half_width + PROJECTION_MARGIN:
        raise OffTrackError(
            f"position ({px:.3f}, {py:.3f}) is {dist:.3f} m from the centerline"
        )
    return LanePose(
        signed_deviation=signed,
        heading_error=wrap_angle(heading - tangent),
        progress=progress,
        in_right_lane=abs(signed) <= track.d_center,
    )


def collision_indicator(
    track: TrackMap, position: tuple[float, float], bot_radius: float, t: float = 0.0
) -> int:
    """1 iff the bot disk hits an obstacle disk or crosses the outer road boundary."""
    px, py = position
    _, dist, _, _ = track._nearest(px, py)
    if dist + bot_radius > track.road_half_width:
        return 1
    for i, obs in enumerate(track.obstacles):
        ox, oy = track.obstacle_center_at(i, t)
        if math.hypot(px - ox, py - oy) < bot_radius + obs.radius:
            return 1
    return 0


def lane_switch_indicator(
    prev_dev: float, curr_dev: float, d_center: float, beta: float = 0.9
) -> int:
    """1 exactly when the deviation magnitude crosses beta*d_center from below.

    prev_dev and curr_dev are magnitudes |d_lane| >= 0 at consecutive steps;
    crossing back downward does not trigger.
    """
    if d_center <= 0.0:
        raise ValueError(f"d_center must be positive, got {d_center}")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    threshold = beta * d_center
    return int(prev_dev < threshold and curr_dev > threshold)
