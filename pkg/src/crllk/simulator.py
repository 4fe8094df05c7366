"""Differential-drive lane-keeping environment.

A unicycle-kinematics vehicle drives on a TrackMap at a fixed control rate
(default 30 Hz). Wheel-speed commands in [-1, 1] map to +/-0.21 m/s; the
continuous action space commands a steering angle in [-pi, pi] and a speed in
[-0.21, 0.21] m/s. Each step emits the travel-distance reward (signed forward
arc length along the centerline) and three cost channels: lane deviation
magnitude in decimeters, a collision indicator, and a lane-switch indicator.

step() is a pure function of (track, state, action, config); SimState is a
value, so independent environments can run concurrently without shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    LanePose,
    TrackMap,
    collision_indicator,
    lane_switch_indicator,
    project_pose,
    wrap_angle,
)

TURN_LEFT, TURN_RIGHT, GO_STRAIGHT = 0, 1, 2

#: Wheel-speed rows for the three discrete actions, in action-index order.
DEFAULT_WHEEL_TABLE = ((0.2, 1.0), (1.0, 0.2), (1.0, 1.0))


class LifecycleError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class EnvConfig:
    """Environment parameters (the `env` block of a run config)."""

    dt: float = 1.0 / 30.0
    horizon: int = 512
    max_speed: float = 0.21
    axle_length: float = 0.102
    bot_radius: float = 0.06
    steer_gain: float = 0.5
    max_step_turn: float = math.pi / 2.0
    wheel_table: tuple[tuple[float, float], ...] = DEFAULT_WHEEL_TABLE
    switch_beta: float = 0.9
    curvature_offsets: tuple[float, ...] = (0.1, 0.2, 0.3, 0.5, 0.8)
    sensing_range: float = 0.5
    reset_deviation: float = 0.03
    reset_heading: float = 0.2

    @property
    def obs_dim(self) -> int:
        return 3 + len(self.curvature_offsets) + 2


@dataclass(frozen=True)
class DiscreteAction:
    index: int


@dataclass(frozen=True)
class ContinuousAction:
    steer: float
    speed: float


Action = DiscreteAction | ContinuousAction


@dataclass(frozen=True)
class SimState:
    """Vehicle pose plus the episode bookkeeping step() needs."""

    position: tuple[float, float]
    heading: float
    step_index: int
    progress: float
    prev_abs_deviation: float
    speed: float = 0.0
    done: bool = False
    done_reason: str = "none"  # none | horizon | off_track


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float  # signed forward arc-length progress, meters
    cost_lane: float  # |lane deviation|, decimeters
    cost_coll: int
    cost_swt: int
    done: bool


def clamp(x: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return min(hi, max(lo, x))


def discrete_to_wheels(
    index: int, table: tuple[tuple[float, float], ...] = DEFAULT_WHEEL_TABLE
) -> tuple[float, float]:
    """Look up the (left, right) wheel speeds for a discrete action index."""
    if not 0 <= index < len(table):
        raise ValueError(f"action index {index} outside table of {len(table)} rows")
    left, right = table[index]
    if not (-1.0 <= left <= 1.0 and -1.0 <= right <= 1.0):
        raise ValueError(f"wheel table row {index} outside [-1, 1]: {(left, right)}")
    return (left, right)


def continuous_to_controls(steer: float, speed: float) -> tuple[float, float]:
    """Map normalized (steer, speed) to (steering angle rad, linear speed m/s)."""
    return (math.pi * clamp(steer), 0.21 * clamp(speed))


def _integrate_unicycle(
    x: float, y: float, heading: float, v: float, omega: float, dt: float
) -> tuple[float, float, float]:
    """Advance a unicycle (v, omega) over dt by exact arc integration."""
    if abs(omega) < 1e-12:
        return (x + v * dt * math.cos(heading), y + v * dt * math.sin(heading), heading)
    new_heading = heading + omega * dt
    r = v / omega
    return (
        x + r * (math.sin(new_heading) - math.sin(heading)),
        y + r * (math.cos(heading) - math.cos(new_heading)),
        wrap_angle(new_heading),
    )


def _action_to_velocity(action: Action, cfg: EnvConfig) -> tuple[float, float]:
    """Resolve an action to body velocities (v m/s, omega rad/s)."""
    if isinstance(action, DiscreteAction):
        wl, wr = discrete_to_wheels(action.index, cfg.wheel_table)
        v = cfg.max_speed * (wl + wr) / 2.0
        omega = cfg.max_speed * (wr - wl) / cfg.axle_length
        return v, omega
    angle, v = continuous_to_controls(action.steer, action.speed)
    omega = angle * abs(v) / cfg.steer_gain
    limit = cfg.max_step_turn / cfg.dt
    return v, clamp(omega, -limit, limit)


def observe(
    track: TrackMap, pose: LanePose, speed: float, t: float, position: tuple[float, float],
    heading: float, cfg: EnvConfig,
) -> np.ndarray:
    """Assemble the observation vector.

    Layout: [deviation dm, heading error rad, speed m/s,
             centerline curvature at each lookahead offset (1/m),
             distance and bearing of the nearest obstacle in sensing range
             (sentinel (sensing_range, 0) when none)].
    """
    obs = np.empty(cfg.obs_dim)
    obs[0] = 10.0 * pose.signed_deviation
    obs[1] = pose.heading_error
    obs[2] = speed
    for i, offset in enumerate(cfg.curvature_offsets):
        obs[3 + i] = track.curvature_at(pose.progress + offset)
    dist, bearing = cfg.sensing_range, 0.0
    px, py = position
    for i in range(len(track.obstacles)):
        ox, oy = track.obstacle_center_at(i, t)
        d = math.hypot(ox - px, oy - py)
        if d < dist:
            dist = d
            bearing = wrap_angle(math.atan2(oy - py, ox - px) - heading)
    obs[3 + len(cfg.curvature_offsets)] = dist
    obs[4 + len(cfg.curvature_offsets)] = bearing
    return obs


def step(
    track: TrackMap, state: SimState, action: Action, cfg: EnvConfig
) -> tuple[SimState, StepOutcome]:
    """Advance one control step and emit the reward/cost channels."""
    if state.done:
        raise LifecycleError(f"episode already finished ({state.done_reason})")
    v, omega = _action_to_velocity(action, cfg)
    x, y = state.position
    nx, ny, nheading = _integrate_unicycle(x, y, state.heading, v, omega, cfg.dt)

    t_new = (state.step_index + 1) * cfg.dt
    pose = project_pose(track, (nx, ny), nheading)
    delta = pose.progress - state.progress
    if track.closed:
        delta -= track.total_length * round(delta / track.total_length)
    abs_dev = abs(pose.signed_deviation)

    cost_lane = 10.0 * abs_dev
    cost_coll = collision_indicator(track, (nx, ny), cfg.bot_radius, t=t_new)
    cost_swt = lane_switch_indicator(
        state.prev_abs_deviation, abs_dev, track.d_center, cfg.switch_beta
    )

    off_track = abs_dev > track.road_half_width + cfg.bot_radius
    step_index = state.step_index + 1
    if off_track:
        done, reason = True, "off_track"
    elif step_index >= cfg.horizon:
        done, reason = True, "horizon"
    else:
        done, reason = False, "none"

    new_state = SimState(
        position=(nx, ny),
        heading=nheading,
        step_index=step_index,
        progress=pose.progress,
        prev_abs_deviation=abs_dev,
        speed=v,
        done=done,
        done_reason=reason,
    )
    outcome = StepOutcome(
        observation=observe(track, pose, v, t_new, (nx, ny), nheading, cfg),
        reward=delta,
        cost_lane=cost_lane,
        cost_coll=cost_coll,
        cost_swt=cost_swt,
        done=done,
    )
    return new_state, outcome


def reset(track: TrackMap, seed: int, cfg: EnvConfig) -> tuple[SimState, np.ndarray]:
    """Start a fresh episode: a deterministic function of (track, seed).

    The start pose sits on the right-lane centerline with a small uniform
    lateral and heading perturbation, resampled until it is collision-free
    with a safety margin.
    """
    rng = np.random.default_rng(seed)
    span = track.total_length if track.closed else 0.2 * track.total_length
    for _ in range(1000):
        progress = float(rng.uniform(0.0, span))
        dev = float(rng.uniform(-cfg.reset_deviation, cfg.reset_deviation))
        herr = float(rng.uniform(-cfg.reset_heading, cfg.reset_heading))
        qx, qy = track.point_at(progress)
        nx_, ny_ = track.normal_at(progress)
        position = (qx + dev * nx_, qy + dev * ny_)
        heading = wrap_angle(track.tangent_angle_at(progress) + herr)
        if collision_indicator(track, position, cfg.bot_radius + 0.05, t=0.0) == 0:
            break
    else:
        raise RuntimeError("could not sample a collision-free start pose")
    pose = project_pose(track, position, heading)
    state = SimState(
        position=position,
        heading=heading,
        step_index=0,
        progress=pose.progress,
        prev_abs_deviation=abs(pose.signed_deviation),
        speed=0.0,
    )
    return state, observe(track, pose, 0.0, 0.0, position, heading, cfg)
