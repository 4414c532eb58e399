"""Differential-drive kinematics: action clamping, exact arc integration,
and the body-twist / wheel-speed conversions used on real hardware."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Control timestep in seconds; the whole stack runs at 10 Hz.
CONTROL_DT = 0.1

#: Below this |omega| the arc update degenerates to a straight line.
_OMEGA_STRAIGHT_EPS = 1e-9


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float


@dataclass(frozen=True)
class Action:
    """Body twist: forward speed v (m/s) and yaw rate w (rad/s)."""

    v: float
    w: float


@dataclass(frozen=True)
class RobotProfile:
    """Physical limits and geometry of one robot model.

    v_range keeps the robot always moving forward (no stop, no reverse);
    the floor doubles as an exploration prior during training.
    """

    name: str
    wheel_radius: float
    wheel_base: float
    v_range: tuple[float, float] = (0.1, 0.5)
    w_range: tuple[float, float] = (-0.5, 0.5)
    body_radius: float = 0.10


ROBOT_PROFILES: dict[str, RobotProfile] = {
    "jetbot": RobotProfile("jetbot", wheel_radius=0.03, wheel_base=0.12,
                           body_radius=0.10),
    "turtlebot4lite": RobotProfile("turtlebot4lite", wheel_radius=0.036,
                                   wheel_base=0.233, v_range=(0.1, 0.31),
                                   body_radius=0.17),
}


def wrap_angle(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((angle + math.pi) % (2.0 * math.pi) - math.pi)


def clamp_action(raw: np.ndarray, profile: RobotProfile) -> Action:
    """Map a raw policy output in [-1, 1]^2 to the profile's ranges.

    Components are saturated to [-1, 1] first, then mapped affinely, so the
    result is always inside [v_range] x [w_range].
    """
    r = np.clip(np.asarray(raw, dtype=np.float64), -1.0, 1.0)
    v_lo, v_hi = profile.v_range
    w_lo, w_hi = profile.w_range
    v = v_lo + (r[0] + 1.0) * 0.5 * (v_hi - v_lo)
    w = w_lo + (r[1] + 1.0) * 0.5 * (w_hi - w_lo)
    return Action(float(v), float(w))


def clamp_action_batch(raw: np.ndarray, profile: RobotProfile) -> np.ndarray:
    """Vectorized clamp_action: raw (N, 2) -> physical (N, 2)."""
    r = np.clip(np.asarray(raw, dtype=np.float64), -1.0, 1.0)
    v_lo, v_hi = profile.v_range
    w_lo, w_hi = profile.w_range
    out = np.empty_like(r)
    out[..., 0] = v_lo + (r[..., 0] + 1.0) * 0.5 * (v_hi - v_lo)
    out[..., 1] = w_lo + (r[..., 1] + 1.0) * 0.5 * (w_hi - w_lo)
    return out


def unclamp_action(action: Action, profile: RobotProfile) -> np.ndarray:
    """Affine inverse of clamp_action for in-range actions."""
    v_lo, v_hi = profile.v_range
    w_lo, w_hi = profile.w_range
    return np.array([2.0 * (action.v - v_lo) / (v_hi - v_lo) - 1.0,
                     2.0 * (action.w - w_lo) / (w_hi - w_lo) - 1.0])


def clip_to_ranges(vw: np.ndarray, profile: RobotProfile) -> np.ndarray:
    """Clip physical (v, w) pairs back into the profile ranges."""
    out = np.array(vw, dtype=np.float64, copy=True)
    out[..., 0] = np.clip(out[..., 0], *profile.v_range)
    out[..., 1] = np.clip(out[..., 1], *profile.w_range)
    return out


def integrate(pose: Pose, action: Action, dt: float) -> Pose:
    """Advance a pose along the exact circular arc for (v, w) over dt."""
    x, y, yaw = pose.x, pose.y, pose.yaw
    v, w = action.v, action.w
    if abs(w) < _OMEGA_STRAIGHT_EPS:
        return Pose(x + v * dt * math.cos(yaw), y + v * dt * math.sin(yaw),
                    wrap_angle(yaw + w * dt))
    r = v / w
    return Pose(x + r * (math.sin(yaw + w * dt) - math.sin(yaw)),
                y - r * (math.cos(yaw + w * dt) - math.cos(yaw)),
                wrap_angle(yaw + w * dt))


def integrate_batch(poses: np.ndarray, actions: np.ndarray, dt: float) -> np.ndarray:
    """Vectorized integrate: poses (N, 3) [x, y, yaw], actions (N, 2)."""
    x, y, yaw = poses[:, 0], poses[:, 1], poses[:, 2]
    v, w = actions[:, 0], actions[:, 1]
    straight = np.abs(w) < _OMEGA_STRAIGHT_EPS
    w_safe = np.where(straight, 1.0, w)
    r = v / w_safe
    nx = np.where(straight, x + v * dt * np.cos(yaw),
                  x + r * (np.sin(yaw + w * dt) - np.sin(yaw)))
    ny = np.where(straight, y + v * dt * np.sin(yaw),
                  y - r * (np.cos(yaw + w * dt) - np.cos(yaw)))
    nyaw = (yaw + w * dt + np.pi) % (2.0 * np.pi) - np.pi
    return np.stack([nx, ny, nyaw], axis=1)


def wheel_speeds(action: Action, profile: RobotProfile) -> tuple[float, float]:
    """Left/right wheel angular speeds (rad/s) realizing a body twist."""
    half = profile.wheel_base / 2.0
    left = (action.v - action.w * half) / profile.wheel_radius
    right = (action.v + action.w * half) / profile.wheel_radius
    return left, right


def body_twist(left: float, right: float, profile: RobotProfile) -> Action:
    """Inverse of wheel_speeds."""
    v = profile.wheel_radius * (left + right) / 2.0
    w = profile.wheel_radius * (right - left) / profile.wheel_base
    return Action(v, w)
