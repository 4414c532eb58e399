"""Differential-drive kinematics: exact arcs, wheel speeds, closures.

Run: python3 demos/02_kinematics.py
"""
import math

import numpy as np

from lidarnav.robot import (CONTROL_DT, ROBOT_PROFILES, Action, Pose,
                            integrate, wheel_speeds)

jetbot = ROBOT_PROFILES["jetbot"]
print(f"profile: {jetbot.name}, wheel radius {jetbot.wheel_radius} m, "
      f"base {jetbot.wheel_base} m")

# Commands are (v, w); the pose update is the exact constant-twist arc,
# not an Euler step, so circles close exactly.
pose = Pose(0.0, 0.0, 0.0)
act = Action(v=0.3, w=0.4)
period = 2.0 * math.pi / act.w
steps = int(round(period / CONTROL_DT))
p = pose
for _ in range(steps):
    p = integrate(p, act, period / steps)
closure = math.hypot(p.x - pose.x, p.y - pose.y)
print(f"\none full circle in {steps} steps: closure error {closure:.2e} m")

# Halving dt changes nothing but roundoff: the per-step update is exact.
p2 = pose
for _ in range(2 * steps):
    p2 = integrate(p2, act, period / (2 * steps))
print(f"same circle at half dt: end points differ by "
      f"{math.hypot(p2.x - p.x, p2.y - p.y):.2e} m")

# The wheel-level view of the same command.
left, right = wheel_speeds(act, jetbot)
print(f"\n(v={act.v}, w={act.w}) -> wheel speeds "
      f"left {left:.2f} rad/s, right {right:.2f} rad/s")

# Straight-line limit: w = 0 falls out of the same formula.
p3 = integrate(Pose(1.0, 2.0, math.pi / 2), Action(0.5, 0.0), 2.0)
print(f"straight segment: (1, 2, 90deg) + 1 m forward -> "
      f"({p3.x:.3f}, {p3.y:.3f})")
