"""Build arenas and cast lidar scans against them.

Run: python3 demos/01_worlds_and_lidar.py
"""
import numpy as np

from lidarnav.robot import Pose
from lidarnav.world import (LidarConfig, build_world, cast_ray,
                            preset_world_spec, random_arena_spec, scan)

lidar = LidarConfig()   # 120 beams over 360 degrees, ranges [0.15, 3.0] m

# Presets cover the shipped experiments; random_arena_spec gives endless
# cluttered variants from a seed.
for name in ("empty", "static_default", "crossing"):
    spec = preset_world_spec(name)
    world = build_world(spec)
    print(f"{name}: {len(spec.static_obstacles)} static obstacles, "
          f"{len(spec.dynamic_obstacles)} dynamic, "
          f"{2 * spec.arena_half_extent:.0f} m square")

spec = random_arena_spec(seed=7)
world = build_world(spec)
print(f"random(seed=7): {len(spec.static_obstacles)} obstacles")

# A single analytic ray: distance to the first wall or obstacle surface.
pose = Pose(0.0, 0.0, 0.0)
world = build_world(preset_world_spec("static_default"))
d = cast_ray(world, (0.0, 0.0), 0.0, max_range=10.0)
print(f"\nray from origin along +x hits at {d:.3f} m")

# A full scan is one vectorized call; beam 0 points along the robot's
# heading and angles increase counterclockwise.
ranges = scan(world, pose, lidar)
print(f"scan: {len(ranges)} beams, min {ranges.min():.3f} m at beam "
      f"{ranges.argmin()}, max {ranges.max():.3f} m")

# Crude polar plot of the same scan, 3 m box around the robot.
grid = [[" "] * 41 for _ in range(21)]
angles = np.arange(lidar.beam_count) * (2 * np.pi / lidar.beam_count)
for r, a in zip(ranges, angles):
    col = int(round(20 + np.cos(a) * r / 3.0 * 20))
    row = int(round(10 - np.sin(a) * r / 3.0 * 10))
    if 0 <= row < 21 and 0 <= col < 41:
        grid[row][col] = "#" if r < lidar.max_range - 1e-9 else "."
grid[10][20] = "R"
print("\nscan seen from above ('#' = hit, '.' = max range):")
print("\n".join("".join(row) for row in grid))
