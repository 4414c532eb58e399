"""Classical baseline: occupancy grid, A* global path, DWA local control.

Run: python3 demos/04_baseline_planner.py
"""
import numpy as np

from lidarnav.baseline import (BaselineController, astar, path_cost,
                               rasterize)
from lidarnav.env import RewardConfig
from lidarnav.evaluation import run_trial
from lidarnav.robot import ROBOT_PROFILES
from lidarnav.world import LidarConfig, build_world, preset_world_spec

spec = preset_world_spec("static_default")
profile = ROBOT_PROFILES["jetbot"]
lidar = LidarConfig()

# The grid marks cells whose area overlaps any obstacle, then inflates by
# the robot radius so path cells are actually drivable.
world = build_world(spec)
grid = rasterize(world, resolution=0.05, inflation=profile.body_radius)
occ = int(grid.occupied.sum())
print(f"grid: {grid.shape[0]}x{grid.shape[1]} cells at {grid.resolution} m, "
      f"{occ} occupied ({100.0 * occ / grid.occupied.size:.1f}%)")

start = grid.world_to_cell(-3.0, -3.0)
goal = grid.world_to_cell(3.0, 3.0)
path = astar(grid, start, goal)
print(f"A* from (-3,-3) to (3,3): {len(path.cells)} cells, cost "
      f"{path_cost(path):.1f} cell units = {path.length:.2f} m")

# The controller replans periodically and tracks the path with a dynamic
# window search over (v, w) candidates, vetoed by live scan clearance.
ctrl = BaselineController(spec, profile, lidar)
rec = run_trial(ctrl, spec, lidar, profile, RewardConfig(), seed=11)
print(f"\nepisode: {rec.cause} after {rec.steps} steps "
      f"({rec.task_time:.1f} s)")
print(f"  spawn-goal distance {rec.spawn_goal_dist:.2f} m, "
      f"path driven {rec.path_length:.2f} m")
print(f"  min lidar range {rec.min_lidar:.2f} m, "
      f"mean speed {rec.avg_linear_vel:.2f} m/s")

# The trajectory is a plain array: t, x, y, yaw, v, w, goal_dist, scan_min.
t = rec.trajectory
marks = np.linspace(0, len(t) - 1, 6).astype(int)
print("\n  t[s]    x      y     goal_dist")
for k in marks:
    print(f"  {t[k, 0]:5.1f} {t[k, 1]:+.2f}  {t[k, 2]:+.2f}   {t[k, 6]:.2f}")
