"""Train a small policy on the empty arena, export it, run inference.

A deliberately tiny run (8 envs, small net, 40 iterations, about half a
minute) that exercises the full loop: vectorized rollouts, PPO updates,
stats, portable export, reload, deterministic inference.

Run: python3 demos/03_train_small.py
"""
import tempfile
from pathlib import Path

import numpy as np

from lidarnav.env import RewardConfig, VectorEnv
from lidarnav.nn import NetworkShape
from lidarnav.policy_io import infer, load_policy
from lidarnav.ppo import PpoHyper, train
from lidarnav.robot import ROBOT_PROFILES, Action, Pose
from lidarnav.world import LidarConfig, preset_world_spec

lidar = LidarConfig(beam_count=40)
profile = ROBOT_PROFILES["jetbot"]
env = VectorEnv(preset_world_spec("empty"), lidar, profile, RewardConfig(),
                num_envs=8, seed=3)

shape = NetworkShape(input_dim=44, hidden=(64, 64))
hyper = PpoHyper(iterations=40, horizon=64, minibatch_size=128)


def progress(it, row, weights):
    if it % 10 == 0:
        print(f"  iter {row.iteration:3d}  return {row.mean_return:7.2f}  "
              f"success {row.success_rate:.2f}  entropy {row.entropy:.2f}")
    return False


out = Path(tempfile.mkdtemp(prefix="demo_train_"))
print("training (8 envs, 40 beams, [64, 64] net, 40 iterations)...")
result = train(env, shape, hyper, seed=3, out_dir=out, callback=progress)
print(f"done: {result.iterations_run} iterations, artifacts in {out}")
print(f"  stats: {result.stats_path.name}")
print(f"  policy: {result.policy_path.name} (+ .bin blob)")

# The export is self-contained: manifest + float32 blob reload anywhere.
weights, manifest = load_policy(result.policy_path)
ranges = np.full(lidar.beam_count, 3.0)
action, _ = infer(weights, manifest, ranges, Pose(0.0, 0.0, 0.0),
                  goal=(2.0, 0.0), prev_action=Action(0.0, 0.0))
print(f"\ninference, goal 2 m dead ahead in open space: "
      f"v={action.v:.3f} m/s, w={action.w:+.3f} rad/s")
action, _ = infer(weights, manifest, ranges, Pose(0.0, 0.0, 0.0),
                  goal=(-2.0, 0.5), prev_action=Action(0.0, 0.0))
print(f"inference, goal behind and left:          "
      f"v={action.v:.3f} m/s, w={action.w:+.3f} rad/s")
