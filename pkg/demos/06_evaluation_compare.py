"""Compare a trained policy against the classical baseline on one world.

Trains an MLP on the empty arena with the stock settings (64 envs, 300
iterations, roughly two minutes on one core), then puts both controllers
through the same seeded trial harness and prints side-by-side summaries
plus the mean goal-distance curve.

Run: python3 demos/06_evaluation_compare.py
"""
import tempfile
from pathlib import Path

from lidarnav.baseline import BaselineController
from lidarnav.env import RewardConfig, VectorEnv
from lidarnav.evaluation import (PolicyController, distance_curves,
                                 run_trials, summarize)
from lidarnav.nn import NetworkShape
from lidarnav.policy_io import load_policy
from lidarnav.ppo import PpoHyper, train
from lidarnav.robot import ROBOT_PROFILES
from lidarnav.world import LidarConfig, preset_world_spec

lidar = LidarConfig()
profile = ROBOT_PROFILES["jetbot"]
reward = RewardConfig()
spec = preset_world_spec("empty")

print("training an MLP on the empty arena (300 iterations)...")
env = VectorEnv(spec, lidar, profile, reward, num_envs=64, seed=0)
out = Path(tempfile.mkdtemp(prefix="demo_eval_"))


def progress(it, row, weights):
    if it % 50 == 0:
        print(f"  iter {row.iteration:3d}  return {row.mean_return:7.2f}  "
              f"success {row.success_rate:.2f}")
    return False


result = train(env, NetworkShape(), PpoHyper(iterations=300), seed=0,
               out_dir=out, callback=progress)
tail = result.stats[-1]
print(f"done: {result.iterations_run} iters, final train success "
      f"{tail.success_rate:.2f}, return {tail.mean_return:.1f}\n")

weights, manifest = load_policy(result.policy_path)
controllers = {
    "policy": PolicyController(weights, manifest),
    "baseline": BaselineController(spec, profile, lidar),
}

# Identical trial seeds for both controllers: same spawns, same goals.
reports = {}
for name, ctrl in controllers.items():
    reports[name] = run_trials(ctrl, spec, lidar, profile, reward,
                               n_trials=10, seed=7)
    print(f"--- {name} ---")
    print(summarize(reports[name]))
    print()

times, mean, std = distance_curves(reports["policy"], grid_dt=1.0)
if times.size:
    print("policy mean goal distance over successful trials:")
    peak = mean.max()
    for t, m in zip(times, mean):
        bar = "#" * int(round(40 * m / peak)) if peak > 0 else ""
        print(f"  t={t:5.1f}s  {m:5.2f} m  {bar}")
