"""Drive an exported policy over the line-delimited JSON bridge.

The bridge is how a trained policy runs on a robot: a process reads scan
and odometry messages, and answers with cmd_vel messages.  Here both ends
live in one script: a simulated world produces the sensor messages and
integrates the returned commands.

Run: python3 demos/05_policy_bridge.py
"""
import json
import math
import tempfile
from pathlib import Path

import numpy as np

from lidarnav.bridge import BridgeState, handle_message
from lidarnav.env import RewardConfig, reset_state
from lidarnav.nn import NetworkShape, init_weights
from lidarnav.policy_io import export_policy, load_policy
from lidarnav.robot import CONTROL_DT, ROBOT_PROFILES, Action, integrate
from lidarnav.world import LidarConfig, preset_world_spec, scan

profile = ROBOT_PROFILES["jetbot"]
lidar = LidarConfig()

# Any exported policy works; an untrained one keeps the demo fast.  Its
# tanh-squashed zero mean commands the midpoint of each range.
shape = NetworkShape()
weights = init_weights(shape, np.random.default_rng(0))
out = Path(tempfile.mkdtemp(prefix="demo_bridge_")) / "policy.json"
export_policy(weights, out, profile=profile, lidar=lidar,
              goal_dist_max=11.31, goal_radius=0.3)
weights, manifest = load_policy(out)
print(f"exported + reloaded policy: {manifest.byte_length} weight bytes, "
      f"crc {manifest.checksum_crc32:#010x}")

state = BridgeState(weights, manifest)
spec = preset_world_spec("empty")
env_state, _ = reset_state(spec, lidar, profile, RewardConfig(),
                           np.random.default_rng(5))
pose = env_state.pose
goal = (pose.x + 1.2 * math.cos(pose.yaw), pose.y + 1.2 * math.sin(pose.yaw))

print("\n-> goal", {"x": round(goal[0], 2), "y": round(goal[1], 2)})
for reply in handle_message(state, {"type": "goal", "x": goal[0], "y": goal[1]}):
    print("<-", json.dumps(reply))

# Each control tick sends odometry then a scan; the scan triggers a
# cmd_vel answer, which the "robot" (our integrator) executes.
t = 0.0
reached = False
for tick in range(200):
    msgs = [{"type": "odom", "t": t, "x": pose.x, "y": pose.y, "yaw": pose.yaw},
            {"type": "scan", "t": t,
             "ranges": scan(env_state.world, pose, lidar).tolist()}]
    cmd = None
    for m in msgs:
        for reply in handle_message(state, m):
            if reply["type"] == "cmd_vel":
                cmd = reply
            elif reply.get("state") == "goal_reached":
                reached = True
    if reached:
        print(f"<- goal reached after {tick} ticks ({t:.1f} s simulated), "
              f"final dist {math.dist((pose.x, pose.y), goal):.2f} m")
        break
    if tick % 10 == 0:
        print(f"tick {tick:3d}: cmd v={cmd['v']:.3f} w={cmd['w']:+.3f}, "
              f"dist {math.dist((pose.x, pose.y), goal):.2f} m")
    pose = integrate(pose, Action(cmd["v"], cmd["w"]), CONTROL_DT)
    t += CONTROL_DT
else:
    print(f"stopped after 200 ticks, dist "
          f"{math.dist((pose.x, pose.y), goal):.2f} m")
