"""Learning-based local navigation for differential-drive robots.

Modules cover the simulator (world, robot, env), learning (nn, ppo),
portability (policy_io, bridge), the classical baseline (baseline), the
evaluation harness (evaluation), and configuration plus the command line
(config, cli).
"""

__version__ = "0.1.0"

from .world import (Box, Circle, DynamicObstacleSpec, LidarConfig,
                    LIDAR_CONFIGS, Segment, World, WorldSpec, WORLD_PRESETS,
                    build_world, cast_ray, load_spec, min_clearance,
                    preset_world_spec, random_arena_spec, save_spec, scan,
                    scan_batch, step_dynamic_obstacles)
from .robot import (CONTROL_DT, Action, Pose, ROBOT_PROFILES, RobotProfile,
                    clamp_action, integrate, wheel_speeds)
from .env import (NoiseConfig, Observation, RewardConfig, VectorEnv,
                  goal_dist_max, observe, reward_and_done)
from .nn import (HiddenState, NetworkShape, PolicyWeights, forward,
                 init_weights)
from .ppo import (CurriculumSchedule, CurriculumStage, PpoHyper, TrainResult,
                  compute_gae, load_checkpoint, save_checkpoint, train)
from .policy_io import (PolicyManifest, export_policy, infer, load_policy)
from .baseline import (BaselineController, DwaConfig, NoPathError,
                       OccupancyGrid, astar, dwa_step, rasterize)
from .evaluation import (PolicyController, TrialRecord, TrialReport,
                         run_trial, run_trials, summarize)
from .bridge import BridgeState, handle_message, serve
from .config import (ConfigError, TaskConfig, TrainConfig, build_env,
                     build_schedule, load_task_config, load_train_config)

__all__ = [name for name in dir() if not name.startswith("_")]
