"""Goal-reaching navigation environment over the lidar simulator.

Observations are flat vectors: beam_count normalized lidar ranges followed
by normalized goal distance, goal bearing, and the previous commanded
(v, w).  Rewards combine dense progress shaping, a proximity penalty that
ramps up exponentially inside a warning band, and fixed terminal bonuses
for reaching the goal / colliding / timing out.  The vectorized env steps
every copy with batched numpy kernels; per-env episode randomness comes
from independent seed streams so trajectories never depend on how many
envs run alongside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import world as wd
from .robot import (CONTROL_DT, Action, Pose, RobotProfile, clamp_action_batch,
                    clip_to_ranges, integrate_batch)
from .world import Box, LidarConfig, World, WorldSpec

CAUSE_NONE = 0
CAUSE_GOAL = 1
CAUSE_COLLISION = 2
CAUSE_TIMEOUT = 3
CAUSES = ("none", "goal", "collision", "timeout")

#: Goals are rejected closer to the spawn than this (meters).
MIN_SPAWN_GOAL_DIST = 2.0


@dataclass(frozen=True)
class RewardConfig:
    """Shaping and termination constants (distances in meters)."""

    min_dist: float = 0.25        # lidar min below this is a collision
    warn_dist: float = 0.5        # proximity penalty active below this
    goal_radius: float = 0.3      # goal distance below this is success
    max_steps: int = 1200
    r_goal: float = 30.0
    r_collision: float = 30.0
    r_timeout: float = 30.0
    time_bonus_scale: float = 30.0


@dataclass(frozen=True)
class NoiseConfig:
    """Optional sensing/actuation noise; both sigmas zero means identity.

    lidar_sigma is in meters on raw ranges; action_sigma is a fraction of
    the respective command range width.
    """

    lidar_sigma: float = 0.0
    action_sigma: float = 0.0

    @property
    def any_enabled(self) -> bool:
        return self.lidar_sigma > 0.0 or self.action_sigma > 0.0


@dataclass(frozen=True)
class Observation:
    """Flat policy input plus named views into it."""

    vector: np.ndarray
    lidar: LidarConfig

    @property
    def lidar_norm(self) -> np.ndarray:
        return self.vector[: self.lidar.beam_count]

    @property
    def goal_dist_norm(self) -> float:
        return float(self.vector[self.lidar.beam_count])

    @property
    def goal_angle_norm(self) -> float:
        return float(self.vector[self.lidar.beam_count + 1])

    @property
    def prev_v_norm(self) -> float:
        return float(self.vector[self.lidar.beam_count + 2])

    @property
    def prev_w_norm(self) -> float:
        return float(self.vector[self.lidar.beam_count + 3])


@dataclass(frozen=True)
class EnvState:
    """One env's full simulation state after its latest transition.

    prev_goal_dist is the goal distance measured at this state's own time;
    the next reward uses it as the d_{t-1} term.
    """

    pose: Pose
    prev_action: Action
    goal: tuple[float, float]
    step_count: int
    prev_goal_dist: float
    world: World


@dataclass(frozen=True)
class RewardBreakdown:
    r_distance: float
    r_collision: float
    r_time: float
    terminal_bonus: float
    total: float
    cause: str

    @property
    def done(self) -> bool:
        return self.cause != "none"


def goal_dist_max(spec: WorldSpec) -> float:
    """Normalization constant for goal distance: the arena diagonal."""
    return 2.0 * spec.arena_half_extent * math.sqrt(2.0)


def observation_matrix(ranges: np.ndarray, poses: np.ndarray, goals: np.ndarray,
                       prev_vw: np.ndarray, lidar: LidarConfig,
                       profile: RobotProfile, d_max: float) -> np.ndarray:
    """Batched observation encoding: (N, K) ranges etc. -> (N, K + 4)."""
    n, k = ranges.shape
    out = np.empty((n, k + 4), dtype=np.float64)
    out[:, :k] = (ranges - lidar.min_range) / (lidar.max_range - lidar.min_range)
    delta = goals - poses[:, :2]
    dist = np.hypot(delta[:, 0], delta[:, 1])
    out[:, k] = dist / d_max
    bearing = np.arctan2(delta[:, 1], delta[:, 0]) - poses[:, 2]
    out[:, k + 1] = (((bearing + np.pi) % (2.0 * np.pi)) - np.pi) / np.pi
    v_lo, v_hi = profile.v_range
    w_lo, w_hi = profile.w_range
    out[:, k + 2] = 2.0 * (prev_vw[:, 0] - v_lo) / (v_hi - v_lo) - 1.0
    out[:, k + 3] = 2.0 * (prev_vw[:, 1] - w_lo) / (w_hi - w_lo) - 1.0
    return out


def observation_vector(ranges: np.ndarray, pose: Pose, goal: tuple[float, float],
                       prev_action: Action, lidar: LidarConfig,
                       profile: RobotProfile, d_max: float) -> np.ndarray:
    """Single-state observation encoding; the batched form of one row."""
    return observation_matrix(
        np.asarray(ranges, dtype=np.float64).reshape(1, -1),
        np.asarray([[pose.x, pose.y, pose.yaw]]),
        np.asarray([goal], dtype=np.float64),
        np.asarray([[prev_action.v, prev_action.w]]),
        lidar, profile, d_max)[0]


def observe(state: EnvState, lidar: LidarConfig, profile: RobotProfile) -> Observation:
    """Scan the world from the state's pose and encode the observation."""
    ranges = wd.scan(state.world, state.pose, lidar)
    vec = observation_vector(ranges, state.pose, state.goal, state.prev_action,
                             lidar, profile, goal_dist_max(state.world.spec))
    return Observation(vec, lidar)


def apply_obs_noise(obs: Observation, noise: NoiseConfig,
                    rng: np.random.Generator) -> Observation:
    """Perturb raw lidar ranges by Gaussian noise, then re-clamp and
    re-normalize.  Identity when the noise config is disabled."""
    if noise.lidar_sigma <= 0.0:
        return obs
    lid = obs.lidar
    k = lid.beam_count
    span = lid.max_range - lid.min_range
    raw = obs.vector[:k] * span + lid.min_range
    raw = raw + rng.normal(0.0, noise.lidar_sigma, size=k)
    raw = np.clip(raw, lid.min_range, lid.max_range)
    vec = obs.vector.copy()
    vec[:k] = (raw - lid.min_range) / span
    return Observation(vec, lid)


def reward_and_done(prev: EnvState, cur: EnvState, scan_min: float,
                    cfg: RewardConfig) -> RewardBreakdown:
    """Reward for the transition prev -> cur.

    scan_min is the minimum lidar range measured at cur.  Terminal causes
    are mutually exclusive with precedence goal > collision > timeout.
    """
    cur_dist = math.dist((cur.pose.x, cur.pose.y), cur.goal)
    r_distance = prev.prev_goal_dist - cur_dist
    r_collision = -math.exp(-scan_min) if scan_min < cfg.warn_dist else 0.0
    r_time = 0.0
    bonus = 0.0
    if cur_dist < cfg.goal_radius:
        cause = "goal"
        bonus = cfg.r_goal
        r_time = cfg.time_bonus_scale * (cfg.max_steps - cur.step_count) / cfg.max_steps
    elif scan_min < cfg.min_dist:
        cause = "collision"
        bonus = -cfg.r_collision
    elif cur.step_count >= cfg.max_steps:
        cause = "timeout"
        bonus = -cfg.r_timeout
    else:
        cause = "none"
    total = r_distance + r_collision + r_time + bonus
    return RewardBreakdown(r_distance, r_collision, r_time, bonus, total, cause)


def reset_state(spec: WorldSpec, lidar: LidarConfig, profile: RobotProfile,
                reward: RewardConfig, rng: np.random.Generator,
                min_spawn_goal_dist: float = MIN_SPAWN_GOAL_DIST,
                _geom=None) -> tuple[EnvState, Observation]:
    """Fresh episode: new dynamic phases, a clear spawn, and a goal that is
    clear, inside the goal region, and far enough from the spawn.

    Draw order from rng is fixed (phases, spawn, goal) so resets are
    reproducible given the generator state.
    """
    phases = draw_phases(spec, rng)
    world = World(spec, phases, 0.0, _geom=_geom)
    pose = wd.sample_free_pose(world, spec.spawn_clearance, rng,
                               region=spec.spawn_region)
    goal = _sample_goal(world, pose, reward.goal_radius, rng,
                        min_spawn_goal_dist)
    state = EnvState(pose=pose, prev_action=Action(0.0, 0.0), goal=goal,
                     step_count=0,
                     prev_goal_dist=math.dist((pose.x, pose.y), goal),
                     world=world)
    return state, observe(state, lidar, profile)


def draw_phases(spec: WorldSpec, rng: np.random.Generator) -> np.ndarray:
    """Resolve dynamic-obstacle phases, randomizing the unspecified ones."""
    phases = np.empty(len(spec.dynamic_obstacles), dtype=np.float64)
    for i, dyn in enumerate(spec.dynamic_obstacles):
        drawn = rng.uniform(0.0, 1.0)
        phases[i] = drawn if dyn.phase is None else dyn.phase
    return phases


def _sample_goal(world: World, spawn: Pose, goal_clearance: float,
                 rng: np.random.Generator, min_spawn_goal_dist: float,
                 max_attempts: int = 1000) -> tuple[float, float]:
    spec = world.spec
    region = spec.goal_region
    if region is None:
        e = spec.arena_half_extent
        region = Box((0.0, 0.0), (e, e))
    (cx, cy), (hx, hy) = region.center, region.half_extents
    for _ in range(max_attempts):
        gx = rng.uniform(cx - hx, cx + hx)
        gy = rng.uniform(cy - hy, cy + hy)
        if math.dist((gx, gy), (spawn.x, spawn.y)) < min_spawn_goal_dist:
            continue
        if wd.clearance_batch(world, np.asarray([[gx, gy]]))[0] >= goal_clearance:
            return (gx, gy)
    raise wd.SamplingExhaustedError(
        f"no goal with clearance >= {goal_clearance} at distance >= "
        f"{min_spawn_goal_dist} m found in {max_attempts} attempts")


class VectorEnv:
    """N synchronized env copies sharing one world spec.

    step() consumes raw policy outputs (N, 2) in [-1, 1] and returns the
    next observations (N, obs_dim), rewards, done flags, and an info dict
    of reward components.  Done envs are reset in place and their returned
    observation row is the post-reset one.
    """

    def __init__(self, spec: WorldSpec, lidar: LidarConfig, profile: RobotProfile,
                 reward: RewardConfig, num_envs: int = 64,
                 noise: NoiseConfig | None = None, dt: float = CONTROL_DT,
                 min_spawn_goal_dist: float = MIN_SPAWN_GOAL_DIST,
                 seed: int = 0, env_seeds=None):
        wd.validate_spec(spec)
        self.lidar = lidar
        self.profile = profile
        self.reward_cfg = reward
        self.noise = noise if noise is not None else NoiseConfig()
        self.num_envs = num_envs
        self.dt = dt
        self.min_spawn_goal_dist = min_spawn_goal_dist
        self.obs_dim = lidar.beam_count + 4
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(num_envs + 1)
        if env_seeds is not None:
            if len(env_seeds) != num_envs:
                raise ValueError("env_seeds must have one entry per env")
            self._env_rngs = [np.random.default_rng(s) for s in env_seeds]
        else:
            self._env_rngs = [np.random.default_rng(c) for c in children[:num_envs]]
        self._noise_rng = np.random.default_rng(children[num_envs])
        self.set_world_spec(spec)

    # -- world / episode management ------------------------------------

    def set_world_spec(self, spec: WorldSpec) -> None:
        """Swap the arena (curriculum stage switch) and reset every env."""
        wd.validate_spec(spec)
        self.spec = spec
        self._geom = wd._StaticGeometry(spec)
        self._dyn_halves = np.asarray(
            [dy.box.half_extents for dy in spec.dynamic_obstacles],
            dtype=np.float64).reshape(-1, 2)
        self._d_max = goal_dist_max(spec)
        n, d = self.num_envs, len(spec.dynamic_obstacles)
        self._poses = np.zeros((n, 3))
        self._goals = np.zeros((n, 2))
        self._prev_vw = np.zeros((n, 2))
        self._steps = np.zeros(n, dtype=np.int64)
        self._prev_dists = np.zeros(n)
        self._phases = np.zeros((n, d))
        self._sim_times = np.zeros(n)
        self.reset_all()

    def _world(self, i: int) -> World:
        return World(self.spec, self._phases[i], self._sim_times[i], _geom=self._geom)

    def state(self, i: int) -> EnvState:
        return EnvState(
            pose=Pose(*self._poses[i]),
            prev_action=Action(*self._prev_vw[i]),
            goal=tuple(self._goals[i]),
            step_count=int(self._steps[i]),
            prev_goal_dist=float(self._prev_dists[i]),
            world=self._world(i),
        )

    def _reset_env(self, i: int) -> None:
        rng = self._env_rngs[i]
        spec = self.spec
        phases = draw_phases(spec, rng)
        world = World(spec, phases, 0.0, _geom=self._geom)
        pose = wd.sample_free_pose(world, spec.spawn_clearance, rng,
                                   region=spec.spawn_region)
        goal = _sample_goal(world, pose, self.reward_cfg.goal_radius, rng,
                            self.min_spawn_goal_dist)
        self._phases[i] = phases
        self._sim_times[i] = 0.0
        self._poses[i] = (pose.x, pose.y, pose.yaw)
        self._goals[i] = goal
        self._prev_vw[i] = 0.0
        self._steps[i] = 0
        self._prev_dists[i] = math.dist((pose.x, pose.y), goal)

    def _dyn_centers(self) -> np.ndarray:
        return wd._dynamic_centers(self.spec, self._phases, self._sim_times)

    def _observe_rows(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Scan and encode observations for a subset of envs."""
        dyn = wd._dynamic_centers(self.spec, self._phases[idx], self._sim_times[idx])
        ranges = wd._scan_arrays(self._geom, self._poses[idx, :2],
                                 self._poses[idx, 2], self.lidar, dyn,
                                 self._dyn_halves)
        if self.noise.lidar_sigma > 0.0:
            ranges = ranges + self._noise_rng.normal(
                0.0, self.noise.lidar_sigma, size=ranges.shape)
            ranges = np.clip(ranges, self.lidar.min_range, self.lidar.max_range)
        obs = observation_matrix(ranges, self._poses[idx], self._goals[idx],
                                 self._prev_vw[idx], self.lidar, self.profile,
                                 self._d_max)
        return obs, ranges

    def reset_all(self) -> np.ndarray:
        """Reset every env and return the initial observations (N, obs_dim)."""
        for i in range(self.num_envs):
            self._reset_env(i)
        all_idx = np.arange(self.num_envs)
        obs, ranges = self._observe_rows(all_idx)
        self._obs = obs
        self.last_ranges = ranges
        return self._obs.copy()

    @property
    def observations(self) -> np.ndarray:
        return self._obs.copy()

    @property
    def poses(self) -> np.ndarray:
        return self._poses.copy()

    @property
    def goals(self) -> np.ndarray:
        return self._goals.copy()

    # -- stepping --------------------------------------------------------

    def step(self, raw_actions: np.ndarray):
        """Advance all envs one control tick.

        Per env: clamp the raw action (plus optional actuation noise),
        integrate the pose, advance dynamic obstacles, rescan (plus
        optional sensing noise), score the transition, and auto-reset on
        termination.
        """
        raw_actions = np.asarray(raw_actions, dtype=np.float64)
        if raw_actions.shape != (self.num_envs, 2):
            raise ValueError(f"expected actions of shape ({self.num_envs}, 2), "
                             f"got {raw_actions.shape}")
        vw = clamp_action_batch(raw_actions, self.profile)
        if self.noise.action_sigma > 0.0:
            v_lo, v_hi = self.profile.v_range
            w_lo, w_hi = self.profile.w_range
            sig = np.asarray([self.noise.action_sigma * (v_hi - v_lo),
                              self.noise.action_sigma * (w_hi - w_lo)])
            vw = vw + self._noise_rng.normal(size=vw.shape) * sig
            vw = clip_to_ranges(vw, self.profile)

        self._poses = integrate_batch(self._poses, vw, self.dt)
        self._sim_times += self.dt
        self._prev_vw = vw
        self._steps += 1

        all_idx = np.arange(self.num_envs)
        obs, ranges = self._observe_rows(all_idx)
        scan_min = ranges.min(axis=1)
        cur_dists = np.hypot(self._goals[:, 0] - self._poses[:, 0],
                             self._goals[:, 1] - self._poses[:, 1])

        cfg = self.reward_cfg
        r_distance = self._prev_dists - cur_dists
        r_collision = np.where(scan_min < cfg.warn_dist, -np.exp(-scan_min), 0.0)
        goal_m = cur_dists < cfg.goal_radius
        coll_m = ~goal_m & (scan_min < cfg.min_dist)
        time_m = ~goal_m & ~coll_m & (self._steps >= cfg.max_steps)
        r_time = np.where(
            goal_m, cfg.time_bonus_scale * (cfg.max_steps - self._steps) / cfg.max_steps,
            0.0)
        bonus = (goal_m * cfg.r_goal - coll_m * cfg.r_collision
                 - time_m * cfg.r_timeout)
        rewards = r_distance + r_collision + r_time + bonus
        cause = np.zeros(self.num_envs, dtype=np.int8)
        cause[goal_m] = CAUSE_GOAL
        cause[coll_m] = CAUSE_COLLISION
        cause[time_m] = CAUSE_TIMEOUT
        dones = cause != CAUSE_NONE

        self._prev_dists = cur_dists
        info = {
            "r_distance": r_distance,
            "r_collision": r_collision,
            "r_time": r_time,
            "terminal_bonus": bonus.astype(np.float64),
            "cause": cause,
            "scan_min": scan_min,
            "goal_dist": cur_dists.copy(),
            "vw": vw.copy(),
            # Pre-reset snapshots so terminal states survive the auto-reset.
            "pose": self._poses.copy(),
            "ranges": ranges.copy(),
        }

        done_idx = np.flatnonzero(dones)
        if done_idx.size:
            for i in done_idx:
                self._reset_env(int(i))
            robs, rranges = self._observe_rows(done_idx)
            obs[done_idx] = robs
            ranges[done_idx] = rranges

        self._obs = obs
        self.last_ranges = ranges
        return obs.copy(), rewards, dones, info
