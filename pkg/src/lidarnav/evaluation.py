"""Trial runner and metrics: drives a controller through seeded episodes,
records full trajectories, and aggregates the navigation metrics used to
compare learned policies against the classical baseline.

All floats written to CSV go through repr() so files are byte-stable and
round-trip exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import (CAUSES, MIN_SPAWN_GOAL_DIST, NoiseConfig, RewardConfig,
                  VectorEnv)
from .policy_io import PolicyManifest, infer
from .nn import HiddenState, PolicyWeights
from .robot import (CONTROL_DT, Action, Pose, RobotProfile, clamp_action,
                    unclamp_action)
from .world import LidarConfig, WorldSpec

#: Column order of per-trial trajectory CSV files.
TRAJECTORY_COLUMNS = ("t", "x", "y", "yaw", "v", "w", "goal_dist", "scan_min")

#: Column order of the aggregate summary CSV.
SUMMARY_COLUMNS = (
    "population", "trials", "successes", "success_rate",
    "task_time_mean", "task_time_std",
    "min_lidar_mean", "min_lidar_std",
    "avg_linear_vel_mean", "avg_linear_vel_std",
    "dist_to_target_mean", "dist_to_target_std",
    "final_goal_dist_mean",
)


class PolicyController:
    """Runs a loaded policy through the same reset/act protocol as the
    baseline planner; tracks its own previous command and hidden state."""

    def __init__(self, weights: PolicyWeights, manifest: PolicyManifest):
        self.weights = weights
        self.manifest = manifest
        self._goal: tuple[float, float] = (0.0, 0.0)
        self._prev = Action(0.0, 0.0)
        self._hidden: HiddenState | None = None

    def reset(self, pose: Pose, goal: tuple[float, float]) -> None:
        self._goal = goal
        self._prev = Action(0.0, 0.0)
        shape = self.weights.shape
        self._hidden = (HiddenState.zeros(shape.recurrent_units)
                        if shape.recurrent else None)

    def act(self, pose: Pose, ranges: np.ndarray) -> np.ndarray:
        action, self._hidden = infer(self.weights, self.manifest, ranges, pose,
                                     self._goal, self._prev, self._hidden)
        self._prev = action
        return unclamp_action(action, self.manifest.profile)


@dataclass
class TrialRecord:
    """One episode: outcome, scalar metrics, and the full trajectory.

    trajectory has steps + 1 rows in TRAJECTORY_COLUMNS order; row k holds
    the pose at tick k and the action commanded there (the terminal row
    commands v = w = 0).  raw_actions keeps the exact [-1, 1] commands so
    an episode can be replayed through the env bit for bit.
    """

    seed: int
    cause: str
    steps: int
    task_time: float
    path_length: float
    min_lidar: float
    avg_linear_vel: float
    spawn_goal_dist: float
    final_goal_dist: float
    goal: tuple[float, float]
    trajectory: np.ndarray
    raw_actions: np.ndarray
    scans: np.ndarray | None = None

    @property
    def success(self) -> bool:
        return self.cause == "goal"


@dataclass
class TrialReport:
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.success for r in self.records) / len(self.records)

    def metrics(self, success_only: bool = False) -> dict[str, float]:
        """Aggregate means/stds; population std, nan when the population
        is empty."""
        recs = [r for r in self.records if r.success] if success_only \
            else list(self.records)

        def agg(vals):
            if not recs:
                return float("nan"), float("nan")
            a = np.asarray(vals, dtype=np.float64)
            return float(a.mean()), float(a.std())

        tt = agg([r.task_time for r in recs])
        ml = agg([r.min_lidar for r in recs])
        av = agg([r.avg_linear_vel for r in recs])
        dt_ = agg([r.spawn_goal_dist for r in recs])
        fg = agg([r.final_goal_dist for r in recs])
        return {
            "population": "success_only" if success_only else "all",
            "trials": len(recs),
            "successes": sum(r.success for r in recs),
            "success_rate": self.success_rate,
            "task_time_mean": tt[0], "task_time_std": tt[1],
            "min_lidar_mean": ml[0], "min_lidar_std": ml[1],
            "avg_linear_vel_mean": av[0], "avg_linear_vel_std": av[1],
            "dist_to_target_mean": dt_[0], "dist_to_target_std": dt_[1],
            "final_goal_dist_mean": fg[0],
        }


def trial_seed(base_seed: int, index: int) -> int:
    """Stable per-trial env seed, independent of how many trials run."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def run_trial(controller, spec: WorldSpec, lidar: LidarConfig,
              profile: RobotProfile, reward: RewardConfig, seed: int,
              noise: NoiseConfig | None = None, dt: float = CONTROL_DT,
              min_spawn_goal_dist: float = MIN_SPAWN_GOAL_DIST,
              keep_scans: bool = False) -> TrialRecord:
    """Run one seeded episode to termination and record it."""
    env = VectorEnv(spec, lidar, profile, reward, num_envs=1, noise=noise,
                    dt=dt, min_spawn_goal_dist=min_spawn_goal_dist, seed=seed)
    goal = tuple(env.goals[0])
    controller.reset(Pose(*env.poses[0]), goal)

    rows: list[tuple] = []
    raws: list[np.ndarray] = []
    scans: list[np.ndarray] = [] if keep_scans else None
    cause = "timeout"
    k = 0
    while True:
        pose = env.poses[0]
        ranges = env.last_ranges[0].copy()
        goal_dist = math.dist(pose[:2], goal)
        raw = np.asarray(controller.act(Pose(*pose), ranges), dtype=np.float64)
        act = clamp_action(raw, profile)
        rows.append((k * dt, pose[0], pose[1], pose[2], act.v, act.w,
                     goal_dist, float(ranges.min())))
        raws.append(raw)
        if keep_scans:
            scans.append(ranges)
        _, _, dones, info = env.step(raw[None, :])
        k += 1
        if dones[0]:
            tp = info["pose"][0]
            tr = info["ranges"][0]
            rows.append((k * dt, tp[0], tp[1], tp[2], 0.0, 0.0,
                         float(info["goal_dist"][0]), float(info["scan_min"][0])))
            if keep_scans:
                scans.append(tr.copy())
            cause = CAUSES[int(info["cause"][0])]
            break

    traj = np.asarray(rows, dtype=np.float64)
    steps = len(rows) - 1
    task_time = steps * dt
    path_length = float(traj[:-1, 4].sum() * dt)
    return TrialRecord(
        seed=seed, cause=cause, steps=steps, task_time=task_time,
        path_length=path_length, min_lidar=float(traj[:, 7].min()),
        avg_linear_vel=path_length / task_time,
        spawn_goal_dist=float(traj[0, 6]), final_goal_dist=float(traj[-1, 6]),
        goal=goal, trajectory=traj,
        raw_actions=np.asarray(raws, dtype=np.float64),
        scans=np.asarray(scans) if keep_scans else None)


def run_trials(controller, spec: WorldSpec, lidar: LidarConfig,
               profile: RobotProfile, reward: RewardConfig, n_trials: int,
               seed: int = 0, noise: NoiseConfig | None = None,
               dt: float = CONTROL_DT,
               min_spawn_goal_dist: float = MIN_SPAWN_GOAL_DIST,
               keep_scans: bool = False) -> TrialReport:
    """Run n_trials independent seeded episodes (trial k reuses the same
    world spec but a fresh env seeded from (seed, k))."""
    report = TrialReport()
    for k in range(n_trials):
        report.records.append(run_trial(
            controller, spec, lidar, profile, reward, trial_seed(seed, k),
            noise=noise, dt=dt, min_spawn_goal_dist=min_spawn_goal_dist,
            keep_scans=keep_scans))
    return report


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def summary_rows(report: TrialReport) -> list[dict]:
    return [report.metrics(success_only=False),
            report.metrics(success_only=True)]


def write_summary_csv(report: TrialReport, path: str | Path) -> Path:
    path = Path(path)
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in summary_rows(report):
        lines.append(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS))
    path.write_text("\n".join(lines) + "\n")
    return path


def summarize(report: TrialReport) -> str:
    """Human-readable run summary."""
    counts = {c: 0 for c in CAUSES[1:]}
    for r in report.records:
        counts[r.cause] += 1
    out = [f"trials: {len(report.records)}",
           f"success rate: {report.success_rate:.3f}",
           "outcomes: " + ", ".join(f"{c}={counts[c]}" for c in counts)]
    for row in summary_rows(report):
        if row["trials"] == 0:
            out.append(f"[{row['population']}] no trials")
            continue
        out.append(
            f"[{row['population']}] task_time {row['task_time_mean']:.2f}s"
            f" +/- {row['task_time_std']:.2f}"
            f" | min_lidar {row['min_lidar_mean']:.3f} m"
            f" | avg_v {row['avg_linear_vel_mean']:.3f} m/s"
            f" | dist_to_target {row['dist_to_target_mean']:.2f} m")
    return "\n".join(out)


def export_trajectories(report: TrialReport, out_dir: str | Path) -> list[Path]:
    """Write trial_XXX.csv per episode plus an index.csv of per-trial
    metrics; floats use repr() for exact round-trips."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    index_lines = [",".join((
        "trial", "seed", "cause", "steps", "task_time", "path_length",
        "min_lidar", "avg_linear_vel", "spawn_goal_dist", "final_goal_dist",
        "goal_x", "goal_y", "file"))]
    for i, rec in enumerate(report.records):
        name = f"trial_{i:03d}.csv"
        lines = [",".join(TRAJECTORY_COLUMNS)]
        for row in rec.trajectory:
            lines.append(",".join(repr(float(v)) for v in row))
        p = out_dir / name
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
        index_lines.append(",".join([
            str(i), str(rec.seed), rec.cause, str(rec.steps),
            repr(rec.task_time), repr(rec.path_length), repr(rec.min_lidar),
            repr(rec.avg_linear_vel), repr(rec.spawn_goal_dist),
            repr(rec.final_goal_dist), repr(float(rec.goal[0])),
            repr(float(rec.goal[1])), name]))
    (out_dir / "index.csv").write_text("\n".join(index_lines) + "\n")
    return paths


def load_trajectory(path: str | Path) -> np.ndarray:
    """Read back a trajectory CSV as (rows, 8) float64."""
    lines = Path(path).read_text().strip().split("\n")
    if tuple(lines[0].split(",")) != TRAJECTORY_COLUMNS:
        raise ValueError(f"unexpected trajectory header in {path}")
    return np.asarray([[float(v) for v in ln.split(",")] for ln in lines[1:]],
                      dtype=np.float64)


def distance_curves(report: TrialReport, grid_dt: float = 1.0,
                    success_only: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Goal distance vs time resampled to a shared grid.

    Episodes shorter than the grid hold their final distance, so curves
    stay comparable across different task times.  Returns (times, mean,
    std) over the chosen population.
    """
    recs = [r for r in report.records if r.success] if success_only \
        else list(report.records)
    if not recs:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    t_max = max(r.task_time for r in recs)
    times = np.arange(0.0, t_max + grid_dt / 2, grid_dt)
    curves = np.stack([
        np.interp(times, r.trajectory[:, 0], r.trajectory[:, 6],
                  right=r.trajectory[-1, 6])
        for r in recs])
    return times, curves.mean(axis=0), curves.std(axis=0)
