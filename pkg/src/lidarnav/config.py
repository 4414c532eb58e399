"""Task and training configuration: JSON in, validated dataclasses out.

Every validation error names the offending field by dotted path (e.g.
"ppo.learning_rate: expected a positive number"), unknown keys are
rejected, and serializing a parsed config back to a dict is a fixed
point, so configs can be normalized, stored in run manifests, and
reloaded without drift.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .env import NoiseConfig, RewardConfig
from .nn import NetworkShape
from .ppo import CurriculumSchedule, CurriculumStage, PpoHyper
from .robot import CONTROL_DT, ROBOT_PROFILES, RobotProfile
from .world import (LIDAR_CONFIGS, LidarConfig, WorldSpec, load_spec,
                    preset_world_spec, spec_from_dict, spec_to_dict)
from .env import MIN_SPAWN_GOAL_DIST, VectorEnv

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Bad configuration; the message carries the dotted field path."""


class _Reader:
    """Tracks consumed keys so typos surface as unknown-key errors."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected an object")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key: str, default: float, minimum=None) -> float:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._p(key)}: expected a number")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self._p(key)}: must be >= {minimum}")
        return float(v)

    def integer(self, key: str, default: int, minimum=None) -> int:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._p(key)}: expected an integer")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self._p(key)}: must be >= {minimum}")
        return int(v)

    def boolean(self, key: str, default: bool) -> bool:
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self._p(key)}: expected true or false")
        return v

    def string(self, key: str, default=None) -> str | None:
        v = self.raw(key, default)
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"{self._p(key)}: expected a string")
        return v

    def child(self, key: str) -> "_Reader | None":
        v = self.raw(key)
        if v is None:
            return None
        if not isinstance(v, dict):
            raise ConfigError(f"{self._p(key)}: expected an object")
        return _Reader(v, self._p(key))

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(
                f"{self.path or 'config'}: unknown key(s) {', '.join(unknown)}")


@dataclass(frozen=True)
class TaskConfig:
    """What to navigate: arena, sensor, robot, reward, and seeding."""

    world: WorldSpec
    world_name: str | None = None
    lidar: LidarConfig = LIDAR_CONFIGS["default"]
    profile: RobotProfile = ROBOT_PROFILES["jetbot"]
    reward: RewardConfig = RewardConfig()
    noise: NoiseConfig = NoiseConfig()
    curriculum: CurriculumSchedule | None = None
    seed: int = 0
    num_envs: int = 64
    dt: float = CONTROL_DT
    min_spawn_goal_dist: float = MIN_SPAWN_GOAL_DIST


@dataclass(frozen=True)
class TrainConfig:
    """How to train: network shape, optimizer schedule, checkpointing."""

    hidden: tuple[int, ...] = (256, 128, 64)
    recurrent: bool = False
    recurrent_units: int = 128
    input_dim: int | None = None
    hyper: PpoHyper = PpoHyper()
    checkpoint_every: int = 100

    def shape_for(self, task: TaskConfig) -> NetworkShape:
        """Resolve the network input width against the task's sensor.

        An explicit input_dim must equal lidar.beam_count + 4 (the scan
        plus goal distance, goal bearing, and the previous action).
        """
        derived = task.lidar.beam_count + 4
        if self.input_dim is not None and self.input_dim != derived:
            raise ConfigError(
                f"network.input_dim ({self.input_dim}) must equal "
                f"lidar.beam_count + 4 ({derived})")
        return NetworkShape(input_dim=derived, hidden=self.hidden,
                            recurrent=self.recurrent,
                            recurrent_units=self.recurrent_units)


# ---------------------------------------------------------------------------
# Parsing.

def _load_source(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _check_version(r: _Reader) -> None:
    v = r.raw("schema_version", CONFIG_SCHEMA_VERSION)
    if v != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{r.path or 'config'}.schema_version: "
                          f"unsupported version {v!r} (expected "
                          f"{CONFIG_SCHEMA_VERSION})")


def _parse_world(value, path: str, base_dir: Path | None) -> tuple[WorldSpec, str | None]:
    if isinstance(value, str):
        try:
            return preset_world_spec(value), value
        except Exception as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if isinstance(value, dict):
        if "file" in value:
            extra = set(value) - {"file"}
            if extra:
                raise ConfigError(f"{path}: unknown key(s) next to 'file': "
                                  f"{', '.join(sorted(extra))}")
            p = Path(value["file"])
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            try:
                return load_spec(p), None
            except Exception as exc:
                raise ConfigError(f"{path}.file: {exc}") from exc
        if "preset" in value:
            extra = set(value) - {"preset", "dynamic_speed"}
            if extra:
                raise ConfigError(f"{path}: unknown key(s) next to 'preset': "
                                  f"{', '.join(sorted(extra))}")
            try:
                return (preset_world_spec(value["preset"],
                                          dynamic_speed=value.get("dynamic_speed")),
                        str(value["preset"]))
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(f"{path}.preset: {exc}") from exc
        try:
            return spec_from_dict(value), None
        except Exception as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}: expected a preset name, a {{'file': ...}} "
                      "reference, or an inline world object")


def _parse_lidar(value, path: str) -> LidarConfig:
    if value is None:
        return LIDAR_CONFIGS["default"]
    if isinstance(value, str):
        if value not in LIDAR_CONFIGS:
            raise ConfigError(f"{path}: unknown lidar preset {value!r} "
                              f"(have {', '.join(sorted(LIDAR_CONFIGS))})")
        return LIDAR_CONFIGS[value]
    r = _Reader(value, path)
    cfg = LidarConfig(
        beam_count=r.integer("beam_count", 120, minimum=4),
        min_range=r.number("min_range", 0.15, minimum=0.0),
        max_range=r.number("max_range", 3.0, minimum=0.0))
    r.finish()
    if cfg.max_range <= cfg.min_range:
        raise ConfigError(f"{path}.max_range: must exceed min_range")
    return cfg


def _parse_pair(r: _Reader, key: str, default: tuple[float, float]) -> tuple[float, float]:
    v = r.raw(key)
    if v is None:
        return default
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
        raise ConfigError(f"{r._p(key)}: expected [low, high]")
    if v[0] > v[1]:
        raise ConfigError(f"{r._p(key)}: low must not exceed high")
    return (float(v[0]), float(v[1]))


def _parse_robot(value, path: str) -> RobotProfile:
    if value is None:
        return ROBOT_PROFILES["jetbot"]
    if isinstance(value, str):
        if value not in ROBOT_PROFILES:
            raise ConfigError(f"{path}: unknown robot profile {value!r} "
                              f"(have {', '.join(sorted(ROBOT_PROFILES))})")
        return ROBOT_PROFILES[value]
    r = _Reader(value, path)
    base_name = r.string("profile")
    if base_name is not None:
        if base_name not in ROBOT_PROFILES:
            raise ConfigError(f"{r._p('profile')}: unknown robot profile "
                              f"{base_name!r}")
        base = ROBOT_PROFILES[base_name]
    else:
        base = RobotProfile(name=r.string("name", "custom"),
                            wheel_radius=0.03, wheel_base=0.12)
    profile = RobotProfile(
        name=r.string("name", base.name),
        wheel_radius=r.number("wheel_radius", base.wheel_radius, minimum=1e-6),
        wheel_base=r.number("wheel_base", base.wheel_base, minimum=1e-6),
        v_range=_parse_pair(r, "v_range", base.v_range),
        w_range=_parse_pair(r, "w_range", base.w_range),
        body_radius=r.number("body_radius", base.body_radius, minimum=0.0))
    r.finish()
    return profile


def _parse_reward(value, path: str) -> RewardConfig:
    if value is None:
        return RewardConfig()
    r = _Reader(value, path)
    d = RewardConfig()
    cfg = RewardConfig(
        min_dist=r.number("min_dist", d.min_dist, minimum=0.0),
        warn_dist=r.number("warn_dist", d.warn_dist, minimum=0.0),
        goal_radius=r.number("goal_radius", d.goal_radius, minimum=0.0),
        max_steps=r.integer("max_steps", d.max_steps, minimum=1),
        r_goal=r.number("r_goal", d.r_goal),
        r_collision=r.number("r_collision", d.r_collision),
        r_timeout=r.number("r_timeout", d.r_timeout),
        time_bonus_scale=r.number("time_bonus_scale", d.time_bonus_scale))
    r.finish()
    return cfg


def _parse_noise(value, path: str) -> NoiseConfig:
    if value is None:
        return NoiseConfig()
    r = _Reader(value, path)
    cfg = NoiseConfig(lidar_sigma=r.number("lidar_sigma", 0.0, minimum=0.0),
                      action_sigma=r.number("action_sigma", 0.0, minimum=0.0))
    r.finish()
    return cfg


def _parse_curriculum(value, path: str, base_dir) -> CurriculumSchedule | None:
    if value is None:
        return None
    r = _Reader(value, path)
    raw_stages = r.raw("stages")
    r.finish()
    if not isinstance(raw_stages, list) or not raw_stages:
        raise ConfigError(f"{path}.stages: expected a non-empty list")
    stages = []
    for i, sv in enumerate(raw_stages):
        sp = f"{path}.stages.{i}"
        sr = _Reader(sv, sp)
        world, name = _parse_world(sr.raw("world"), f"{sp}.world", base_dir)
        stage = CurriculumStage(
            start_iteration=sr.integer("start_iteration", 0, minimum=0),
            world=world,
            dynamic_obstacles=sr.boolean("dynamic_obstacles", True),
            name=sr.string("name", name or f"stage{i}"))
        sr.finish()
        stages.append(stage)
    try:
        return CurriculumSchedule(tuple(stages))
    except ValueError as exc:
        raise ConfigError(f"{path}.stages: {exc}") from exc


def load_task_config(source=None) -> TaskConfig:
    """Parse a task config from a JSON file path or an in-memory dict;
    None yields the defaults (static arena, jetbot, default lidar)."""
    if source is None:
        return TaskConfig(world=preset_world_spec("static_default"),
                          world_name="static_default")
    base_dir = Path(source).parent if not isinstance(source, dict) else None
    r = _Reader(_load_source(source), "")
    _check_version(r)
    world, world_name = _parse_world(r.raw("world", "static_default"),
                                     "world", base_dir)
    cfg = TaskConfig(
        world=world,
        world_name=world_name,
        lidar=_parse_lidar(r.raw("lidar"), "lidar"),
        profile=_parse_robot(r.raw("robot"), "robot"),
        reward=_parse_reward(r.raw("reward"), "reward"),
        noise=_parse_noise(r.raw("noise"), "noise"),
        curriculum=_parse_curriculum(r.raw("curriculum"), "curriculum", base_dir),
        seed=r.integer("seed", 0),
        num_envs=r.integer("num_envs", 64, minimum=1),
        dt=r.number("dt", CONTROL_DT, minimum=1e-6),
        min_spawn_goal_dist=r.number("min_spawn_goal_dist",
                                     MIN_SPAWN_GOAL_DIST, minimum=0.0))
    r.finish()
    return cfg


def load_train_config(source=None) -> TrainConfig:
    """Parse a train config from a JSON file path or dict; None yields
    the default feedforward setup."""
    if source is None:
        return TrainConfig()
    r = _Reader(_load_source(source), "")
    _check_version(r)
    net = r.child("network")
    if net is not None:
        hidden_raw = net.raw("hidden", [256, 128, 64])
        if (not isinstance(hidden_raw, list) or not hidden_raw
                or any(isinstance(h, bool) or not isinstance(h, int) or h < 1
                       for h in hidden_raw)):
            raise ConfigError("network.hidden: expected a non-empty list of "
                              "positive integers")
        input_dim = net.raw("input_dim")
        if input_dim is not None and (isinstance(input_dim, bool)
                                      or not isinstance(input_dim, int)):
            raise ConfigError("network.input_dim: expected an integer")
        net_cfg = dict(
            hidden=tuple(hidden_raw),
            recurrent=net.boolean("recurrent", False),
            recurrent_units=net.integer("recurrent_units", 128, minimum=1),
            input_dim=input_dim)
        net.finish()
    else:
        net_cfg = {}
    ppo_r = r.child("ppo")
    if ppo_r is not None:
        d = PpoHyper()
        hyper = PpoHyper(
            learning_rate=ppo_r.number("learning_rate", d.learning_rate, minimum=0.0),
            gamma=ppo_r.number("gamma", d.gamma, minimum=0.0),
            gae_lambda=ppo_r.number("gae_lambda", d.gae_lambda, minimum=0.0),
            clip_ratio=ppo_r.number("clip_ratio", d.clip_ratio, minimum=1e-6),
            epochs=ppo_r.integer("epochs", d.epochs, minimum=1),
            minibatch_size=ppo_r.integer("minibatch_size", d.minibatch_size, minimum=1),
            horizon=ppo_r.integer("horizon", d.horizon, minimum=1),
            value_coef=ppo_r.number("value_coef", d.value_coef, minimum=0.0),
            entropy_coef=ppo_r.number("entropy_coef", d.entropy_coef, minimum=0.0),
            grad_clip_norm=ppo_r.number("grad_clip_norm", d.grad_clip_norm, minimum=0.0),
            iterations=ppo_r.integer("iterations", d.iterations, minimum=1),
            unroll_len=ppo_r.integer("unroll_len", d.unroll_len, minimum=1),
            normalize_value=ppo_r.boolean("normalize_value", d.normalize_value),
            lr_schedule=ppo_r.string("lr_schedule", d.lr_schedule),
            kl_target=ppo_r.number("kl_target", d.kl_target, minimum=0.0),
            value_bootstrap=ppo_r.boolean("value_bootstrap", d.value_bootstrap))
        ppo_r.finish()
        if hyper.lr_schedule not in ("adaptive", "fixed"):
            raise ConfigError("ppo.lr_schedule: expected 'adaptive' or 'fixed'")
    else:
        hyper = PpoHyper()
    cfg = TrainConfig(hyper=hyper,
                      checkpoint_every=r.integer("checkpoint_every", 100, minimum=1),
                      **net_cfg)
    r.finish()
    if cfg.hyper.gamma > 1.0 or cfg.hyper.gae_lambda > 1.0:
        raise ConfigError("ppo.gamma and ppo.gae_lambda must be <= 1")
    if cfg.hyper.horizon % cfg.hyper.unroll_len != 0:
        raise ConfigError(
            f"ppo.horizon ({cfg.hyper.horizon}) must be a multiple of "
            f"ppo.unroll_len ({cfg.hyper.unroll_len})")
    return cfg


# ---------------------------------------------------------------------------
# Serialization (canonical dicts; parsing then dumping is a fixed point).

def task_to_dict(cfg: TaskConfig) -> dict:
    out = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "seed": cfg.seed,
        "num_envs": cfg.num_envs,
        "dt": cfg.dt,
        "min_spawn_goal_dist": cfg.min_spawn_goal_dist,
        "world": spec_to_dict(cfg.world),
        "lidar": dataclasses.asdict(cfg.lidar),
        "robot": dataclasses.asdict(cfg.profile) | {"v_range": list(cfg.profile.v_range),
                                                    "w_range": list(cfg.profile.w_range)},
        "reward": dataclasses.asdict(cfg.reward),
        "noise": dataclasses.asdict(cfg.noise),
    }
    if cfg.curriculum is not None:
        out["curriculum"] = {"stages": [
            {"start_iteration": s.start_iteration,
             "world": spec_to_dict(s.world),
             "dynamic_obstacles": s.dynamic_obstacles,
             "name": s.name}
            for s in cfg.curriculum.stages]}
    return out


def train_to_dict(cfg: TrainConfig) -> dict:
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "network": {
            "hidden": list(cfg.hidden),
            "recurrent": cfg.recurrent,
            "recurrent_units": cfg.recurrent_units,
            "input_dim": cfg.input_dim,
        },
        "ppo": dataclasses.asdict(cfg.hyper),
        "checkpoint_every": cfg.checkpoint_every,
    }


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply key.path=value pairs onto a raw config dict.

    Values parse as JSON when possible (numbers, booleans, lists, objects)
    and fall back to bare strings; numeric path parts index into lists.
    """
    data = json.loads(json.dumps(data))      # deep copy, JSON types only
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key.path=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r}: empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if isinstance(node, list):
                node = _list_item(node, part, key)
            elif part in node and isinstance(node[part], (dict, list)):
                node = node[part]
            elif part in node:
                raise ConfigError(f"override {key!r}: {part!r} holds a "
                                  "scalar, cannot descend into it")
            else:
                node[part] = {}
                node = node[part]
        leaf = parts[-1]
        if isinstance(node, list):
            idx = _list_index(node, leaf, key)
            node[idx] = value
        else:
            node[leaf] = value
    return data


def _list_index(node: list, part: str, key: str) -> int:
    if not part.isdigit() or int(part) >= len(node):
        raise ConfigError(f"override {key!r}: {part!r} is not a valid index "
                          f"into a list of {len(node)}")
    return int(part)


def _list_item(node: list, part: str, key: str):
    return node[_list_index(node, part, key)]


# ---------------------------------------------------------------------------
# Builders.

def build_schedule(task: TaskConfig) -> CurriculumSchedule:
    """The task's curriculum, or a single always-on stage of its world."""
    if task.curriculum is not None:
        return task.curriculum
    name = task.world_name or "world"
    return CurriculumSchedule((CurriculumStage(0, task.world, True, name),))


def build_env(task: TaskConfig, num_envs: int | None = None,
              seed: int | None = None) -> VectorEnv:
    """Vector env for the task, starting in the first curriculum stage."""
    spec = build_schedule(task).stages[0].effective_spec()
    return VectorEnv(spec, task.lidar, task.profile, task.reward,
                     num_envs=task.num_envs if num_envs is None else num_envs,
                     noise=task.noise if task.noise.any_enabled else None,
                     dt=task.dt, min_spawn_goal_dist=task.min_spawn_goal_dist,
                     seed=task.seed if seed is None else seed)
