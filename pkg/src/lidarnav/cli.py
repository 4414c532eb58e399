"""Command-line entry point.

Subcommands: train, eval, benchmark, export, inspect, serve, make-world.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Every output directory gets a run_manifest.json recording the command,
arguments, and normalized configs (no timestamps, so reruns are
byte-identical).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__, baseline, bridge, config, evaluation, policy_io, ppo
from .config import ConfigError
from .env import goal_dist_max
from .world import (InvalidSpecError, WORLD_PRESETS, preset_world_spec,
                    random_arena_spec, save_spec)


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; remap to 1 so
    code 2 stays reserved for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="lidarnav",
                description="Lidar-only local navigation: simulator, PPO "
                            "training, classical baseline, and deployment "
                            "tools.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy with PPO",
                       description="Train a policy; writes stats.csv, "
                                   "checkpoints, and a portable policy "
                                   "export under --out.")
    t.add_argument("--task", help="task config JSON (default: built-ins)")
    t.add_argument("--train", dest="train_cfg", help="train config JSON")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--override", action="append", default=[],
                   metavar="task.KEY=V|train.KEY=V",
                   help="dotted-path config override, repeatable")
    t.add_argument("--quiet", action="store_true",
                   help="suppress per-iteration progress lines")
    t.add_argument("--log-every", type=int, default=10,
                   help="progress line interval in iterations")

    e = sub.add_parser("eval", help="evaluate a policy over seeded trials")
    e.add_argument("--policy", required=True, help="policy manifest JSON")
    e.add_argument("--task", help="task config JSON")
    e.add_argument("--trials", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="directory for summary + trajectories")
    e.add_argument("--override", action="append", default=[],
                   metavar="task.KEY=V")

    b = sub.add_parser("benchmark",
                       help="run the classical planner (and optionally a "
                            "policy) over the same trials")
    b.add_argument("--policy", help="policy manifest to compare against")
    b.add_argument("--task", help="task config JSON")
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="output directory")
    b.add_argument("--resolution", type=float, default=0.05,
                   help="occupancy grid resolution (m)")
    b.add_argument("--override", action="append", default=[],
                   metavar="task.KEY=V")

    x = sub.add_parser("export",
                       help="convert a training checkpoint to a portable "
                            "policy")
    x.add_argument("--checkpoint", required=True, help=".npz checkpoint")
    x.add_argument("--task", help="task config the policy was trained on")
    x.add_argument("--out", required=True, help="output manifest path (.json)")

    i = sub.add_parser("inspect", help="describe a policy or checkpoint")
    i.add_argument("artifact", help="policy manifest (.json) or checkpoint "
                                    "(.npz)")
    i.add_argument("--json", action="store_true", help="machine-readable dump")

    s = sub.add_parser("serve",
                       help="drive a policy over line-delimited JSON "
                            "(stdin/stdout or TCP)")
    s.add_argument("--policy", required=True, help="policy manifest JSON")
    s.add_argument("--tcp", type=int, metavar="PORT",
                   help="listen on TCP instead of stdio")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--staleness-limit", type=float,
                   default=bridge.DEFAULT_STALENESS_LIMIT)
    s.add_argument("--heartbeat", type=float, default=1.0,
                   help="idle heartbeat period in seconds (0 disables)")

    w = sub.add_parser("make-world", help="write a world spec JSON")
    src = w.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(WORLD_PRESETS))
    src.add_argument("--random-seed", type=int,
                     help="generate a random cluttered arena")
    w.add_argument("--dynamic-speed", type=float,
                   help="override dynamic obstacle speed (presets only)")
    w.add_argument("--obstacles", type=int,
                   help="obstacle count for random arenas")
    w.add_argument("--half-extent", type=float, default=4.0)
    w.add_argument("--out", required=True, help="output world JSON path")
    return p


def _split_overrides(items: list[str]) -> tuple[list[str], list[str]]:
    task_ov, train_ov = [], []
    for item in items:
        if item.startswith("task."):
            task_ov.append(item[len("task."):])
        elif item.startswith("train."):
            train_ov.append(item[len("train."):])
        else:
            raise ConfigError(
                f"override {item!r}: must start with 'task.' or 'train.'")
    return task_ov, train_ov


def _load_task(path: str | None, overrides: list[str]) -> config.TaskConfig:
    if path is None and not overrides:
        return config.load_task_config()
    raw = config._load_source(path) if path else config.task_to_dict(
        config.load_task_config())
    return config.load_task_config(config.apply_overrides(raw, overrides))


def _write_manifest(out_dir: Path, command: str, args: dict,
                    extra: dict | None = None) -> None:
    manifest = {"command": command, "arguments": args,
                "package_version": __version__}
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cmd_train(args) -> int:
    task_ov, train_ov = _split_overrides(args.override)
    task = _load_task(args.task, task_ov)
    raw_train = (config._load_source(args.train_cfg) if args.train_cfg
                 else config.train_to_dict(config.load_train_config()))
    train_cfg = config.load_train_config(
        config.apply_overrides(raw_train, train_ov))
    shape = train_cfg.shape_for(task)
    env = config.build_env(task)
    schedule = config.build_schedule(task)
    out = Path(args.out)
    _write_manifest(out, "train",
                    {"task": args.task, "train": args.train_cfg,
                     "overrides": args.override, "out": str(out)},
                    {"task_config": config.task_to_dict(task),
                     "train_config": config.train_to_dict(train_cfg)})

    def progress(it, row, _weights):
        if not args.quiet and (it % max(1, args.log_every) == 0
                               or it + 1 == train_cfg.hyper.iterations):
            print(f"iter {it:5d}  return {row.mean_return:8.2f}  "
                  f"success {row.success_rate:5.2f}  "
                  f"entropy {row.entropy:6.3f}  stage {row.stage}")
        return False

    result = ppo.train(env, shape, train_cfg.hyper, schedule,
                       seed=task.seed, out_dir=out,
                       checkpoint_every=train_cfg.checkpoint_every,
                       callback=progress)
    print(f"trained {result.iterations_run} iterations; "
          f"policy at {result.policy_path}")
    return 0


def _eval_outputs(report, out: Path | None, command: str, args_dict: dict,
                  task) -> None:
    print(evaluation.summarize(report))
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_summary_csv(report, out / "summary.csv")
    (out / "summary.txt").write_text(evaluation.summarize(report) + "\n")
    evaluation.export_trajectories(report, out / "trajectories")
    _write_manifest(out, command, args_dict,
                    {"task_config": config.task_to_dict(task)})


def _cmd_eval(args) -> int:
    task_ov, train_ov = _split_overrides(args.override)
    if train_ov:
        raise ConfigError("eval accepts only task.* overrides")
    task = _load_task(args.task, task_ov)
    weights, manifest = policy_io.load_policy(args.policy)
    controller = evaluation.PolicyController(weights, manifest)
    report = evaluation.run_trials(
        controller, task.world, task.lidar, task.profile, task.reward,
        n_trials=args.trials, seed=args.seed,
        noise=task.noise if task.noise.any_enabled else None, dt=task.dt,
        min_spawn_goal_dist=task.min_spawn_goal_dist)
    _eval_outputs(report, Path(args.out) if args.out else None, "eval",
                  {"policy": args.policy, "task": args.task,
                   "trials": args.trials, "seed": args.seed,
                   "overrides": args.override}, task)
    return 0


def _cmd_benchmark(args) -> int:
    task_ov, train_ov = _split_overrides(args.override)
    if train_ov:
        raise ConfigError("benchmark accepts only task.* overrides")
    task = _load_task(args.task, task_ov)
    out = Path(args.out) if args.out else None
    runs: list[tuple[str, object]] = [
        ("baseline", baseline.BaselineController(
            task.world, task.profile, task.lidar, resolution=args.resolution))]
    if args.policy:
        weights, manifest = policy_io.load_policy(args.policy)
        runs.append(("policy", evaluation.PolicyController(weights, manifest)))
    rows = []
    for name, controller in runs:
        print(f"== {name} ==")
        report = evaluation.run_trials(
            controller, task.world, task.lidar, task.profile, task.reward,
            n_trials=args.trials, seed=args.seed,
            noise=task.noise if task.noise.any_enabled else None,
            dt=task.dt, min_spawn_goal_dist=task.min_spawn_goal_dist)
        sub = out / name if out else None
        _eval_outputs(report, sub, "benchmark",
                      {"policy": args.policy, "task": args.task,
                       "trials": args.trials, "seed": args.seed,
                       "planner": name, "overrides": args.override}, task)
        for metrics in evaluation.summary_rows(report):
            rows.append({"planner": name} | metrics)
    if out is not None and rows:
        cols = ("planner",) + evaluation.SUMMARY_COLUMNS
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join(
                repr(float(row[c])) if isinstance(row[c], float) else str(row[c])
                for c in cols))
        (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    return 0


def _cmd_export(args) -> int:
    task = _load_task(args.task, [])
    weights, _iteration = ppo.load_checkpoint(args.checkpoint)
    spec = config.build_schedule(task).stages[-1].effective_spec()
    path = policy_io.export_policy(
        weights, args.out, profile=task.profile, lidar=task.lidar,
        goal_dist_max=goal_dist_max(spec),
        goal_radius=task.reward.goal_radius)
    print(f"wrote {path}")
    return 0


def _cmd_inspect(args) -> int:
    artifact = Path(args.artifact)
    if artifact.suffix == ".npz":
        weights, iteration = ppo.load_checkpoint(artifact)
        info = {"kind": "checkpoint", "iteration": iteration,
                "network": dataclasses.asdict(weights.shape),
                "parameters": int(sum(t.size for t in weights.tensors.values()))}
        if args.json:
            print(json.dumps(info, indent=2, sort_keys=True))
        else:
            print(f"checkpoint {artifact} (iteration {iteration})")
            print(f"network: {weights.shape}")
            print(f"parameters: {info['parameters']}")
        return 0
    weights, manifest = policy_io.load_policy(artifact)
    if args.json:
        print(json.dumps(policy_io.manifest_to_dict(manifest), indent=2,
                         sort_keys=True))
        return 0
    shape = manifest.network
    print(f"policy {artifact}")
    print(f"format version: {manifest.format_version}")
    print(f"network: input {shape.input_dim}, hidden "
          f"{'x'.join(str(h) for h in shape.hidden)}, "
          f"{'LSTM ' + str(shape.recurrent_units) + ', ' if shape.recurrent else ''}"
          f"actions {shape.action_dim}")
    print(f"robot profile: {manifest.profile.name} "
          f"(v {list(manifest.profile.v_range)}, w {list(manifest.profile.w_range)})")
    print(f"lidar: {manifest.lidar.beam_count} beams, "
          f"[{manifest.lidar.min_range}, {manifest.lidar.max_range}] m")
    print(f"normalization: goal_dist_max {manifest.goal_dist_max}, "
          f"goal_radius {manifest.goal_radius}")
    print(f"weights: {manifest.byte_length} bytes, "
          f"crc32 {manifest.checksum_crc32:#010x}")
    print(f"{'tensor':30s} {'shape':>14s} {'offset':>10s}")
    for t in manifest.tensors:
        print(f"{t.name:30s} {str(tuple(t.shape)):>14s} {t.offset:>10d}")
    return 0


def _cmd_serve(args) -> int:
    weights, manifest = policy_io.load_policy(args.policy)
    if args.tcp is not None:
        return bridge.serve_tcp(weights, manifest, host=args.host,
                                port=args.tcp,
                                staleness_limit=args.staleness_limit,
                                heartbeat=args.heartbeat)
    return bridge.serve(weights, manifest,
                        staleness_limit=args.staleness_limit,
                        heartbeat=args.heartbeat)


def _cmd_make_world(args) -> int:
    if args.preset is not None:
        spec = preset_world_spec(args.preset, dynamic_speed=args.dynamic_speed)
    else:
        spec = random_arena_spec(args.random_seed, n_obstacles=args.obstacles,
                                 half_extent=args.half_extent)
    save_spec(spec, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "benchmark": _cmd_benchmark,
    "export": _cmd_export,
    "inspect": _cmd_inspect,
    "serve": _cmd_serve,
    "make-world": _cmd_make_world,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InvalidSpecError) as exc:
        print(f"lidarnav {args.command}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"lidarnav {args.command}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:                      # runtime failure
        print(f"lidarnav {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
