"""Clipped-surrogate PPO with GAE, curriculum stages, and recurrent unrolls.

The trainer collects fixed-horizon rollouts from the vectorized env,
computes generalized advantage estimates, and takes several epochs of
minibatched Adam steps on the clipped objective.  Recurrent policies are
optimized over contiguous truncated unrolls whose initial hidden states
were snapshotted during collection; episode boundaries inside an unroll
zero the carried state exactly as they did when the data was gathered.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn, policy_io
from .env import CAUSES, CAUSE_GOAL, CAUSE_TIMEOUT, VectorEnv
from .nn import (HiddenState, NetworkShape, NonFiniteLossError, OptState,
                 PolicyWeights)
from .world import WorldSpec


@dataclass(frozen=True)
class PpoHyper:
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 4
    minibatch_size: int = 512
    horizon: int = 64
    value_coef: float = 1.0
    entropy_coef: float = 0.005
    grad_clip_norm: float = 1.0
    iterations: int = 1500
    unroll_len: int = 16
    normalize_value: bool = True
    lr_schedule: str = "adaptive"   # "adaptive" (KL-tracking) or "fixed"
    kl_target: float = 0.008
    value_bootstrap: bool = True


#: Bounds for the adaptive learning-rate schedule.
LR_MIN, LR_MAX = 1e-5, 3e-3


@dataclass
class ValueNormalizer:
    """Running mean/variance of the critic's regression targets.

    Terminal bonuses put returns on a +-60 scale while the surrogate term
    is O(1); training the critic on raw returns makes its gradients
    dominate the shared trunk and the global norm clip then starves the
    policy.  The critic therefore learns in normalized space and its
    outputs are mapped back to reward scale wherever GAE consumes them.
    Before the first update() the transform is the identity.
    """

    mean: float = 0.0
    var: float = 1.0
    count: float = 0.0

    def update(self, targets: np.ndarray) -> None:
        x = np.asarray(targets, dtype=np.float64).ravel()
        b_n = float(x.size)
        if b_n == 0.0:
            return
        b_mean = float(x.mean())
        b_var = float(x.var())
        if self.count == 0.0:
            self.mean, self.var, self.count = b_mean, b_var, b_n
            return
        tot = self.count + b_n
        delta = b_mean - self.mean
        self.mean += delta * b_n / tot
        self.var = (self.var * self.count + b_var * b_n
                    + delta * delta * self.count * b_n / tot) / tot
        self.count = tot

    @property
    def std(self) -> float:
        return math.sqrt(max(self.var, 1e-8))

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class CurriculumStage:
    """One training phase: which arena, and whether its obstacles move."""

    start_iteration: int
    world: WorldSpec
    dynamic_obstacles: bool = True
    name: str = ""

    def effective_spec(self) -> WorldSpec:
        if self.dynamic_obstacles:
            return self.world
        return dataclasses.replace(self.world, dynamic_obstacles=())


@dataclass(frozen=True)
class CurriculumSchedule:
    stages: tuple[CurriculumStage, ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("curriculum needs at least one stage")
        starts = [s.start_iteration for s in self.stages]
        if starts[0] != 0:
            raise ValueError("first curriculum stage must start at iteration 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("curriculum stage starts must be strictly increasing")


def curriculum_stage(iteration: int, schedule: CurriculumSchedule) -> CurriculumStage:
    """The stage active at an iteration: the last one that has started."""
    active = schedule.stages[0]
    for stage in schedule.stages:
        if stage.start_iteration <= iteration:
            active = stage
        else:
            break
    return active


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                bootstrap_value, gamma: float, lam: float):
    """Generalized advantage estimation over a rollout.

    Arrays are time-major, (T,) or (T, N); bootstrap_value is the critic's
    estimate for the state after the last step (masked by dones).  Returns
    (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"rewards {rewards.shape}, values {values.shape}, dones "
            f"{dones.shape} must have identical shapes")
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap_value, dtype=np.float64),
                                 rewards.shape[1:]).copy() if rewards.ndim > 1 \
        else float(bootstrap_value)
    carry = 0.0
    for t in reversed(range(t_len)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBuffer:
    """Fixed-horizon on-policy batch, time-major (horizon, num_envs, ...)."""

    obs: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap_value: np.ndarray
    hidden_h0: np.ndarray       # (windows, num_envs, units) unroll entry states
    hidden_c0: np.ndarray

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    @property
    def num_envs(self) -> int:
        return self.obs.shape[1]


@dataclass
class EpisodeTracker:
    """Running per-env return/length accumulators across rollout boundaries."""

    returns: np.ndarray
    lengths: np.ndarray

    @staticmethod
    def zeros(num_envs: int) -> "EpisodeTracker":
        return EpisodeTracker(np.zeros(num_envs), np.zeros(num_envs, dtype=np.int64))


def collect_rollout(env: VectorEnv, weights: PolicyWeights, hyper: PpoHyper,
                    rng: np.random.Generator, hidden: HiddenState | None = None,
                    tracker: EpisodeTracker | None = None,
                    value_norm: ValueNormalizer | None = None):
    """Gather horizon steps from every env with Gaussian exploration.

    Raw actions are sampled around the squashed mean and handed to the env
    unsquashed (the env's clamp performs the saturation).  Returns the
    buffer, the carried hidden state, and (return, length, cause) tuples
    for episodes that finished during collection.

    Hitting the step cap truncates an episode rather than ending it: the
    agent cannot observe the clock, so with value_bootstrap the stored
    reward for a timeout step is augmented by the discounted state value,
    which removes the unpredictable terminal penalty from value targets.
    """
    n = env.num_envs
    t_len = hyper.horizon
    shape = weights.shape
    if shape.recurrent and t_len % hyper.unroll_len != 0:
        raise ValueError("horizon must be a multiple of unroll_len")
    if hidden is None:
        hidden = HiddenState.zeros(shape.recurrent_units, n)
    if tracker is None:
        tracker = EpisodeTracker.zeros(n)
    windows = t_len // hyper.unroll_len if shape.recurrent else 0

    obs_dim = env.obs_dim
    buf = RolloutBuffer(
        obs=np.empty((t_len, n, obs_dim)),
        actions=np.empty((t_len, n, shape.action_dim)),
        logprobs=np.empty((t_len, n)),
        values=np.empty((t_len, n)),
        rewards=np.empty((t_len, n)),
        dones=np.empty((t_len, n), dtype=bool),
        bootstrap_value=np.zeros(n),
        hidden_h0=np.empty((windows, n, shape.recurrent_units)),
        hidden_c0=np.empty((windows, n, shape.recurrent_units)),
    )
    finished: list[tuple[float, int, str]] = []
    sigma = np.exp(weights["logstd"])
    obs = env.observations
    for t in range(t_len):
        if shape.recurrent and t % hyper.unroll_len == 0:
            w = t // hyper.unroll_len
            buf.hidden_h0[w] = hidden.h
            buf.hidden_c0[w] = hidden.c
        mean, value, hidden, _ = forward_no_cache(weights, obs, hidden)
        actions = mean + rng.standard_normal((n, shape.action_dim)) * sigma
        logprob, _ = nn.gaussian_logprob_entropy(mean, weights["logstd"], actions)
        buf.obs[t] = obs
        buf.actions[t] = actions
        buf.logprobs[t] = logprob
        buf.values[t] = value
        obs, rewards, dones, info = env.step(actions)
        buf.rewards[t] = rewards
        if hyper.value_bootstrap and dones.any():
            timed_out = dones & (np.asarray(info["cause"]) == CAUSE_TIMEOUT)
            if timed_out.any():
                real_v = value if value_norm is None \
                    else value_norm.denormalize(value)
                buf.rewards[t] += hyper.gamma * real_v * timed_out
        buf.dones[t] = dones
        tracker.returns += rewards
        tracker.lengths += 1
        if dones.any():
            for i in np.flatnonzero(dones):
                finished.append((float(tracker.returns[i]), int(tracker.lengths[i]),
                                 CAUSES[info["cause"][i]]))
                tracker.returns[i] = 0.0
                tracker.lengths[i] = 0
            if shape.recurrent:
                keep = ~dones
                hidden = HiddenState(hidden.h * keep[:, None], hidden.c * keep[:, None])
    _, boot_value, _, _ = forward_no_cache(weights, obs, hidden)
    buf.bootstrap_value = np.asarray(boot_value)
    return buf, hidden, finished


def forward_no_cache(weights, obs, hidden):
    """Forward pass when the backward cache is not needed."""
    mean, value, hidden, _ = nn.forward(weights, obs, hidden)
    return mean, value, hidden, None


@dataclass(frozen=True)
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    grad_norm: float


def _loss_and_output_grads(mean, value, logstd, actions, old_logprobs,
                           advantages, returns, hyper: PpoHyper):
    """Clipped-surrogate loss pieces and the exact gradients on the network
    outputs; shapes are whatever the minibatch uses (batch dims leading)."""
    m = actions.size // actions.shape[-1]
    inv_var = np.exp(-2.0 * logstd)
    logprob, entropy = nn.gaussian_logprob_entropy(mean, logstd, actions)
    ratio = np.exp(logprob - old_logprobs)
    clipped = np.clip(ratio, 1.0 - hyper.clip_ratio, 1.0 + hyper.clip_ratio)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_err = value - returns
    value_loss = float((value_err ** 2).mean())
    total = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy
    if not np.isfinite(total):
        raise NonFiniteLossError(
            f"non-finite loss: policy={policy_loss!r} value={value_loss!r} "
            f"entropy={entropy!r} (ratio range [{ratio.min()!r}, {ratio.max()!r}])")

    # d(total)/d(logprob): gradient flows only where the unclipped branch
    # attains the min (ties included, which covers the in-range case).
    active = surr1 <= surr2
    dlp = -(active * advantages * ratio) / m
    delta = actions - mean
    d_mean = dlp[..., None] * delta * inv_var
    d_value = hyper.value_coef * 2.0 * value_err / m
    d_logstd = (dlp[..., None] * (delta ** 2 * inv_var - 1.0)).reshape(-1, logstd.size)
    d_logstd = d_logstd.sum(axis=0) - hyper.entropy_coef
    clip_fraction = float((np.abs(ratio - 1.0) > hyper.clip_ratio).mean())
    # Low-variance KL(old || new) estimator from the same ratios; drives
    # the adaptive learning-rate schedule.
    log_ratio = logprob - old_logprobs
    approx_kl = float(np.mean(np.expm1(log_ratio) - log_ratio))
    return (float(policy_loss), value_loss, entropy, clip_fraction, approx_kl,
            d_mean, d_value, d_logstd)


def _adapt_lr(opt: OptState, observed_kl: float, hyper: PpoHyper) -> OptState:
    """Nudge the learning rate so per-minibatch KL tracks kl_target."""
    if hyper.lr_schedule != "adaptive":
        return opt
    lr = opt.lr
    if observed_kl > 2.0 * hyper.kl_target:
        lr = max(lr / 1.5, LR_MIN)
    elif observed_kl < 0.5 * hyper.kl_target:
        lr = min(lr * 1.5, LR_MAX)
    return replace(opt, lr=lr) if lr != opt.lr else opt


def ppo_update(weights: PolicyWeights, opt: OptState, buf: RolloutBuffer,
               hyper: PpoHyper, rng: np.random.Generator,
               value_norm: ValueNormalizer | None = None):
    """Several epochs of minibatched clipped-surrogate updates.

    Advantages are normalized once over the whole buffer.  Recurrent
    policies shuffle whole unrolls and replay them from their snapshotted
    entry hidden states; flat policies shuffle transitions.  With a
    value_norm, buffer values are treated as normalized critic outputs:
    GAE runs on their reward-scale images and the critic regresses the
    freshly normalized returns.
    """
    t_len, n = buf.horizon, buf.num_envs
    m_total = t_len * n
    if m_total % hyper.minibatch_size != 0:
        raise ValueError("horizon * num_envs must be divisible by minibatch_size")
    if value_norm is not None:
        values = value_norm.denormalize(buf.values)
        boot = value_norm.denormalize(buf.bootstrap_value)
    else:
        values, boot = buf.values, buf.bootstrap_value
    adv, returns = compute_gae(buf.rewards, values, buf.dones,
                               boot, hyper.gamma, hyper.gae_lambda)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    if value_norm is not None:
        value_norm.update(returns)
        returns = value_norm.normalize(returns)
    recurrent = weights.shape.recurrent
    stats: list[tuple[float, float, float, float, float]] = []

    if not recurrent:
        obs_f = buf.obs.reshape(m_total, -1)
        act_f = buf.actions.reshape(m_total, -1)
        lp_f = buf.logprobs.reshape(m_total)
        adv_f = adv.reshape(m_total)
        ret_f = returns.reshape(m_total)
        for _ in range(hyper.epochs):
            perm = rng.permutation(m_total)
            for lo in range(0, m_total, hyper.minibatch_size):
                idx = perm[lo:lo + hyper.minibatch_size]
                mean, value, _, cache = nn.forward(weights, obs_f[idx])
                (pl, vl, ent, cf, kl, d_mean, d_value,
                 d_logstd) = _loss_and_output_grads(
                    mean, value, weights["logstd"], act_f[idx], lp_f[idx],
                    adv_f[idx], ret_f[idx], hyper)
                grads, _, _ = nn.backward(weights, cache, d_mean, d_value)
                grads["logstd"] += d_logstd
                grads, norm = nn.clip_grads(grads, hyper.grad_clip_norm)
                weights, opt = nn.adam_step(weights, grads, opt)
                weights = nn.clamp_logstd(weights)
                stats.append((pl, vl, ent, cf, norm, kl))
    else:
        u_len = hyper.unroll_len
        windows = t_len // u_len
        num_unrolls = windows * n
        per_mb = hyper.minibatch_size // u_len
        if hyper.minibatch_size % u_len != 0:
            raise ValueError("minibatch_size must be a multiple of unroll_len")
        # Episode boundaries inside an unroll: reset before local step s > 0
        # whenever the previous step ended an episode.
        local = np.arange(u_len)
        for _ in range(hyper.epochs):
            perm = rng.permutation(num_unrolls)
            for lo in range(0, num_unrolls, per_mb):
                us = perm[lo:lo + per_mb]
                ws, ns = us // n, us % n
                t_idx = ws[None, :] * u_len + local[:, None]     # (L, U)
                obs_mb = buf.obs[t_idx, ns[None, :]]
                act_mb = buf.actions[t_idx, ns[None, :]]
                lp_mb = buf.logprobs[t_idx, ns[None, :]]
                adv_mb = adv[t_idx, ns[None, :]]
                ret_mb = returns[t_idx, ns[None, :]]
                reset = np.zeros((u_len, len(us)), dtype=bool)
                reset[1:] = buf.dones[t_idx[:-1], ns[None, :]]
                h0 = HiddenState(buf.hidden_h0[ws, ns], buf.hidden_c0[ws, ns])
                means, values, _, caches = nn.forward_sequence(
                    weights, obs_mb, h0, reset_mask=reset)
                (pl, vl, ent, cf, kl, d_mean, d_value,
                 d_logstd) = _loss_and_output_grads(
                    means, values, weights["logstd"], act_mb, lp_mb,
                    adv_mb, ret_mb, hyper)
                grads = nn.backward_sequence(weights, caches, d_mean, d_value,
                                             reset_mask=reset)
                grads["logstd"] += d_logstd
                grads, norm = nn.clip_grads(grads, hyper.grad_clip_norm)
                weights, opt = nn.adam_step(weights, grads, opt)
                weights = nn.clamp_logstd(weights)
                stats.append((pl, vl, ent, cf, norm, kl))

    arr = np.asarray(stats).mean(axis=0)
    # One learning-rate adjustment per update, on the epoch-mean KL; the
    # per-minibatch estimate is far too noisy to steer on directly.
    opt = _adapt_lr(opt, float(arr[5]), hyper)
    return weights, opt, UpdateStats(*(float(x) for x in arr[:5]))


# ---------------------------------------------------------------------------
# Full training loop.

STATS_COLUMNS = ("iteration", "env_steps", "episodes", "mean_return",
                 "mean_length", "success_rate", "policy_loss", "value_loss",
                 "entropy", "clip_fraction", "grad_norm", "stage")


@dataclass(frozen=True)
class TrainStats:
    iteration: int
    env_steps: int
    episodes: int
    mean_return: float
    mean_length: float
    success_rate: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    grad_norm: float
    stage: int

    def as_row(self) -> list[str]:
        out = []
        for name in STATS_COLUMNS:
            v = getattr(self, name)
            out.append(str(v) if isinstance(v, int) else repr(float(v)))
        return out


@dataclass
class TrainResult:
    weights: PolicyWeights
    stats: list[TrainStats]
    iterations_run: int
    stopped_early: bool
    stats_path: Path | None = None
    policy_path: Path | None = None
    checkpoint_paths: list[Path] = field(default_factory=list)


def save_checkpoint(weights: PolicyWeights, path, iteration: int) -> None:
    meta = {"shape": dataclasses.asdict(weights.shape), "iteration": iteration}
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True), **weights.tensors)


def load_checkpoint(path) -> tuple[PolicyWeights, int]:
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"]))
        sd = meta["shape"]
        sd["hidden"] = tuple(sd["hidden"])
        shape = NetworkShape(**sd)
        tensors = {name: data[name] for name, _ in nn.tensor_spec(shape)}
    return PolicyWeights(shape, tensors), int(meta["iteration"])


def write_stats_csv(rows: list[TrainStats], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(STATS_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row.as_row()) + "\n")


def train(env: VectorEnv, shape: NetworkShape, hyper: PpoHyper,
          schedule: CurriculumSchedule | None = None, seed: int = 0,
          out_dir=None, checkpoint_every: int = 100,
          callback=None) -> TrainResult:
    """Run the PPO loop; see PpoHyper for the knobs.

    The curriculum switches arenas only at iteration boundaries; a switch
    resets every env and clears recurrent state.  ``callback(iteration,
    stats, weights) -> bool`` is invoked after each update and may request
    an early stop.  With out_dir set, writes stats.csv, periodic .npz
    checkpoints, and a final portable policy export.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ss = np.random.SeedSequence([seed, 0x9909])
    sample_rng, shuffle_rng, init_rng = (np.random.default_rng(c)
                                         for c in ss.spawn(3))
    weights = nn.init_weights(shape, init_rng)
    opt = nn.init_opt_state(weights, hyper.learning_rate)
    value_norm = ValueNormalizer() if hyper.normalize_value else None
    if schedule is None:
        schedule = CurriculumSchedule((CurriculumStage(0, env.spec, True),))
    hidden = HiddenState.zeros(shape.recurrent_units, env.num_envs)
    tracker = EpisodeTracker.zeros(env.num_envs)
    stage = None
    stage_index = -1
    rows: list[TrainStats] = []
    ckpts: list[Path] = []
    env_steps = 0
    last_return, last_length, last_success = 0.0, 0.0, 0.0
    stopped = False
    it = -1
    for it in range(hyper.iterations):
        new_stage = curriculum_stage(it, schedule)
        if new_stage is not stage:
            stage = new_stage
            stage_index = schedule.stages.index(stage)
            env.set_world_spec(stage.effective_spec())
            hidden = HiddenState.zeros(shape.recurrent_units, env.num_envs)
            tracker = EpisodeTracker.zeros(env.num_envs)
        buf, hidden, finished = collect_rollout(env, weights, hyper,
                                                sample_rng, hidden, tracker,
                                                value_norm)
        weights, opt, upd = ppo_update(weights, opt, buf, hyper, shuffle_rng,
                                       value_norm)
        env_steps += hyper.horizon * env.num_envs
        if finished:
            last_return = float(np.mean([f[0] for f in finished]))
            last_length = float(np.mean([f[1] for f in finished]))
            last_success = float(np.mean([1.0 if f[2] == "goal" else 0.0
                                          for f in finished]))
        row = TrainStats(iteration=it, env_steps=env_steps,
                         episodes=len(finished), mean_return=last_return,
                         mean_length=last_length, success_rate=last_success,
                         policy_loss=upd.policy_loss, value_loss=upd.value_loss,
                         entropy=upd.entropy, clip_fraction=upd.clip_fraction,
                         grad_norm=upd.grad_norm, stage=stage_index)
        rows.append(row)
        if out is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
            p = out / f"checkpoint_{it + 1:06d}.npz"
            save_checkpoint(weights, p, it + 1)
            ckpts.append(p)
        if callback is not None and callback(it, row, weights):
            stopped = True
            break

    result = TrainResult(weights=weights, stats=rows, iterations_run=it + 1,
                         stopped_early=stopped, checkpoint_paths=ckpts)
    if out is not None:
        result.stats_path = out / "stats.csv"
        write_stats_csv(rows, result.stats_path)
        final_ckpt = out / "checkpoint_final.npz"
        save_checkpoint(weights, final_ckpt, it + 1)
        result.checkpoint_paths.append(final_ckpt)
        result.policy_path = policy_io.export_policy(
            weights, out / "policy.json", profile=env.profile, lidar=env.lidar,
            goal_dist_max=_final_goal_dist_max(schedule),
            goal_radius=env.reward_cfg.goal_radius)
    return result


def _final_goal_dist_max(schedule: CurriculumSchedule) -> float:
    from .env import goal_dist_max
    return goal_dist_max(schedule.stages[-1].effective_spec())
