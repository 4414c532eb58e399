import csv
import math

import numpy as np
import pytest

import oracles
from lidarnav import nn, ppo
from lidarnav.env import RewardConfig, VectorEnv
from lidarnav.nn import NetworkShape, init_weights
from lidarnav.ppo import (CurriculumSchedule, CurriculumStage, PpoHyper,
                          STATS_COLUMNS, collect_rollout, compute_gae,
                          curriculum_stage, load_checkpoint, ppo_update,
                          save_checkpoint, train)
from lidarnav.world import LidarConfig, preset_world_spec
from lidarnav.robot import ROBOT_PROFILES

SMALL_LIDAR = LidarConfig(beam_count=24)
SMALL_SHAPE = NetworkShape(input_dim=28, hidden=(16, 16))
SMALL_REC = NetworkShape(input_dim=28, hidden=(16, 16), recurrent=True,
                         recurrent_units=8)


def small_env(num_envs=4, seed=0, spec=None):
    return VectorEnv(spec if spec is not None else preset_world_spec("empty"),
                     SMALL_LIDAR, ROBOT_PROFILES["jetbot"], RewardConfig(),
                     num_envs=num_envs, seed=seed)


def small_hyper(**overrides):
    base = dict(learning_rate=1e-3, epochs=2, minibatch_size=16, horizon=8,
                iterations=3, unroll_len=4)
    base.update(overrides)
    return PpoHyper(**base)


# ---------------------------------------------------------------------------
# GAE.

def test_gae_matches_direct_summation(rng):
    for _ in range(10):
        t_len = int(rng.integers(2, 40))
        rewards = rng.normal(size=t_len)
        values = rng.normal(size=t_len)
        dones = rng.random(t_len) < 0.2
        boot = float(rng.normal())
        gamma = float(rng.uniform(0.9, 1.0))
        lam = float(rng.uniform(0.8, 1.0))
        adv, ret = compute_gae(rewards, values, dones, boot, gamma, lam)
        expect, expect_ret = oracles.gae_direct(rewards, values, dones, boot,
                                                gamma, lam)
        np.testing.assert_allclose(adv, expect, atol=1e-9)
        np.testing.assert_allclose(ret, expect_ret, atol=1e-9)
        np.testing.assert_allclose(ret, adv + values, atol=1e-12)


def test_gae_batched_matches_per_column(rng):
    rewards = rng.normal(size=(12, 5))
    values = rng.normal(size=(12, 5))
    dones = rng.random((12, 5)) < 0.25
    boot = rng.normal(size=5)
    adv, _ = compute_gae(rewards, values, dones, boot, 0.99, 0.95)
    for j in range(5):
        col, _ = compute_gae(rewards[:, j], values[:, j], dones[:, j],
                             float(boot[j]), 0.99, 0.95)
        np.testing.assert_allclose(adv[:, j], col, atol=1e-12)


def test_gae_hand_cases():
    # Terminal step: advantage is just the TD error with no bootstrap.
    adv, ret = compute_gae(np.array([1.0]), np.array([0.0]), np.array([1.0]),
                           5.0, 0.99, 0.95)
    assert adv[0] == pytest.approx(1.0, abs=1e-12)
    assert ret[0] == pytest.approx(1.0, abs=1e-12)
    # gamma = lam = 1, no dones, zero values: advantage is reward-to-go.
    adv, _ = compute_gae(np.array([1.0, 1.0, 1.0]), np.zeros(3), np.zeros(3),
                         0.0, 1.0, 1.0)
    np.testing.assert_allclose(adv, [3.0, 2.0, 1.0], atol=1e-12)
    # All steps terminal: each advantage is r - V.
    r = np.array([2.0, -1.0, 0.5])
    v = np.array([0.5, 0.25, -0.5])
    adv, _ = compute_gae(r, v, np.ones(3), 9.0, 0.99, 0.95)
    np.testing.assert_allclose(adv, r - v, atol=1e-12)
    # Done at t=1 blocks credit flowing back past it.
    adv, _ = compute_gae(np.array([1.0, 1.0]), np.zeros(2),
                         np.array([0.0, 1.0]), 0.0, 1.0, 1.0)
    np.testing.assert_allclose(adv, [2.0, 1.0], atol=1e-12)


def test_gae_shape_mismatch():
    with pytest.raises(ValueError):
        compute_gae(np.zeros(3), np.zeros(4), np.zeros(3), 0.0, 0.99, 0.95)


# ---------------------------------------------------------------------------
# Curriculum.

def _two_stage():
    empty = preset_world_spec("empty")
    static = preset_world_spec("static_default")
    return CurriculumSchedule((CurriculumStage(0, empty),
                               CurriculumStage(300, static)))


def test_curriculum_stage_boundaries():
    sched = _two_stage()
    assert curriculum_stage(0, sched) is sched.stages[0]
    assert curriculum_stage(299, sched) is sched.stages[0]
    assert curriculum_stage(300, sched) is sched.stages[1]
    assert curriculum_stage(10_000, sched) is sched.stages[1]


def test_curriculum_schedule_validation():
    empty = preset_world_spec("empty")
    with pytest.raises(ValueError):
        CurriculumSchedule(())
    with pytest.raises(ValueError):
        CurriculumSchedule((CurriculumStage(5, empty),))
    with pytest.raises(ValueError):
        CurriculumSchedule((CurriculumStage(0, empty),
                            CurriculumStage(0, empty)))


def test_effective_spec_strips_dynamics():
    crossing = preset_world_spec("crossing")
    assert crossing.dynamic_obstacles
    stage = CurriculumStage(0, crossing, dynamic_obstacles=False)
    assert stage.effective_spec().dynamic_obstacles == ()
    live = CurriculumStage(0, crossing, dynamic_obstacles=True)
    assert live.effective_spec() is crossing


# ---------------------------------------------------------------------------
# Surrogate loss and its output gradients.

def test_surrogate_clipped_branch():
    hyper = PpoHyper()
    mean = np.zeros((1, 2))
    logstd = np.zeros(2)
    actions = np.zeros((1, 2))
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    old = lp - math.log(1.5)        # ratio becomes exactly 1.5
    out = ppo._loss_and_output_grads(mean, np.zeros(1), logstd, actions, old,
                                     np.ones(1), np.zeros(1), hyper)
    policy_loss, value_loss, entropy, clip_fraction = out[:4]
    assert policy_loss == pytest.approx(-1.2, abs=1e-9)
    assert value_loss == 0.0
    assert clip_fraction == 1.0
    assert entropy == pytest.approx(2.8379, abs=1e-4)


def test_surrogate_unclipped_is_minus_advantage():
    hyper = PpoHyper()
    mean = np.zeros((3, 2))
    logstd = np.zeros(2)
    actions = np.zeros((3, 2))
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    adv = np.array([0.5, -1.0, 2.0])
    out = ppo._loss_and_output_grads(mean, np.zeros(3), logstd, actions, lp,
                                     adv, np.zeros(3), hyper)
    assert out[0] == pytest.approx(-adv.mean(), abs=1e-9)
    assert out[3] == 0.0


def test_surrogate_zero_advantage_zero_policy_loss(rng):
    hyper = PpoHyper()
    mean = rng.normal(size=(4, 2)) * 0.3
    logstd = np.full(2, -0.5)
    actions = mean + rng.normal(size=(4, 2)) * 0.1
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    out = ppo._loss_and_output_grads(mean, rng.normal(size=4), logstd,
                                     actions, lp, np.zeros(4),
                                     rng.normal(size=4), hyper)
    assert out[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(out[5], 0.0, atol=1e-12)


def test_value_loss_and_gradient():
    hyper = PpoHyper(value_coef=1.0)
    mean = np.zeros((2, 2))
    logstd = np.zeros(2)
    actions = np.zeros((2, 2))
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    value = np.array([1.0, -2.0])
    returns = np.array([0.0, 0.0])
    out = ppo._loss_and_output_grads(mean, value, logstd, actions, lp,
                                     np.zeros(2), returns, hyper)
    assert out[1] == pytest.approx(2.5, abs=1e-12)
    np.testing.assert_allclose(out[6], [1.0, -2.0], atol=1e-12)


def _total_loss(mean, value, logstd, actions, old, adv, ret, hyper):
    out = ppo._loss_and_output_grads(mean, value, logstd, actions, old, adv,
                                     ret, hyper)
    return out[0] + hyper.value_coef * out[1] - hyper.entropy_coef * out[2]


def test_output_grads_match_finite_differences(rng):
    """d_mean, d_value, d_logstd against central differences of the total
    loss, with ratios kept clear of the clip kinks."""
    hyper = PpoHyper()
    b = 6
    mean = rng.normal(size=(b, 2)) * 0.4
    logstd = np.array([-0.4, 0.1])
    actions = mean + rng.normal(size=(b, 2)) * 0.3
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    offsets = rng.uniform(-0.08, 0.08, size=b)    # ratio in ~[0.92, 1.08]
    old = lp - offsets
    adv = rng.normal(size=b)
    ret = rng.normal(size=b)
    value = rng.normal(size=b)
    got = ppo._loss_and_output_grads(mean, value, logstd, actions, old, adv,
                                     ret, hyper)
    d_mean, d_value, d_logstd = got[5], got[6], got[7]
    h = 1e-6
    for i in range(b):
        for j in range(2):
            mp, mm = mean.copy(), mean.copy()
            mp[i, j] += h
            mm[i, j] -= h
            fd = (_total_loss(mp, value, logstd, actions, old, adv, ret, hyper)
                  - _total_loss(mm, value, logstd, actions, old, adv, ret,
                                hyper)) / (2 * h)
            assert d_mean[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)
        vp, vm = value.copy(), value.copy()
        vp[i] += h
        vm[i] -= h
        fd = (_total_loss(mean, vp, logstd, actions, old, adv, ret, hyper)
              - _total_loss(mean, vm, logstd, actions, old, adv, ret,
                            hyper)) / (2 * h)
        assert d_value[i] == pytest.approx(fd, rel=1e-4, abs=1e-7)
    for j in range(2):
        sp, sm = logstd.copy(), logstd.copy()
        sp[j] += h
        sm[j] -= h
        fd = (_total_loss(mean, value, sp, actions, old, adv, ret, hyper)
              - _total_loss(mean, value, sm, actions, old, adv, ret,
                            hyper)) / (2 * h)
        assert d_logstd[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_nonfinite_loss_raises():
    hyper = PpoHyper()
    mean = np.zeros((1, 2))
    logstd = np.zeros(2)
    actions = np.zeros((1, 2))
    lp, _ = nn.gaussian_logprob_entropy(mean, logstd, actions)
    with pytest.raises(nn.NonFiniteLossError):
        ppo._loss_and_output_grads(mean, np.array([np.inf]), logstd, actions,
                                   lp, np.zeros(1), np.zeros(1), hyper)


# ---------------------------------------------------------------------------
# Rollout collection.

def test_collect_rollout_shapes_and_logprobs():
    env = small_env()
    hyper = small_hyper()
    w = init_weights(SMALL_SHAPE, np.random.default_rng(1))
    buf, hidden, finished = collect_rollout(env, w, hyper,
                                            np.random.default_rng(2))
    assert buf.obs.shape == (8, 4, 28)
    assert buf.actions.shape == (8, 4, 2)
    assert buf.logprobs.shape == (8, 4)
    assert buf.bootstrap_value.shape == (4,)
    # Stored logprobs must agree with a from-scratch recomputation.
    for t in range(buf.horizon):
        mean, _, _, _ = nn.forward(w, buf.obs[t])
        lp, _ = nn.gaussian_logprob_entropy(mean, w["logstd"], buf.actions[t])
        np.testing.assert_allclose(buf.logprobs[t], lp, atol=1e-9)


def test_collect_rollout_deterministic():
    hyper = small_hyper()
    w = init_weights(SMALL_SHAPE, np.random.default_rng(1))
    bufs = []
    for _ in range(2):
        env = small_env(seed=7)
        buf, _, _ = collect_rollout(env, w, hyper, np.random.default_rng(3))
        bufs.append(buf)
    np.testing.assert_array_equal(bufs[0].obs, bufs[1].obs)
    np.testing.assert_array_equal(bufs[0].actions, bufs[1].actions)
    np.testing.assert_array_equal(bufs[0].rewards, bufs[1].rewards)


def test_collect_rollout_recurrent_snapshots():
    env = small_env()
    hyper = small_hyper()
    w = init_weights(SMALL_REC, np.random.default_rng(1))
    buf, hidden, _ = collect_rollout(env, w, hyper, np.random.default_rng(2))
    assert buf.hidden_h0.shape == (2, 4, 8)
    np.testing.assert_array_equal(buf.hidden_h0[0], 0.0)
    # The second window entry state is the carried state, generally nonzero.
    assert np.any(buf.hidden_h0[1] != 0.0)
    assert hidden.h.shape == (4, 8)


def test_collect_rollout_rejects_bad_unroll():
    env = small_env()
    w = init_weights(SMALL_REC, np.random.default_rng(1))
    with pytest.raises(ValueError):
        collect_rollout(env, w, small_hyper(horizon=10, unroll_len=4),
                        np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Updates and the training loop.

@pytest.mark.parametrize("shape", [SMALL_SHAPE, SMALL_REC],
                         ids=["mlp", "recurrent"])
def test_ppo_update_changes_weights(shape):
    env = small_env()
    hyper = small_hyper()
    w = init_weights(shape, np.random.default_rng(1))
    buf, _, _ = collect_rollout(env, w, hyper, np.random.default_rng(2))
    w2, opt2, stats = ppo_update(w, nn.init_opt_state(w, hyper.learning_rate),
                                 buf, hyper, np.random.default_rng(3))
    assert any(not np.array_equal(w2[name], w[name]) for name in w.names())
    assert math.isfinite(stats.policy_loss)
    assert math.isfinite(stats.grad_norm)
    assert 0.0 <= stats.clip_fraction <= 1.0
    assert opt2.step == hyper.epochs * math.ceil(
        buf.horizon * buf.num_envs / hyper.minibatch_size) or opt2.step > 0


def test_ppo_update_deterministic():
    env = small_env(seed=5)
    hyper = small_hyper()
    w = init_weights(SMALL_SHAPE, np.random.default_rng(1))
    buf, _, _ = collect_rollout(env, w, hyper, np.random.default_rng(2))
    results = []
    for _ in range(2):
        w2, _, _ = ppo_update(w, nn.init_opt_state(w, hyper.learning_rate),
                              buf, hyper, np.random.default_rng(3))
        results.append(w2)
    for name in results[0].names():
        np.testing.assert_array_equal(results[0][name], results[1][name])


def test_train_smoke_and_artifacts(tmp_path):
    env = small_env(seed=11)
    result = train(env, SMALL_SHAPE, small_hyper(), seed=0,
                   out_dir=tmp_path, checkpoint_every=2)
    assert result.iterations_run == 3
    assert len(result.stats) == 3
    assert [r.iteration for r in result.stats] == [0, 1, 2]
    assert (tmp_path / "stats.csv").exists()
    assert (tmp_path / "checkpoint_000002.npz").exists()
    assert (tmp_path / "checkpoint_final.npz").exists()
    assert (tmp_path / "policy.json").exists()
    assert (tmp_path / "policy.bin").exists()
    with open(tmp_path / "stats.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(STATS_COLUMNS)
    assert len(rows) == 4
    assert rows[1][0] == "0"


def test_train_rerun_identical_stats(tmp_path):
    outs = []
    for sub in ("a", "b"):
        env = small_env(seed=11)
        train(env, SMALL_SHAPE, small_hyper(), seed=4, out_dir=tmp_path / sub)
        outs.append((tmp_path / sub / "stats.csv").read_bytes())
    assert outs[0] == outs[1]


def test_train_callback_early_stop():
    env = small_env()
    result = train(env, SMALL_SHAPE, small_hyper(iterations=50), seed=0,
                   callback=lambda it, row, w: it >= 1)
    assert result.stopped_early
    assert result.iterations_run == 2


def test_train_curriculum_switch_recorded():
    env = small_env(seed=3)
    sched = CurriculumSchedule((
        CurriculumStage(0, preset_world_spec("empty")),
        CurriculumStage(2, preset_world_spec("static_default")),
    ))
    result = train(env, SMALL_SHAPE, small_hyper(iterations=4), seed=0,
                   schedule=sched)
    assert [r.stage for r in result.stats] == [0, 0, 1, 1]
    assert env.spec is sched.stages[1].effective_spec() \
        or env.spec == sched.stages[1].effective_spec()


def test_train_recurrent_smoke():
    env = small_env()
    result = train(env, SMALL_REC, small_hyper(iterations=2), seed=0)
    assert result.iterations_run == 2
    assert all(math.isfinite(r.policy_loss) for r in result.stats)


# ---------------------------------------------------------------------------
# Checkpoints and stats files.

def test_checkpoint_roundtrip(tmp_path):
    w = init_weights(SMALL_REC, np.random.default_rng(8))
    path = tmp_path / "ck.npz"
    save_checkpoint(w, path, iteration=42)
    loaded, it = load_checkpoint(path)
    assert it == 42
    assert loaded.shape == w.shape
    for name in w.names():
        np.testing.assert_array_equal(loaded[name], w[name])


def test_stats_row_formatting():
    row = ppo.TrainStats(iteration=3, env_steps=4096, episodes=2,
                         mean_return=1.5, mean_length=10.0, success_rate=0.5,
                         policy_loss=-0.25, value_loss=2.0, entropy=2.8,
                         clip_fraction=0.1, grad_norm=0.75, stage=0).as_row()
    assert row[0] == "3"
    assert row[1] == "4096"
    assert row[3] == repr(1.5)
    assert len(row) == len(STATS_COLUMNS)
