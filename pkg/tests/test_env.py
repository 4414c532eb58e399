import math

import numpy as np
import pytest

from lidarnav.env import (CAUSES, EnvState, NoiseConfig, Observation,
                          RewardConfig, VectorEnv, apply_obs_noise,
                          goal_dist_max, observation_vector, observe,
                          reset_state, reward_and_done)
from lidarnav.robot import Action, Pose
from lidarnav.world import World, WorldSpec, build_world, preset_world_spec

D_MAX_8M = 8.0 * math.sqrt(2.0)      # arena diagonal for half extent 4


def _state(pose, goal, step_count=1, prev_goal_dist=None,
           world=None) -> EnvState:
    if world is None:
        world = build_world(WorldSpec())
    if prev_goal_dist is None:
        prev_goal_dist = math.dist((pose.x, pose.y), goal)
    return EnvState(pose=pose, prev_action=Action(0.0, 0.0), goal=goal,
                    step_count=step_count, prev_goal_dist=prev_goal_dist,
                    world=world)


# ---------------------------------------------------------------------------
# Observation encoding.

def test_observation_layout(lidar, jetbot):
    ranges = np.full(120, 3.0)
    vec = observation_vector(ranges, Pose(0, 0, 0), (2.0, 0.0),
                             Action(0.0, 0.0), lidar, jetbot, D_MAX_8M)
    assert vec.shape == (124,)
    np.testing.assert_allclose(vec[:120], 1.0)
    assert vec[120] == pytest.approx(2.0 / D_MAX_8M, abs=1e-12)
    assert vec[121] == pytest.approx(0.0, abs=1e-12)
    # previous action (0, 0) sits below the v floor, mapping to -1.5
    assert vec[122] == pytest.approx(-1.5, abs=1e-12)
    assert vec[123] == pytest.approx(0.0, abs=1e-12)


def test_observation_bearing_behind(lidar, jetbot):
    ranges = np.full(120, 1.0)
    vec = observation_vector(ranges, Pose(0, 0, 0), (-2.0, 0.0),
                             Action(0.3, 0.0), lidar, jetbot, D_MAX_8M)
    assert abs(vec[121]) == pytest.approx(1.0, abs=1e-12)


def test_observation_bearing_wraps(lidar, jetbot):
    # Goal at bearing +170 deg from a yaw of -170 deg: raw difference is
    # 340 deg, wrapped it is -20 deg.
    yaw = math.radians(-170.0)
    angle = math.radians(170.0)
    goal = (2.0 * math.cos(angle), 2.0 * math.sin(angle))
    vec = observation_vector(np.full(120, 1.0), Pose(0, 0, yaw), goal,
                             Action(0.3, 0.0), lidar, jetbot, D_MAX_8M)
    assert vec[121] == pytest.approx(-20.0 / 180.0, abs=1e-9)


def test_observation_prev_action_normalization(lidar, jetbot):
    vec = observation_vector(np.full(120, 1.0), Pose(0, 0, 0), (1.0, 0.0),
                             Action(0.5, -0.5), lidar, jetbot, D_MAX_8M)
    assert vec[122] == pytest.approx(1.0, abs=1e-12)
    assert vec[123] == pytest.approx(-1.0, abs=1e-12)


def test_observation_lidar_normalization(lidar, jetbot):
    ranges = np.full(120, lidar.min_range)
    vec = observation_vector(ranges, Pose(0, 0, 0), (1.0, 0.0),
                             Action(0.3, 0.0), lidar, jetbot, D_MAX_8M)
    np.testing.assert_allclose(vec[:120], 0.0)


def test_observe_from_state(lidar, jetbot, empty_spec):
    st = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0))
    obs = observe(st, lidar, jetbot)
    assert isinstance(obs, Observation)
    np.testing.assert_allclose(obs.lidar_norm, 1.0)
    assert obs.goal_dist_norm == pytest.approx(2.0 / D_MAX_8M)
    assert obs.goal_angle_norm == pytest.approx(0.0)
    assert obs.prev_v_norm == pytest.approx(-1.5)


def test_goal_dist_max():
    assert goal_dist_max(WorldSpec()) == pytest.approx(D_MAX_8M, abs=1e-12)
    assert goal_dist_max(WorldSpec(arena_half_extent=2.0)) == pytest.approx(
        4.0 * math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Reward branches (hand-evaluated cases, 1e-6).

def test_reward_distance_term_only(reward_cfg):
    prev = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=2.0)
    cur = _state(Pose(0.1, 0.0, 0.0), (2.0, 0.0), step_count=1)
    r = reward_and_done(prev, cur, scan_min=1.0, cfg=reward_cfg)
    assert r.total == pytest.approx(0.1, abs=1e-6)
    assert r.r_collision == 0.0 and r.terminal_bonus == 0.0
    assert r.cause == "none" and not r.done


def test_reward_proximity_penalty(reward_cfg):
    prev = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=2.0)
    cur = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), step_count=1)
    r = reward_and_done(prev, cur, scan_min=0.3, cfg=reward_cfg)
    assert r.r_collision == pytest.approx(-math.exp(-0.3), abs=1e-6)
    assert r.r_collision == pytest.approx(-0.7408, abs=1e-4)
    assert r.cause == "none"           # 0.3 >= min_dist: not a collision
    # at exactly warn_dist the penalty is off
    r2 = reward_and_done(prev, cur, scan_min=0.5, cfg=reward_cfg)
    assert r2.r_collision == 0.0
    r3 = reward_and_done(prev, cur, scan_min=0.499, cfg=reward_cfg)
    assert r3.r_collision == pytest.approx(-math.exp(-0.499), abs=1e-6)


def test_reward_collision_terminal(reward_cfg):
    prev = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=2.0)
    cur = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), step_count=1)
    r = reward_and_done(prev, cur, scan_min=0.2, cfg=reward_cfg)
    assert r.cause == "collision" and r.done
    assert r.terminal_bonus == pytest.approx(-30.0, abs=1e-6)
    assert r.total == pytest.approx(-30.0 - math.exp(-0.2), abs=1e-6)


def test_reward_goal_terminal_with_time_bonus(reward_cfg):
    prev = _state(Pose(1.7, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=0.31)
    cur = _state(Pose(1.8, 0.0, 0.0), (2.0, 0.0), step_count=400)
    r = reward_and_done(prev, cur, scan_min=2.0, cfg=reward_cfg)
    assert r.cause == "goal"
    assert r.r_time == pytest.approx(30.0 * 800.0 / 1200.0, abs=1e-6)
    assert r.r_time == pytest.approx(20.0, abs=1e-6)
    assert r.terminal_bonus == pytest.approx(30.0, abs=1e-6)
    assert r.total == pytest.approx(0.11 + 20.0 + 30.0, abs=1e-6)


def test_reward_goal_beats_collision(reward_cfg):
    prev = _state(Pose(1.7, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=0.3)
    cur = _state(Pose(1.8, 0.0, 0.0), (2.0, 0.0), step_count=10)
    r = reward_and_done(prev, cur, scan_min=0.1, cfg=reward_cfg)
    assert r.cause == "goal"
    assert r.terminal_bonus == pytest.approx(30.0)


def test_reward_collision_beats_timeout(reward_cfg):
    prev = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=2.0)
    cur = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), step_count=1200)
    r = reward_and_done(prev, cur, scan_min=0.1, cfg=reward_cfg)
    assert r.cause == "collision"
    r2 = reward_and_done(prev, cur, scan_min=1.0, cfg=reward_cfg)
    assert r2.cause == "timeout"
    assert r2.terminal_bonus == pytest.approx(-30.0)


def test_reward_boundaries(reward_cfg):
    prev = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), prev_goal_dist=2.0)
    cur = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0), step_count=1)
    # exactly min_dist is not a collision (strict <)
    assert reward_and_done(prev, cur, 0.25, reward_cfg).cause == "none"
    # exactly goal_radius is not a goal (strict <)
    at_r = _state(Pose(1.7, 0.0, 0.0), (2.0, 0.0), step_count=1)
    assert reward_and_done(prev, at_r, 1.0, reward_cfg).cause == "none"
    near = _state(Pose(1.71, 0.0, 0.0), (2.0, 0.0), step_count=1)
    assert reward_and_done(prev, near, 1.0, reward_cfg).cause == "goal"


# ---------------------------------------------------------------------------
# Reset sampling.

def test_reset_state_postconditions(empty_spec, lidar, jetbot, reward_cfg):
    from lidarnav.world import min_clearance
    for seed in range(5):
        st, obs = reset_state(empty_spec, lidar, jetbot, reward_cfg,
                              np.random.default_rng(seed))
        assert min_clearance(st.world, (st.pose.x, st.pose.y)) >= 0.5
        assert math.dist((st.pose.x, st.pose.y), st.goal) >= 2.0
        assert st.step_count == 0
        assert st.prev_action == Action(0.0, 0.0)
        assert obs.vector.shape == (124,)


def test_reset_state_deterministic(static_spec, lidar, jetbot, reward_cfg):
    s1, _ = reset_state(static_spec, lidar, jetbot, reward_cfg,
                        np.random.default_rng(9))
    s2, _ = reset_state(static_spec, lidar, jetbot, reward_cfg,
                        np.random.default_rng(9))
    assert s1.pose == s2.pose and s1.goal == s2.goal


def test_default_task_allows_table_like_distances(static_spec, lidar, jetbot,
                                                  reward_cfg):
    dists = []
    rng = np.random.default_rng(1)
    for _ in range(60):
        st, _ = reset_state(static_spec, lidar, jetbot, reward_cfg, rng)
        dists.append(math.dist((st.pose.x, st.pose.y), st.goal))
    dists = np.asarray(dists)
    assert dists.min() >= 2.0
    assert dists.max() >= 4.7          # 4.7 m tasks are achievable


def test_goal_respects_goal_region(crossing_spec, lidar, jetbot, reward_cfg):
    rng = np.random.default_rng(0)
    region = crossing_spec.goal_region
    spawn_region = crossing_spec.spawn_region
    for _ in range(10):
        st, _ = reset_state(crossing_spec, lidar, jetbot, reward_cfg, rng)
        assert abs(st.goal[0] - region.center[0]) <= region.half_extents[0]
        assert abs(st.goal[1] - region.center[1]) <= region.half_extents[1]
        assert abs(st.pose.x - spawn_region.center[0]) <= spawn_region.half_extents[0]


# ---------------------------------------------------------------------------
# Observation noise.

def test_noise_disabled_is_identity(lidar, jetbot):
    st = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0))
    obs = observe(st, lidar, jetbot)
    out = apply_obs_noise(obs, NoiseConfig(), np.random.default_rng(0))
    assert out is obs


def test_noise_keeps_normalized_range(lidar, jetbot):
    st = _state(Pose(0.0, 0.0, 0.0), (2.0, 0.0))
    obs = observe(st, lidar, jetbot)
    rng = np.random.default_rng(3)
    for _ in range(10):
        out = apply_obs_noise(obs, NoiseConfig(lidar_sigma=0.5), rng)
        assert np.all(out.vector[:120] >= 0.0)
        assert np.all(out.vector[:120] <= 1.0)
        # non-lidar components untouched
        np.testing.assert_array_equal(out.vector[120:], obs.vector[120:])


def test_noise_mean_unbiased(lidar, jetbot):
    """Mean of noisy readings approaches the true value when far from the
    clamp boundaries (3 standard errors over 1e5 draws)."""
    spec = WorldSpec(static_obstacles=())
    world = build_world(spec)
    st = _state(Pose(2.0, 0.0, 0.0), (0.0, 0.0), world=world)
    obs = observe(st, lidar, jetbot)
    sigma = 0.01
    rng = np.random.default_rng(7)
    n = 100_000
    k = lidar.beam_count
    span = lidar.max_range - lidar.min_range
    raw_true = obs.vector[0] * span + lidar.min_range
    draws = raw_true + rng.normal(0.0, sigma, size=n)
    draws = np.clip(draws, lidar.min_range, lidar.max_range)
    se = sigma / math.sqrt(n)
    assert abs(draws.mean() - raw_true) < 3 * se


# ---------------------------------------------------------------------------
# Vectorized env.

def test_vector_env_shapes(empty_spec, lidar, jetbot, reward_cfg):
    env = VectorEnv(empty_spec, lidar, jetbot, reward_cfg, num_envs=4, seed=0)
    obs = env.observations
    assert obs.shape == (4, 124)
    nxt, rew, done, info = env.step(np.zeros((4, 2)))
    assert nxt.shape == (4, 124) and rew.shape == (4,) and done.shape == (4,)
    for key in ("r_distance", "r_collision", "r_time", "terminal_bonus",
                "cause", "scan_min", "goal_dist", "vw", "pose", "ranges"):
        assert key in info
    with pytest.raises(ValueError):
        env.step(np.zeros((3, 2)))


def test_vector_env_straight_to_goal(lidar, jetbot, reward_cfg):
    """Goal 2 m straight ahead, full throttle: reached within 45 steps."""
    env = VectorEnv(WorldSpec(), lidar, jetbot, reward_cfg, num_envs=1, seed=0)
    env._poses[0] = (0.0, 0.0, 0.0)
    env._goals[0] = (2.0, 0.0)
    env._prev_dists[0] = 2.0
    env._steps[0] = 0
    for step in range(45):
        _, _, done, info = env.step(np.asarray([[1.0, 0.0]]))
        if done[0]:
            assert CAUSES[info["cause"][0]] == "goal"
            break
    else:
        pytest.fail("goal not reached in 45 steps")
    assert step + 1 <= 45


def test_vector_env_same_seeds_identical(empty_spec, lidar, jetbot, reward_cfg):
    seeds = [123] * 8
    env = VectorEnv(empty_spec, lidar, jetbot, reward_cfg, num_envs=8,
                    env_seeds=seeds)
    obs = env.observations
    for i in range(1, 8):
        np.testing.assert_array_equal(obs[i], obs[0])
    nxt, rew, done, _ = env.step(np.tile([[0.3, 0.1]], (8, 1)))
    for i in range(1, 8):
        np.testing.assert_array_equal(nxt[i], nxt[0])
        assert rew[i] == rew[0]


def test_vector_env_run_deterministic(static_spec, lidar, jetbot, reward_cfg):
    def run():
        env = VectorEnv(static_spec, lidar, jetbot, reward_cfg, num_envs=4,
                        seed=11)
        rng = np.random.default_rng(5)
        total = np.zeros(4)
        obs_sum = 0.0
        for _ in range(40):
            acts = rng.uniform(-1, 1, size=(4, 2))
            obs, rew, done, _ = env.step(acts)
            total += rew
            obs_sum += obs.sum()
        return total, obs_sum

    t1, s1 = run()
    t2, s2 = run()
    np.testing.assert_array_equal(t1, t2)
    assert s1 == s2


def test_vector_env_auto_reset(lidar, jetbot, reward_cfg):
    env = VectorEnv(WorldSpec(), lidar, jetbot, reward_cfg, num_envs=1, seed=0)
    env._poses[0] = (0.0, 0.0, 0.0)
    env._goals[0] = (0.6, 0.0)
    env._prev_dists[0] = 0.6
    for _ in range(20):
        obs, _, done, info = env.step(np.asarray([[1.0, 0.0]]))
        if done[0]:
            break
    assert done[0]
    assert env._steps[0] == 0                     # fresh episode
    assert env.state(0).step_count == 0
    # returned observation row is the post-reset one, not the terminal one
    st = env.state(0)
    from lidarnav.env import observation_vector as ov
    expected = ov(env.last_ranges[0], st.pose, st.goal, st.prev_action,
                  lidar, jetbot, goal_dist_max(env.spec))
    np.testing.assert_allclose(obs[0], expected, atol=1e-12)


def test_vector_env_reward_matches_scalar_path(static_spec, lidar, jetbot,
                                               reward_cfg):
    """The batched reward computation agrees with the single-state helper."""
    env = VectorEnv(static_spec, lidar, jetbot, reward_cfg, num_envs=3, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(30):
        prev_states = [env.state(i) for i in range(3)]
        acts = rng.uniform(-1, 1, size=(3, 2))
        _, rew, done, info = env.step(acts)
        for i in range(3):
            if done[i]:
                continue      # state(i) already reset; skip the comparison
            cur = env.state(i)
            ref = reward_and_done(prev_states[i], cur,
                                  float(info["scan_min"][i]), reward_cfg)
            assert rew[i] == pytest.approx(ref.total, abs=1e-9)


def test_vector_env_honors_max_steps(lidar, jetbot):
    cfg = RewardConfig(max_steps=25)
    env = VectorEnv(WorldSpec(), lidar, jetbot, cfg, num_envs=1, seed=4)
    causes = []
    for _ in range(30):
        _, _, done, info = env.step(np.asarray([[-1.0, 1.0]]))
        if done[0]:
            causes.append(CAUSES[info["cause"][0]])
            break
    assert causes == ["timeout"]


def test_vector_env_set_world_spec(empty_spec, static_spec, lidar, jetbot,
                                   reward_cfg):
    env = VectorEnv(empty_spec, lidar, jetbot, reward_cfg, num_envs=2, seed=0)
    env.step(np.zeros((2, 2)))
    env.set_world_spec(static_spec)
    assert env.spec == static_spec
    assert np.all(env._steps == 0)
    obs = env.observations
    assert np.all(obs[:, :120] <= 1.0)
