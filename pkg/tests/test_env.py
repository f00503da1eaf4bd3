import itertools

import numpy as np
import pytest

from cmdpbench.env_suite import (CONSTRAINTS, ROBOTS, TASKS, CmdpEnv, ObjectSet, PlacementError,
                                 RobotState, WorldConfig, action_dim, build_observation,
                                 chase_velocity, compute_cost, compute_reward, defense_velocity,
                                 dump_config, env_step, ghost_velocity, load_config,
                                 observation_dim, parse_overrides, reset, robot_step,
                                 update_movable_objects)
from cmdpbench.env_suite.world import Snapshot, _lidar

ORIGIN = np.zeros(3)


def p(x, y, z=0.0):
    return np.array([x, y, z], dtype=np.float64)


# piecewise velocity fields: every branch, exact closed form

class TestChase:
    def test_branch_outside_r0_restores(self):
        x = p(6, 0)
        xd = chase_velocity(x, p(0, 3), ORIGIN, 0.5, 0.3, 5.0, 1.0)
        np.testing.assert_array_equal(xd, p(-3, 0))

    def test_branch_flee_robot(self):
        x, r = p(1, 0.5), p(1.25, 0.25)
        xd = chase_velocity(x, r, ORIGIN, 1.0, 0.3, 2.5, 1.0)
        np.testing.assert_allclose(xd, -0.3 * (r - x), rtol=0, atol=1e-12)

    def test_branch_rest(self):
        xd = chase_velocity(p(1, 0), p(-2, 0), ORIGIN, 1.0, 0.3, 2.5, 1.0)
        np.testing.assert_array_equal(xd, np.zeros(3))

    def test_boundaries_are_inclusive_inside(self):
        # exactly at r0 is "inside"; exactly at r1 still flees
        x = p(2.5, 0)
        np.testing.assert_array_equal(chase_velocity(x, p(-2, 0), ORIGIN, 1.0, 0.3, 2.5, 1.0), np.zeros(3))
        xd = chase_velocity(p(0, 0), p(1, 0), ORIGIN, 1.0, 0.3, 2.5, 1.0)
        np.testing.assert_allclose(xd, p(-0.3, 0), atol=1e-12)


class TestDefense:
    def test_branch_outside_r0(self):
        x = p(0, -3)
        np.testing.assert_allclose(defense_velocity(x, p(0, 0), ORIGIN, 1.0, 0.3, 0.2, 2.5, 1.0),
                                   1.0 * (ORIGIN - x), atol=1e-12)

    def test_branch_flee_robot(self):
        x, r = p(1.5, 0), p(1.0, 0.5)
        np.testing.assert_allclose(defense_velocity(x, r, ORIGIN, 1.0, 0.3, 0.2, 2.5, 1.0),
                                   -0.3 * (r - x), atol=1e-12)

    def test_branch_drift_to_origin(self):
        x, r = p(1.5, 1.0), p(-2, -2)
        np.testing.assert_allclose(defense_velocity(x, r, ORIGIN, 1.0, 0.3, 0.2, 2.5, 1.0),
                                   0.2 * (ORIGIN - x), atol=1e-12)


class TestGhost:
    def test_branch_outside_r0(self):
        x = p(-2, -2)
        np.testing.assert_allclose(ghost_velocity(x, p(0, 0), ORIGIN, 0.7, 0.3, 2.5, 1.0),
                                   0.7 * (ORIGIN - x), atol=1e-12)

    def test_branch_pursue(self):
        xd = ghost_velocity(p(1, 0), p(3, 0), ORIGIN, 1.0, 0.4, 5.0, 1.0)
        np.testing.assert_allclose(xd, p(0.8, 0), atol=1e-12)

    def test_branch_rest(self):
        xd = ghost_velocity(p(1, 0), p(1.5, 0), ORIGIN, 1.0, 0.4, 5.0, 1.0)
        np.testing.assert_array_equal(xd, np.zeros(3))


def test_velocity_fields_random_branch_property(nprng):
    """Random points: each field equals the closed form chosen by the branch test."""
    v0, v1, v2, r0, r1 = 0.9, 0.35, 0.25, 2.5, 1.0
    for _ in range(300):
        x, r = nprng.uniform(-4, 4, 3), nprng.uniform(-4, 4, 3)
        dor, dro = ORIGIN - x, r - x
        out_r0 = np.linalg.norm(dor) > r0
        near = np.linalg.norm(dro) <= r1
        c = v0 * dor if out_r0 else (-v1 * dro if near else np.zeros(3))
        d = v0 * dor if out_r0 else (-v1 * dro if near else v2 * dor)
        g = v0 * dor if out_r0 else (v1 * dro if not near else np.zeros(3))
        np.testing.assert_allclose(chase_velocity(x, r, ORIGIN, v0, v1, r0, r1), c, atol=1e-12, rtol=0)
        np.testing.assert_allclose(defense_velocity(x, r, ORIGIN, v0, v1, v2, r0, r1), d, atol=1e-12, rtol=0)
        np.testing.assert_allclose(ghost_velocity(x, r, ORIGIN, v0, v1, r0, r1), g, atol=1e-12, rtol=0)


def test_update_movable_objects_euler_step():
    cfg = WorldConfig(task_kind="Chase", constraint_kind="Ghosts", constraint_count=1)
    obj = ObjectSet(np.array([p(1, 0)]), np.zeros(3), np.array([p(3, 0), p(0.5, 0)]),
                    np.zeros(3), np.zeros(3), ORIGIN.copy(), 1.0)
    robot = RobotState("Point", p(0.4, 0.2))
    update_movable_objects(obj, robot, cfg, 0.1)
    # ghost within r1 of the robot: rests
    np.testing.assert_array_equal(obj.constraints[0], p(1, 0))
    np.testing.assert_allclose(obj.targets[0], p(3, 0) + 0.1 * 1.0 * p(-3, 0), atol=1e-12)
    np.testing.assert_allclose(obj.targets[1], p(0.5, 0) - 0.1 * 0.3 * p(-0.1, 0.2), atol=1e-12)


def test_chase_targets_stay_near_r0_disc():
    cfg = WorldConfig(task_kind="Chase")
    env = CmdpEnv(cfg, seed=3)
    env.reset()
    rng = np.random.default_rng(0)
    for _ in range(300):
        env.step(rng.uniform(-1, 1, 2))
        d = np.linalg.norm(env.state.objects.targets[:, :2], axis=1)
        assert np.all(d <= cfg.r0 + cfg.v_max * cfg.dt)


# robot kinematics

def test_robot_rest_state_unchanged():
    cfg = WorldConfig()
    s = RobotState("Point", p(0.5, -0.5), heading=0.3)
    out = robot_step(s, np.zeros(2), 0.1, cfg)
    np.testing.assert_array_equal(out.pos, s.pos)
    assert out.heading == s.heading and out.speed == 0.0


def test_point_integrates_by_hand():
    cfg = WorldConfig()
    s = RobotState("Point", p(0, 0))
    s1 = robot_step(s, np.array([0.0, 1.0]), 0.1, cfg)
    assert s1.speed == pytest.approx(0.1)
    assert s1.pos[0] == pytest.approx(0.01)
    s2 = robot_step(s1, np.zeros(2), 0.1, cfg)
    assert s2.pos[0] == pytest.approx(0.02)


def test_point_action_clipped():
    cfg = WorldConfig()
    a = robot_step(RobotState("Point", p(0, 0)), np.array([5.0, 7.0]), 0.1, cfg)
    b = robot_step(RobotState("Point", p(0, 0)), np.array([1.0, 1.0]), 0.1, cfg)
    np.testing.assert_array_equal(a.pos, b.pos)


def test_drone_one_euler_step():
    cfg = WorldConfig(robot_kind="Drone", drone_drag=0.0)
    s = RobotState("Drone", p(0, 0, 1.5))
    out = robot_step(s, np.array([0.0, 0.0, 1.0]), 0.1, cfg)
    assert out.vel[2] == pytest.approx(cfg.acc_max * 0.1)


def test_position_clamped_to_arena():
    cfg = WorldConfig()
    s = RobotState("Point", p(2.99, 0), speed=1.5)
    for _ in range(10):
        s = robot_step(s, np.array([0.0, 1.0]), 0.1, cfg)
    assert s.pos[0] == cfg.arena_half_extent


def test_wrong_action_length():
    with pytest.raises(ValueError):
        robot_step(RobotState("Point", p(0, 0)), np.zeros(3), 0.1, WorldConfig())


# layouts

def test_reset_deterministic_and_separated():
    cfg = WorldConfig()
    s1, o1 = reset(cfg, 11)
    s2, o2 = reset(cfg, 11)
    np.testing.assert_array_equal(s1.objects.constraints, s2.objects.constraints)
    np.testing.assert_array_equal(o1, o2)
    c = s1.objects.constraints
    assert c.shape == (8, 3)
    for i, j in itertools.combinations(range(8), 2):
        assert np.linalg.norm(c[i] - c[j]) >= 0.6
    assert np.all(np.abs(c[:, :2]) <= cfg.arena_half_extent)
    np.testing.assert_array_equal(s1.robot.pos, ORIGIN)
    assert s1.robot.speed == 0.0


def test_reset_zero_constraints():
    s, _ = reset(WorldConfig(constraint_count=0), 0)
    assert len(s.objects.constraints) == 0


def test_reset_overcrowded_raises():
    with pytest.raises(PlacementError):
        reset(WorldConfig(constraint_count=200, constraint_radius=0.5), 0)


def test_3d_constraint_heights():
    s, _ = reset(WorldConfig(robot_kind="Drone", constraint_kind="3DHazards"), 2)
    z = s.objects.constraints[:, 2]
    assert np.all((z >= 0.5) & (z <= 2.5))


# reward

def _snap(robot, goal=ORIGIN, targets=np.zeros((0, 3)), ball=ORIGIN):
    return Snapshot(robot, goal, ball, targets)


def test_goal_reward_progress_and_event():
    cfg = WorldConfig()
    goal = p(2, 0)
    r, ev = compute_reward(_snap(p(0, 0), goal), _snap(p(0.1, 0), goal), cfg)
    assert r == pytest.approx(0.1) and not ev["goal_reached"]
    r, ev = compute_reward(_snap(p(1.6, 0), goal), _snap(p(1.75, 0), goal), cfg)
    assert r == pytest.approx(0.15 + 1.0) and ev["goal_reached"]
    r, _ = compute_reward(_snap(p(0, 0), goal), _snap(p(0, 0), goal), cfg)
    assert r == 0.0


def test_push_reward_terms():
    cfg = WorldConfig(task_kind="Push")
    goal = p(2, 0)
    before = Snapshot(p(0, 0), goal, p(1, 0), np.zeros((0, 3)))
    after = Snapshot(p(0.2, 0), goal, p(1.1, 0), np.zeros((0, 3)))
    r, _ = compute_reward(before, after, cfg)
    assert r == pytest.approx(0.1 + 0.1)


def test_chase_reward_sum_of_progress():
    cfg = WorldConfig(task_kind="Chase")
    t = np.array([p(1, 0), p(0, 1)])
    r, _ = compute_reward(_snap(p(0, 0), targets=t), _snap(p(0.1, 0), targets=t), cfg)
    assert r == pytest.approx(0.1 + (1 - np.hypot(0.1, 1)))


def test_defense_reward_sign_and_breach():
    cfg = WorldConfig(task_kind="Defense")
    t0, t1 = np.array([p(2, 0)]), np.array([p(2.2, 0)])
    r, ev = compute_reward(_snap(p(0, 0), targets=t0), _snap(p(0, 0), targets=t1), cfg)
    assert r == pytest.approx(0.2) and ev["breaches"] == 0
    r, ev = compute_reward(_snap(p(0, 0), targets=t0), _snap(p(0, 0), targets=np.array([p(0.9, 0)])), cfg)
    assert r == pytest.approx(-1.1 - 1.0) and ev["breaches"] == 1


# cost

def _objects(constraints):
    return ObjectSet(np.array(constraints, dtype=float).reshape(-1, 3), ORIGIN.copy(),
                     np.zeros((0, 3)), ORIGIN.copy(), ORIGIN.copy(), ORIGIN.copy(), 1.0)


def test_cost_far_boundary_and_overlap():
    cfg = WorldConfig()
    r = RobotState("Point", p(0, 0))
    assert compute_cost(r, _objects([p(2, 2)]), cfg) == 0
    assert compute_cost(r, _objects([p(0.3, 0)]), cfg) == 1
    assert compute_cost(r, _objects([p(0.2, 0), p(-0.2, 0)]), cfg) == 2


def test_untrespassable_ghost_pushes_robot_out():
    cfg = WorldConfig(constraint_kind="Ghosts", trespassable=False)
    r = RobotState("Point", p(0.1, 0))
    assert compute_cost(r, _objects([p(0.2, 0)]), cfg) == 1
    np.testing.assert_allclose(r.pos, p(-0.1, 0), atol=1e-12)


def test_cost_matches_brute_force_scan():
    for kind in ("Hazards", "Ghosts"):
        cfg = WorldConfig(constraint_kind=kind)
        env = CmdpEnv(cfg, seed=5)
        env.reset()
        rng = np.random.default_rng(1)
        for _ in range(400):
            out = env.step(rng.uniform(-1, 1, 2))
            pos = env.state.robot.pos
            brute = sum(1 for c in env.state.objects.constraints
                        if np.hypot(*(c[:2] - pos[:2])) <= cfg.constraint_radius)
            assert out.cost == brute


# observations

def test_lidar_east_half_range_8_bins():
    cfg = WorldConfig(lidar_bins=8)
    out = _lidar(np.array([[1.5, 0.0, 0.0]]), cfg, 0.0)
    expect = np.zeros(8)
    expect[0] = 0.5
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_lidar_at_range_is_zero_and_empty_block():
    cfg = WorldConfig()
    assert np.all(_lidar(np.array([[3.0, 0.0, 0.0]]), cfg, 0.0) == 0)
    assert np.all(_lidar(np.zeros((0, 3)), cfg, 0.0) == 0)


def test_lidar_is_egocentric():
    cfg = WorldConfig(lidar_bins=4)
    # object due north, robot heading north -> straight ahead (bin 0)
    out = _lidar(np.array([[0.0, 1.5, 0.0]]), cfg, np.pi / 2)
    assert out[0] == pytest.approx(0.5)


def test_lidar_3d_elevation_bands():
    cfg = WorldConfig(robot_kind="Drone", lidar_bins=4)
    above = _lidar(np.array([[0.0, 0.0, 1.5]]), cfg, 0.0)
    assert above.shape == (12,)
    assert np.count_nonzero(above) == 1 and above.reshape(4, 3)[0, 2] == pytest.approx(0.5)


@pytest.mark.parametrize("robot,task,kind", [
    (r, t, k) for r in ROBOTS for t in TASKS for k in CONSTRAINTS
    if not (r == "Point" and k.startswith("3D"))])
def test_observation_dim_constant(robot, task, kind):
    cfg = WorldConfig(robot_kind=robot, task_kind=task, constraint_kind=kind)
    env = CmdpEnv(cfg, seed=1)
    dim = observation_dim(cfg)
    rng = np.random.default_rng(0)
    for _ in range(2):
        assert env.reset().shape == (dim,)
        for _ in range(20):
            out = env.step(rng.uniform(-1, 1, action_dim(robot)))
            assert out.observation.shape == (dim,)
            assert np.isfinite(out.reward) and out.cost >= 0
            if out.done:
                break


# stepping

def test_first_step_zero_action():
    cfg = WorldConfig()
    state, _ = reset(cfg, 4)
    out = env_step(state, np.zeros(2))
    assert abs(out.reward) <= cfg.k_g and out.cost == 0


def test_episode_ends_at_step_limit():
    cfg = WorldConfig()
    state, _ = reset(cfg, 0)
    for i in range(1000):
        out = env_step(state, np.zeros(2))
        assert out.done == (i == 999)
    with pytest.raises(RuntimeError):
        env_step(state, np.zeros(2))


def test_replay_is_bit_identical():
    cfg = WorldConfig(task_kind="Push", constraint_kind="Ghosts")
    acts = np.random.default_rng(8).uniform(-1, 1, (200, 2))

    def run():
        env = CmdpEnv(cfg, seed=9)
        obs = [np.concatenate([env.reset(), [0.0, 0.0]])]
        for a in acts:
            o = env.step(a)
            obs.append(np.concatenate([o.observation, [o.reward, o.cost]]))
        return np.array(obs)
    np.testing.assert_array_equal(run(), run())


def test_goal_resampled_on_reach():
    cfg = WorldConfig(constraint_count=0)
    state, _ = reset(cfg, 0)
    state.objects.goal = p(0.25, 0)
    out = env_step(state, np.zeros(2))
    assert out.info["goal_reached"] and out.reward == pytest.approx(1.0)
    assert np.linalg.norm(state.objects.goal - state.robot.pos) >= cfg.goal_radius + cfg.robot_radius


# config files

def test_config_round_trip(tmp_path):
    cfg = WorldConfig(task_kind="Push", v1=0.45, trespassable=False)
    path = tmp_path / "w.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_parse_overrides_comments_and_errors():
    assert parse_overrides("a = 1 # note\n\n# whole line\nb=x") == {"a": "1", "b": "x"}
    with pytest.raises(ValueError):
        parse_overrides("novalue")


def test_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(r0=1.0, r1=2.0)
    with pytest.raises(ValueError):
        WorldConfig(constraint_count=-1)
    with pytest.raises(ValueError):
        WorldConfig(robot_kind="Car")


def test_trace_export(tmp_path):
    env = CmdpEnv(WorldConfig(), seed=0, record_trace=True)
    env.reset()
    for _ in range(3):
        env.step(np.array([0.0, 1.0]))
    env.write_trace(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,x,y,z,heading,reward,cost" and len(lines) == 4
