"""Layouts, rewards, costs, observations and the step function."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numerics import RngStream
from .config import WorldConfig
from .dynamics import RobotState, action_dim, clamp_to_arena, robot_step, update_movable_objects

MAX_PLACEMENT_ATTEMPTS = 10_000
N_ELEVATION_BANDS = 3


class PlacementError(RuntimeError):
    """The arena is too crowded to place every object with the required separation."""


@dataclass
class ObjectSet:
    constraints: np.ndarray  # (K, 3) hazard / ghost centres
    goal: np.ndarray  # (3,), unused by Chase/Defense
    targets: np.ndarray  # (M, 3) Chase/Defense targets
    ball: np.ndarray  # (3,) Push ball centre
    ball_vel: np.ndarray  # (3,)
    protected_center: np.ndarray  # (3,) Defense
    protected_radius: float

    def copy(self) -> "ObjectSet":
        return ObjectSet(self.constraints.copy(), self.goal.copy(), self.targets.copy(),
                         self.ball.copy(), self.ball_vel.copy(), self.protected_center.copy(),
                         self.protected_radius)


@dataclass
class EnvState:
    config: WorldConfig
    robot: RobotState
    objects: ObjectSet
    rng: RngStream
    steps: int = 0
    goals_reached: int = 0
    total_cost: float = 0.0
    breaches: int = 0
    done: bool = False


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    cost: float
    done: bool
    info: dict = field(default_factory=dict)


def _planar_distance(a, b, planar: bool):
    d = np.asarray(a) - np.asarray(b)
    if planar:
        return np.sqrt(np.sum(d[..., :2] ** 2, axis=-1))
    return np.sqrt(np.sum(d * d, axis=-1))


def _sample_point(rng: RngStream, config: WorldConfig, radius: float, three_d: bool,
                  max_r: float | None = None) -> np.ndarray:
    h = config.arena_half_extent - radius
    if max_r is not None:
        h = min(h, max_r)
    x, y = rng.uniform(-h, h, size=2)
    z = rng.uniform(0.5, config.height - 0.5) if three_d else 0.0
    return np.array([x, y, z])


class _Placer:
    """Sequential rejection sampler keeping ``2 * (r_i + r_j)`` separation."""

    def __init__(self, rng: RngStream, config: WorldConfig):
        self.rng, self.config = rng, config
        self.placed: list[tuple[np.ndarray, float, bool]] = []

    def keep_out(self, pos, radius: float, planar: bool = True):
        self.placed.append((np.asarray(pos, dtype=np.float64), radius, planar))

    def ok(self, pos, radius: float, planar: bool) -> bool:
        for other, r, other_planar in self.placed:
            if _planar_distance(pos, other, planar or other_planar) < 2.0 * (radius + r):
                return False
        return True

    def place(self, radius: float, three_d: bool, min_r: float = 0.0, max_r: float | None = None):
        cfg = self.config
        origin = np.array(cfg.origin)
        planar = not three_d
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            pos = _sample_point(self.rng, cfg, radius, three_d, max_r)
            if max_r is not None or min_r > 0:
                r = _planar_distance(pos, origin, planar)
                if r < min_r or (max_r is not None and r > max_r):
                    continue
            if self.ok(pos, radius, planar):
                self.placed.append((pos, radius, planar))
                return pos
        raise PlacementError(f"could not place object of radius {radius} "
                             f"after {MAX_PLACEMENT_ATTEMPTS} attempts")


def _spawn_robot(config: WorldConfig) -> RobotState:
    pos = np.array(config.origin, dtype=np.float64)
    return RobotState(config.robot_kind, pos)


def reset(config: WorldConfig, seed: int | None = None):
    """Fresh episode: robot at the arena centre at rest, objects placed by
    rejection sampling. Deterministic in ``seed`` (defaults to ``config.seed``)."""
    rng = RngStream(config.seed if seed is None else seed)
    robot = _spawn_robot(config)
    placer = _Placer(rng, config)
    placer.keep_out(robot.pos, config.robot_radius, planar=not config.is_3d)

    protected = np.array(config.origin)
    if config.task_kind == "Defense":
        placer.keep_out(protected, config.protected_radius / 2.0, planar=not config.is_3d)

    constraints = np.array([placer.place(config.constraint_radius, config.constraints_3d)
                            for _ in range(config.constraint_count)]).reshape(-1, 3)

    goal = np.zeros(3)
    ball = np.zeros(3)
    targets = np.zeros((0, 3))
    if config.task_kind == "Goal":
        goal = placer.place(config.goal_radius, config.is_3d)
    elif config.task_kind == "Push":
        ball = placer.place(config.ball_radius, False)
        goal = placer.place(config.goal_radius, False)
    elif config.task_kind == "Chase":
        targets = np.array([placer.place(config.target_radius, config.is_3d, max_r=config.r0)
                            for _ in range(config.num_targets)]).reshape(-1, 3)
    else:
        targets = np.array([placer.place(config.target_radius, config.is_3d,
                                         min_r=config.protected_radius + 2 * config.target_radius,
                                         max_r=config.r0)
                            for _ in range(config.num_targets)]).reshape(-1, 3)
    objects = ObjectSet(constraints, goal, targets, ball, np.zeros(3), protected,
                        config.protected_radius)
    state = EnvState(config, robot, objects, rng)
    return state, build_observation(state.robot, state.objects, config)


def _resample_goal(state: EnvState) -> None:
    cfg = state.config
    placer = _Placer(state.rng, cfg)
    placer.keep_out(state.robot.pos, cfg.robot_radius, planar=not cfg.is_3d)
    for c in state.objects.constraints:
        placer.keep_out(c, cfg.constraint_radius, planar=not cfg.constraints_3d)
    three_d = cfg.is_3d
    if cfg.task_kind == "Push":
        placer.keep_out(state.objects.ball, cfg.ball_radius)
        three_d = False
    state.objects.goal = placer.place(cfg.goal_radius, three_d)


def _resolve_ball(state: EnvState, dt: float) -> None:
    """Kinematic ball: robot overlap sets the ball velocity along the contact
    normal to ``depth / dt``; the velocity then decays with linear drag."""
    cfg = state.config
    obj = state.objects
    d = obj.ball - state.robot.pos
    d[2] = 0.0
    dist = float(np.linalg.norm(d))
    reach = cfg.ball_radius + cfg.robot_radius
    if dist < reach:
        normal = d / dist if dist > 0 else np.array([np.cos(state.robot.heading),
                                                     np.sin(state.robot.heading), 0.0])
        obj.ball_vel = (reach - dist) / dt * normal
    obj.ball = obj.ball + obj.ball_vel * dt
    h = cfg.arena_half_extent - cfg.ball_radius
    obj.ball[:2] = np.clip(obj.ball[:2], -h, h)
    obj.ball[2] = 0.0
    obj.ball_vel = obj.ball_vel * max(0.0, 1.0 - cfg.ball_drag * dt)


@dataclass(frozen=True)
class Snapshot:
    robot: np.ndarray
    goal: np.ndarray
    ball: np.ndarray
    targets: np.ndarray


def snapshot(state: EnvState) -> Snapshot:
    o = state.objects
    return Snapshot(state.robot.pos.copy(), o.goal.copy(), o.ball.copy(), o.targets.copy())


def compute_reward(before: Snapshot, after: Snapshot, config: WorldConfig,
                   protected_center=None):
    """Dense progress terms plus sparse events. Returns ``(reward, events)``.

    ``events`` carries ``goal_reached`` (Goal/Push) and ``breaches`` (Defense).
    The caller handles goal resampling and termination.
    """
    kd, kg = config.k_d, config.k_g
    planar = not config.is_3d
    events = {"goal_reached": False, "breaches": 0}
    task = config.task_kind
    if task == "Goal":
        d0 = _planar_distance(before.robot, before.goal, planar)
        d1 = _planar_distance(after.robot, after.goal, planar)
        reward = kd * (d0 - d1)
        if d1 <= config.goal_radius:
            reward += kg
            events["goal_reached"] = True
    elif task == "Push":
        rb0 = _planar_distance(before.robot, before.ball, True)
        rb1 = _planar_distance(after.robot, after.ball, True)
        bg0 = _planar_distance(before.ball, before.goal, True)
        bg1 = _planar_distance(after.ball, after.goal, True)
        reward = kd * (rb0 - rb1) + kd * (bg0 - bg1)
        if bg1 <= config.goal_radius:
            reward += kg
            events["goal_reached"] = True
    elif task == "Chase":
        d0 = _planar_distance(before.robot, before.targets, planar)
        d1 = _planar_distance(after.robot, after.targets, planar)
        reward = kd * float(np.sum(d0 - d1))
    else:
        center = np.array(config.origin) if protected_center is None else protected_center
        p0 = _planar_distance(before.targets, center, planar)
        p1 = _planar_distance(after.targets, center, planar)
        reward = kd * float(np.sum(p1 - p0))
        breaches = int(np.sum(p1 <= config.protected_radius))
        reward -= kg * breaches
        events["breaches"] = breaches
    return float(reward), events


def violations(robot_pos, constraints, config: WorldConfig) -> np.ndarray:
    """Boolean violation indicator per constraint object (boundary counts)."""
    if len(constraints) == 0:
        return np.zeros(0, dtype=bool)
    d = _planar_distance(constraints, robot_pos, not config.constraints_3d)
    return d <= config.constraint_radius


def compute_cost(robot: RobotState, objects: ObjectSet, config: WorldConfig) -> float:
    """Number of violated constraint objects. Untrespassable ghosts also push
    the robot back onto their surface (no momentum transfer)."""
    hit = violations(robot.pos, objects.constraints, config)
    cost = float(np.count_nonzero(hit))
    if cost and config.movable_constraints and not config.trespassable:
        planar = not config.constraints_3d
        for idx in np.flatnonzero(hit):
            c = objects.constraints[idx]
            n = robot.pos - c
            if planar:
                n[2] = 0.0
            dist = float(np.linalg.norm(n))
            if dist == 0.0:
                n, dist = np.array([1.0, 0.0, 0.0]), 1.0
            target = c + n / dist * config.constraint_radius
            if planar:
                target[2] = robot.pos[2]
            robot.pos = clamp_to_arena(target, config)
    return cost


def _lidar(rel: np.ndarray, config: WorldConfig, heading: float) -> np.ndarray:
    """Pseudo-lidar block for objects at relative positions ``rel`` (K, 3)."""
    bins = config.lidar_bins
    if config.is_3d:
        out = np.zeros(bins * N_ELEVATION_BANDS)
    else:
        out = np.zeros(bins)
    if len(rel) == 0:
        return out
    horiz = np.hypot(rel[:, 0], rel[:, 1])
    dist = np.sqrt(horiz ** 2 + rel[:, 2] ** 2)
    value = np.maximum(0.0, 1.0 - dist / config.lidar_range)
    az = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - heading, 2.0 * np.pi)
    az_bin = np.minimum((az / (2.0 * np.pi / bins)).astype(int), bins - 1)
    if config.is_3d:
        el = np.arctan2(rel[:, 2], horiz)
        band = np.clip(((el + np.pi / 2) / (np.pi / N_ELEVATION_BANDS)).astype(int),
                       0, N_ELEVATION_BANDS - 1)
        idx = az_bin * N_ELEVATION_BANDS + band
    else:
        idx = az_bin
    np.maximum.at(out, idx, value)
    return out


def _relative(points, robot: RobotState, planar: bool) -> np.ndarray:
    rel = np.atleast_2d(points) - robot.pos
    if planar:
        rel = rel.copy()
        rel[:, 2] = 0.0
    return rel


def _compass(point, robot: RobotState, config: WorldConfig, planar: bool) -> np.ndarray:
    rel = _relative(point, robot, planar)[0]
    if config.is_3d:
        n = np.linalg.norm(rel)
        return rel / n if n > 0 else np.zeros(3)
    c, s = np.cos(robot.heading), np.sin(robot.heading)
    v = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1]])
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros(2)


def lidar_categories(config: WorldConfig) -> tuple[str, ...]:
    return {"Goal": ("goal", "constraints"), "Push": ("ball", "goal", "constraints"),
            "Chase": ("targets", "constraints"), "Defense": ("targets", "constraints")}[config.task_kind]


def build_observation(robot: RobotState, objects: ObjectSet, config: WorldConfig) -> np.ndarray:
    """Proprioception, compasses and one pseudo-lidar block per category.

    Point (egocentric): ``[speed, cos heading, sin heading]``, 2D compasses,
    ``lidar_bins`` azimuth sectors per block. Drone: world-frame velocity, 3D
    compasses, ``lidar_bins x 3`` elevation bands per block.
    """
    planar_task = not config.is_3d
    heading = 0.0 if config.is_3d else robot.heading
    if config.is_3d:
        parts = [robot.vel.copy()]
    else:
        parts = [np.array([robot.speed, np.cos(robot.heading), np.sin(robot.heading)])]
    task = config.task_kind
    if task == "Goal":
        parts.append(_compass(objects.goal, robot, config, planar_task))
    elif task == "Push":
        parts.append(_compass(objects.ball, robot, config, True))
        parts.append(_compass(objects.goal, robot, config, True))
    else:
        for t in objects.targets:
            parts.append(_compass(t, robot, config, planar_task))
        if task == "Defense":
            parts.append(_compass(objects.protected_center, robot, config, planar_task))
    for cat in lidar_categories(config):
        if cat == "goal":
            rel = _relative(objects.goal, robot, planar_task or task == "Push")
        elif cat == "ball":
            rel = _relative(objects.ball, robot, True)
        elif cat == "targets":
            rel = _relative(objects.targets, robot, planar_task) if len(objects.targets) else np.zeros((0, 3))
        else:
            rel = (_relative(objects.constraints, robot, not config.constraints_3d)
                   if len(objects.constraints) else np.zeros((0, 3)))
        parts.append(_lidar(rel, config, heading))
    return np.concatenate(parts)


def observation_dim(config: WorldConfig) -> int:
    compass = 3 if config.is_3d else 2
    n_compass = {"Goal": 1, "Push": 2, "Chase": config.num_targets,
                 "Defense": config.num_targets + 1}[config.task_kind]
    block = config.lidar_bins * (N_ELEVATION_BANDS if config.is_3d else 1)
    return 3 + compass * n_compass + block * len(lidar_categories(config))


def env_step(state: EnvState, action, config: WorldConfig | None = None) -> StepOutcome:
    """Advance ``state`` in place by one control step.

    Order: clip action, robot kinematics, movable objects, ball contact,
    reward, cost (with ghost blocking), observation, termination.
    """
    cfg = state.config if config is None else config
    if state.done:
        raise RuntimeError("episode is over; call reset")
    dt = cfg.dt
    before = snapshot(state)
    state.robot = robot_step(state.robot, action, dt, cfg)
    update_movable_objects(state.objects, state.robot, cfg, dt)
    if cfg.task_kind == "Push":
        _resolve_ball(state, dt)
    after = snapshot(state)
    reward, events = compute_reward(before, after, cfg, state.objects.protected_center)
    if events["goal_reached"]:
        state.goals_reached += 1
        _resample_goal(state)
    cost = compute_cost(state.robot, state.objects, cfg)
    obs = build_observation(state.robot, state.objects, cfg)
    state.steps += 1
    state.total_cost += cost
    state.breaches += events["breaches"]
    done = state.steps >= cfg.max_episode_steps or events["breaches"] > 0
    state.done = done
    info = {"goals_reached": state.goals_reached, "violations": int(cost),
            "breaches": events["breaches"], "goal_reached": events["goal_reached"],
            "time_limit": state.steps >= cfg.max_episode_steps}
    return StepOutcome(obs, reward, cost, done, info)


class CmdpEnv:
    """Stateful wrapper around :func:`reset` / :func:`env_step`.

    Successive resets draw layout seeds from a stream seeded by ``seed``.
    Set ``record_trace=True`` to keep per-step rows for :meth:`write_trace`.
    """

    def __init__(self, config: WorldConfig, seed: int | None = None, record_trace: bool = False):
        self.config = config
        self._seeds = RngStream(config.seed if seed is None else seed)
        self.state: EnvState | None = None
        self.record_trace = record_trace
        self.trace: list[dict] = []
        self.obs_dim = observation_dim(config)
        self.act_dim = action_dim(config.robot_kind)

    def reset(self) -> np.ndarray:
        seed = int(self._seeds.integers(0, 2 ** 63 - 1))
        self.state, obs = reset(self.config, seed)
        if obs.size != self.obs_dim:
            raise AssertionError("observation dimension changed between resets")
        return obs

    def step(self, action) -> StepOutcome:
        out = env_step(self.state, action)
        if self.record_trace:
            p = self.state.robot.pos
            self.trace.append({"step": self.state.steps, "x": p[0], "y": p[1], "z": p[2],
                               "heading": self.state.robot.heading,
                               "reward": out.reward, "cost": out.cost})
        return out

    def write_trace(self, path) -> None:
        write_trace_csv(path, self.trace)


TRACE_COLUMNS = ("step", "x", "y", "z", "heading", "reward", "cost")


def write_trace_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in TRACE_COLUMNS[1:]])
