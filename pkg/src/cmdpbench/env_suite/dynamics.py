"""Robot kinematics and the piecewise velocity fields of movable objects."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import WorldConfig


@dataclass
class RobotState:
    """Pose and velocity. Positions are always 3-vectors; the Point robot
    keeps ``z = 0``. ``heading``/``speed`` are used by Point, ``vel`` by Drone."""
    kind: str
    pos: np.ndarray
    heading: float = 0.0
    speed: float = 0.0
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "RobotState":
        return RobotState(self.kind, self.pos.copy(), self.heading, self.speed, self.vel.copy())

    @property
    def velocity(self) -> np.ndarray:
        if self.kind == "Point":
            return self.speed * np.array([np.cos(self.heading), np.sin(self.heading), 0.0])
        return self.vel


def action_dim(robot_kind: str) -> int:
    return 2 if robot_kind == "Point" else 3


def clamp_to_arena(pos: np.ndarray, config: WorldConfig) -> np.ndarray:
    h = config.arena_half_extent
    out = pos.copy()
    out[:2] = np.clip(out[:2], -h, h)
    out[2] = np.clip(out[2], 0.0, config.height) if config.is_3d else 0.0
    return out


def robot_step(state: RobotState, action, dt: float, config: WorldConfig) -> RobotState:
    """One Euler step. Action components are clipped to [-1, 1].

    Point (unicycle): ``a = (turn rate, thrust)``.
    Drone (damped double integrator): ``a`` = acceleration vector.
    """
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (action_dim(state.kind),):
        raise ValueError(f"{state.kind} expects an action of length {action_dim(state.kind)}")
    new = state.copy()
    if state.kind == "Point":
        new.heading = state.heading + a[0] * config.omega_max * dt
        new.speed = float(np.clip(state.speed + a[1] * config.acc_max * dt, 0.0, config.v_max))
        new.pos = state.pos + new.speed * dt * np.array([np.cos(new.heading), np.sin(new.heading), 0.0])
    else:
        new.vel = (1.0 - config.drone_drag * dt) * state.vel + a * config.acc_max * dt
        new.pos = state.pos + new.vel * dt
    new.pos = clamp_to_arena(new.pos, config)
    return new


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def chase_velocity(x_object, x_robot, x_origin, v0, v1, r0, r1):
    """Targets of the Chase task: restoring outside ``r0``, flee the robot
    when it is within ``r1``, otherwise rest."""
    d_origin = np.asarray(x_origin) - x_object
    d_robot = np.asarray(x_robot) - x_object
    if _norm(d_origin) > r0:
        return v0 * d_origin
    if _norm(d_robot) <= r1:
        return -v1 * d_robot
    return np.zeros_like(d_origin)


def defense_velocity(x_object, x_robot, x_origin, v0, v1, v2, r0, r1):
    """Targets of the Defense task: like Chase but drift toward the origin
    (the protected area) instead of resting."""
    d_origin = np.asarray(x_origin) - x_object
    d_robot = np.asarray(x_robot) - x_object
    if _norm(d_origin) > r0:
        return v0 * d_origin
    if _norm(d_robot) <= r1:
        return -v1 * d_robot
    return v2 * d_origin


def ghost_velocity(x_object, x_robot, x_origin, v0, v1, r0, r1):
    """Ghosts: restoring outside ``r0``, pursue the robot until within ``r1``."""
    d_origin = np.asarray(x_origin) - x_object
    d_robot = np.asarray(x_robot) - x_object
    if _norm(d_origin) > r0:
        return v0 * d_origin
    if _norm(d_robot) > r1:
        return v1 * d_robot
    return np.zeros_like(d_origin)


def _flatten(v, planar: bool):
    if planar:
        v = v.copy()
        v[..., 2] = 0.0
    return v


def update_movable_objects(objects, robot: RobotState, config: WorldConfig, dt: float):
    """Advance ghosts and Chase/Defense targets one Euler step in place.

    Planar objects see only the horizontal components of both distance
    vectors. Returns ``objects`` for chaining.
    """
    origin = np.array(config.origin)
    if config.movable_constraints and len(objects.constraints):
        planar = not config.constraints_3d
        for i, x in enumerate(objects.constraints):
            xo = _flatten(origin, planar) if planar else origin
            xr = _flatten(robot.pos, planar)
            xd = ghost_velocity(_flatten(x, planar), xr, xo, config.v0, config.v1, config.r0, config.r1)
            objects.constraints[i] = x + _flatten(xd, planar) * dt
    if config.task_kind in ("Chase", "Defense") and len(objects.targets):
        planar = not config.is_3d
        for i, x in enumerate(objects.targets):
            if config.task_kind == "Chase":
                xd = chase_velocity(x, robot.pos, origin, config.v0, config.v1, config.r0, config.r1)
            else:
                xd = defense_velocity(x, robot.pos, origin, config.v0, config.v1, config.v2,
                                      config.r0, config.r1)
            objects.targets[i] = x + _flatten(xd, planar) * dt
    return objects
