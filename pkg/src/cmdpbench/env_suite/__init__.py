"""Constrained-MDP environment family: Point/Drone robots, Goal/Push/Chase/Defense
tasks, hazard and ghost constraints."""
from .config import (CONSTRAINTS, ROBOTS, TASKS, WorldConfig, config_from_mapping, dump_config,
                     load_config, parse_overrides)
from .dynamics import (RobotState, action_dim, chase_velocity, defense_velocity, ghost_velocity,
                       robot_step, update_movable_objects)
from .world import (CmdpEnv, EnvState, ObjectSet, PlacementError, Snapshot, StepOutcome,
                    build_observation, compute_cost, compute_reward, env_step, observation_dim,
                    reset, snapshot, violations, write_trace_csv)

__all__ = [
    "CONSTRAINTS", "ROBOTS", "TASKS", "WorldConfig", "config_from_mapping", "dump_config",
    "load_config", "parse_overrides", "RobotState", "action_dim", "chase_velocity",
    "defense_velocity", "ghost_velocity", "robot_step", "update_movable_objects", "CmdpEnv",
    "EnvState", "ObjectSet", "PlacementError", "Snapshot", "StepOutcome", "build_observation",
    "compute_cost", "compute_reward", "env_step", "observation_dim", "reset", "snapshot",
    "violations", "write_trace_csv",
]
