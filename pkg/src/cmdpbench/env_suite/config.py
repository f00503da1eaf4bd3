"""World configuration and its flat ``key=value`` text format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

ROBOTS = ("Point", "Drone")
TASKS = ("Goal", "Push", "Chase", "Defense")
CONSTRAINTS = ("Hazards", "Ghosts", "3DHazards", "3DGhosts")


@dataclass(frozen=True)
class WorldConfig:
    robot_kind: str = "Point"
    task_kind: str = "Goal"
    constraint_kind: str = "Hazards"
    constraint_count: int = 8
    constraint_radius: float = 0.3
    trespassable: bool = True
    # movable-object dynamics (speeds in 1/s gains, radii in m)
    v0: float = 1.0
    v1: float = 0.3
    v2: float = 0.3
    r0: float = 2.5
    r1: float = 1.0
    arena_half_extent: float = 3.0
    height: float = 3.0  # vertical extent of the 3D arena, z in [0, height]
    lidar_bins: int = 16
    lidar_range: float = 3.0
    dt: float = 0.1
    max_episode_steps: int = 1000
    seed: int = 0
    goal_radius: float = 0.3
    protected_radius: float = 1.0
    num_targets: int = 3
    target_radius: float = 0.3
    ball_radius: float = 0.3
    ball_drag: float = 2.0
    robot_radius: float = 0.1
    k_d: float = 1.0
    k_g: float = 1.0
    omega_max: float = 2.0
    acc_max: float = 1.0
    v_max: float = 1.5
    drone_drag: float = 0.5

    def __post_init__(self):
        if self.robot_kind not in ROBOTS:
            raise ValueError(f"unknown robot {self.robot_kind!r}")
        if self.task_kind not in TASKS:
            raise ValueError(f"unknown task {self.task_kind!r}")
        if self.constraint_kind not in CONSTRAINTS:
            raise ValueError(f"unknown constraint kind {self.constraint_kind!r}")
        if self.constraint_count < 0 or self.num_targets < 0:
            raise ValueError("object counts must be non-negative")
        for name in ("constraint_radius", "goal_radius", "protected_radius", "target_radius",
                     "ball_radius", "r0", "r1", "lidar_range", "arena_half_extent", "height"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.r1 < self.r0:
            raise ValueError("r1 must be smaller than r0")
        if min(self.v0, self.v1, self.v2) < 0:
            raise ValueError("velocity constants must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.lidar_bins < 1 or self.max_episode_steps < 1:
            raise ValueError("lidar_bins and max_episode_steps must be >= 1")

    @property
    def is_3d(self) -> bool:
        return self.robot_kind == "Drone"

    @property
    def constraints_3d(self) -> bool:
        return self.constraint_kind.startswith("3D")

    @property
    def movable_constraints(self) -> bool:
        return self.constraint_kind.endswith("Ghosts")

    @property
    def origin(self):
        # dynamics origin: arena centre (floor level for planar worlds)
        return (0.0, 0.0, self.height / 2.0 if self.is_3d else 0.0)

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)


def _coerce(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_overrides(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(values: dict, base: WorldConfig | None = None) -> WorldConfig:
    base = base or WorldConfig()
    types = {f.name: f.type for f in fields(WorldConfig)}
    changes = {}
    for key, raw in values.items():
        if key not in types:
            raise KeyError(f"unknown world config key {key!r}")
        changes[key] = _coerce(types[key], raw) if isinstance(raw, str) else raw
    return base.replace(**changes)


def load_config(path, base: WorldConfig | None = None) -> WorldConfig:
    return config_from_mapping(parse_overrides(Path(path).read_text()), base)


def dump_config(config: WorldConfig) -> str:
    return "".join(f"{f.name}={getattr(config, f.name)}\n" for f in fields(WorldConfig))
