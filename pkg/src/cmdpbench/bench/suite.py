"""Suite names of the form ``{Task}_{Robot}_{Count}{Constraint}``."""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..env_suite import CONSTRAINTS, ROBOTS, TASKS, WorldConfig

_PATTERN = re.compile(r"^([A-Za-z]+)_([A-Za-z0-9]+)_(\d+?)(%s)$" % "|".join(
    sorted(CONSTRAINTS, key=len, reverse=True)))


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteId:
    task: str
    robot: str
    constraint_count: int
    constraint_kind: str

    def __str__(self) -> str:
        return f"{self.task}_{self.robot}_{self.constraint_count}{self.constraint_kind}"

    def world_config(self, **overrides) -> WorldConfig:
        return WorldConfig(robot_kind=self.robot, task_kind=self.task,
                           constraint_kind=self.constraint_kind,
                           constraint_count=self.constraint_count).replace(**overrides)


def validate(suite: SuiteId) -> SuiteId:
    if suite.task not in TASKS:
        raise SuiteError(f"unknown task {suite.task!r}; expected one of {TASKS}")
    if suite.robot not in ROBOTS:
        raise SuiteError(f"unknown robot {suite.robot!r}; expected one of {ROBOTS}")
    if suite.constraint_kind not in CONSTRAINTS:
        raise SuiteError(f"unknown constraint kind {suite.constraint_kind!r}")
    if suite.constraint_count < 0:
        raise SuiteError("constraint count must be non-negative")
    if suite.constraint_kind.startswith("3D") and suite.robot == "Point":
        raise SuiteError("3D constraints need a robot that moves in 3D (Drone)")
    return suite


def parse_suite(name: str) -> SuiteId:
    m = _PATTERN.match(name.strip())
    if m is None:
        raise SuiteError(f"malformed suite name {name!r}; expected Task_Robot_<count><Kind>")
    task, robot, count, kind = m.groups()
    return validate(SuiteId(task, robot, int(count), kind))


def format_suite(suite: SuiteId) -> str:
    return str(suite)


def all_suites(count: int = 8) -> list[SuiteId]:
    out = []
    for task in TASKS:
        for robot in ROBOTS:
            for kind in CONSTRAINTS:
                try:
                    out.append(validate(SuiteId(task, robot, count, kind)))
                except SuiteError:
                    pass
    return out
