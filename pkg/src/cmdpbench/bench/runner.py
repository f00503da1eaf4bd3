"""Seeded experiment loop: collect, fit critics, update, fit shields, log."""
from __future__ import annotations

import csv
import ctypes
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..algos import ConstraintConfig, TrustRegionConfig, make_agent
from ..env_suite import CmdpEnv, action_dim, observation_dim
from ..numerics import RngStream
from ..policy_net import GaussianPolicy, ValueNet, fit_value
from ..runtime import GAMMA, LAMBDA, collect_rollouts, compute_advantages
from .metrics import (STEP_LOG_COLUMNS, CostCounter, MetricsRow, append_row, compute_metrics,
                      episode_totals, write_header)
from .suite import SuiteId, parse_suite

log = logging.getLogger(__name__)

DESK_EPOCHS, DESK_STEPS = 30, 4000
FULL_EPOCHS, FULL_STEPS = 200, 30000


@dataclass
class RunConfig:
    suite: SuiteId
    algorithm: str = "trpo"
    epochs: int = DESK_EPOCHS
    steps_per_epoch: int = DESK_STEPS
    seeds: tuple = (0, 1)
    out_dir: Path = Path("runs")
    gamma: float = GAMMA
    lam: float = LAMBDA
    value_iters: int = 80
    value_lr: float = 1e-3
    trust_region: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    constraint: ConstraintConfig = field(default_factory=ConstraintConfig)
    world_overrides: dict = field(default_factory=dict)
    step_log: bool = False

    def __post_init__(self):
        if isinstance(self.suite, str):
            self.suite = parse_suite(self.suite)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.out_dir = Path(self.out_dir)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs and steps_per_epoch must be >= 1")

    @property
    def run_dir(self) -> Path:
        return self.out_dir / str(self.suite) / self.algorithm

    def csv_path(self, seed: int) -> Path:
        return self.run_dir / f"seed{seed}.csv"

    def step_log_path(self, seed: int) -> Path:
        return self.run_dir / f"steps_seed{seed}.csv"


@dataclass
class SeedResult:
    seed: int
    rows: list
    failed: bool = False
    error: str = ""


def tune_allocator() -> bool:
    """Keep large numpy temporaries on the glibc heap instead of fresh mmap
    pages; per-iteration page faults otherwise dominate critic fitting.
    No-op (returns False) off glibc."""
    try:
        libc = ctypes.CDLL("libc.so.6")
        # M_TRIM_THRESHOLD = -1, M_TOP_PAD = -2, M_MMAP_THRESHOLD = -3
        return all(libc.mallopt(opt, val) == 1 for opt, val in
                   ((-3, 256 << 20), (-1, 256 << 20), (-2, 64 << 20)))
    except (OSError, AttributeError):
        return False


def _streams(seed: int):
    root = RngStream(seed)
    return {name: root.spawn(i) for i, name in enumerate(
        ("policy", "env", "actions", "agent", "critics"))}


def zero_output_layer(net: ValueNet) -> ValueNet:
    """Critic whose last layer is zero: it predicts exactly 0 until trained.
    Used for the cost critic so a cost-free world yields A_C = J_C = 0."""
    mlp = net.net
    k = mlp.sizes[-2] * mlp.sizes[-1] + mlp.sizes[-1]
    flat = mlp.flat.copy()
    flat[-k:] = 0.0
    return ValueNet(mlp.with_flat(flat))


def run_seed(config: RunConfig, seed: int, observer=None) -> SeedResult:
    """Train one seed and write its CSV incrementally. Errors abort the seed
    with a NaN failure row.

    ``observer(epoch, batch, est, old_policy, new_policy, report)`` is called
    after every policy update if given.
    """
    tune_allocator()
    streams = _streams(seed)
    world = config.suite.world_config(seed=int(streams["env"].integers(0, 2 ** 31)),
                                      **config.world_overrides)
    path = config.csv_path(seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_header(path)
    step_log = None
    if config.step_log:
        step_log = config.step_log_path(seed).open("w", newline="")
        step_writer = csv.writer(step_log, lineterminator="\n")
        step_writer.writerow(STEP_LOG_COLUMNS)
    rows: list[MetricsRow] = []
    counter = CostCounter()
    epoch = 0
    try:
        env = CmdpEnv(world)
        obs_dim, act_dim = observation_dim(world), action_dim(world.robot_kind)
        policy = GaussianPolicy.init(obs_dim, act_dim, streams["policy"])
        value_net = ValueNet.init(obs_dim, streams["critics"])
        cost_net = zero_output_layer(ValueNet.init(obs_dim, streams["critics"]))
        agent = make_agent(config.algorithm, obs_dim, act_dim, streams["agent"],
                           config.trust_region, config.constraint, config.gamma,
                           total_epochs=config.epochs)
        episode_index = 0
        for epoch in range(1, config.epochs + 1):
            batch = collect_rollouts(env, policy, (value_net, cost_net), config.steps_per_epoch,
                                     streams["actions"], shield=agent.shield(epoch - 1),
                                     epoch=epoch)
            est = compute_advantages(batch, config.gamma, config.lam)
            obs = batch.obs
            value_net = fit_value(value_net, obs, est.reward_returns, config.value_iters, config.value_lr)
            cost_net = fit_value(cost_net, obs, est.cost_returns, config.value_iters, config.value_lr)
            new_policy, report = agent.update(policy, batch, est)
            if observer is not None:
                observer(epoch, batch, est, policy, new_policy, report)
            policy = new_policy
            agent.observe(batch, est, epoch - 1)
            done = batch.completed
            if step_log is not None:
                # unfinished trajectories get episode id -1
                for traj in batch.trajectories:
                    ep = episode_index if traj.terminal else -1
                    for t, (r, c) in enumerate(zip(traj.rewards, traj.costs)):
                        step_writer.writerow([epoch, ep, t, repr(float(r)), repr(float(c))])
                    episode_index += traj.terminal
            row = compute_metrics(epoch, [episode_totals(t.rewards) for t in done],
                                  [episode_totals(t.costs) for t in done],
                                  episode_totals(batch.costs), batch.size, counter,
                                  rows[-1] if rows else None, report.kl_after, agent.multiplier)
            rows.append(row)
            append_row(path, row)
            log.info("%s %s seed=%d epoch=%d J_r=%.3f M_c=%.3f rho_c=%.5f kl=%.4f", config.suite,
                     config.algorithm, seed, epoch, row.J_r, row.M_c, row.rho_c, row.kl)
    except Exception as exc:  # any module error aborts this seed only
        append_row(path, [str(epoch), str(counter.steps)] + ["nan"] * 5)
        log.error("%s %s seed=%d failed at epoch %d: %s", config.suite, config.algorithm,
                  seed, epoch, exc)
        return SeedResult(seed, rows, True, traceback.format_exc())
    finally:
        if step_log is not None:
            step_log.close()
    return SeedResult(seed, rows)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GUARD_BENCH_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(config: RunConfig) -> list[SeedResult]:
    """All seeds of one (suite, algorithm). Seeds run in separate processes
    when ``GUARD_BENCH_THREADS`` > 1; results come back in seed order."""
    workers = min(_threads(), len(config.seeds))
    if workers <= 1:
        return [run_seed(config, s) for s in config.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_seed, [config] * len(config.seeds), config.seeds))


def final_rows(results: list[SeedResult]) -> list[list[MetricsRow]]:
    return [r.rows for r in results]


def summarize_rows(rows: list[MetricsRow], last: int) -> float:
    return float(np.mean([r.rho_c for r in rows[-last:]]))
