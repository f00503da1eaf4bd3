"""On-policy data collection and advantage estimation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.signal import lfilter

from .numerics import RngStream
from .policy_net import GaussianPolicy, OldPolicyStats, ValueNet, gaussian_log_prob

GAMMA = 0.99
LAMBDA = 0.97  # GAE lambda; 0.95 is the common alternative
LAMBDA_TEXT = 0.95  # value quoted in the experiment prose; pass lam=LAMBDA_TEXT to use it

# shield(obs, reference_action, previous_step_cost) -> executed action
Shield = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    log_probs: np.ndarray
    means: np.ndarray
    values: np.ndarray
    cost_values: np.ndarray
    terminal: bool  # episode finished (time limit or termination event)
    truncated: bool  # cut short by the end of the batch
    last_value: float = 0.0  # bootstrap V(s_T) when truncated
    last_cost_value: float = 0.0
    reference_actions: Optional[np.ndarray] = None  # pre-shield actions

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("obs", "actions", "costs", "log_probs", "means", "values", "cost_values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trajectory field {name} has length {len(getattr(self, name))}, expected {n}")
        if not np.all(np.isfinite(self.log_probs)):
            raise ValueError("non-finite log-probabilities in trajectory")

    def __len__(self):
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def episode_cost(self) -> float:
        return float(np.sum(self.costs))

    @property
    def previous_costs(self) -> np.ndarray:
        """Cost of the transition that led into each state (0 at the start)."""
        return np.concatenate([[0.0], self.costs[:-1]])


@dataclass
class Batch:
    trajectories: list[Trajectory]
    epoch: int = 0
    log_std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def size(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def _cat(self, name):
        return np.concatenate([getattr(t, name) for t in self.trajectories])

    @property
    def obs(self):
        return self._cat("obs")

    @property
    def actions(self):
        return self._cat("actions")

    @property
    def log_probs(self):
        return self._cat("log_probs")

    @property
    def rewards(self):
        return self._cat("rewards")

    @property
    def costs(self):
        return self._cat("costs")

    @property
    def previous_costs(self):
        return np.concatenate([t.previous_costs for t in self.trajectories])

    def old_stats(self) -> OldPolicyStats:
        means = self._cat("means")
        return OldPolicyStats(means, np.broadcast_to(np.exp(self.log_std), means.shape).copy())

    @property
    def completed(self) -> list[Trajectory]:
        return [t for t in self.trajectories if t.terminal]


def collect_rollouts(env, policy: GaussianPolicy, critics: tuple[ValueNet, ValueNet], steps: int,
                     rng: RngStream, shield: Shield | None = None, epoch: int = 0) -> Batch:
    """Run ``policy`` in ``env`` for exactly ``steps`` transitions.

    The environment is reset at the start and after every finished episode.
    A trajectory still running when the budget is exhausted is flagged
    ``truncated`` and bootstrapped with the critics. With a ``shield`` the
    executed action replaces the sampled one and its log-probability is
    recomputed under ``policy``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    value_net, cost_net = critics
    log_std = policy.log_std
    std = np.exp(log_std)
    trajectories = []
    remaining = steps
    while remaining > 0:
        obs = env.reset()
        buf = {k: [] for k in ("obs", "act", "ref", "rew", "cost", "logp", "mean")}
        prev_cost = 0.0
        done = False
        while remaining > 0 and not done:
            mean = policy.mean_net(obs[None])[0]
            action = mean + std * rng.normal(policy.act_dim)
            ref = action
            if shield is not None:
                action = np.asarray(shield(obs, action, prev_cost), dtype=np.float64)
            out = env.step(action)
            buf["obs"].append(obs)
            buf["act"].append(action)
            buf["ref"].append(ref)
            buf["mean"].append(mean)
            buf["logp"].append(gaussian_log_prob(mean, log_std, action))
            buf["rew"].append(out.reward)
            buf["cost"].append(out.cost)
            prev_cost = out.cost
            obs = out.observation
            done = out.done
            remaining -= 1
        o = np.array(buf["obs"])
        truncated = not done
        last_v = last_c = 0.0
        if truncated:
            last_v = float(value_net.predict(obs[None])[0])
            last_c = float(cost_net.predict(obs[None])[0])
        trajectories.append(Trajectory(
            obs=o, actions=np.array(buf["act"]), rewards=np.array(buf["rew"]),
            costs=np.array(buf["cost"]), log_probs=np.array(buf["logp"]),
            means=np.array(buf["mean"]), values=value_net.predict(o),
            cost_values=cost_net.predict(o), terminal=done, truncated=truncated,
            last_value=last_v, last_cost_value=last_c,
            reference_actions=np.array(buf["ref"]) if shield is not None else None))
    return Batch(trajectories, epoch, log_std.copy())


def discount_cumsum(x, discount: float) -> np.ndarray:
    """``y[t] = sum_k discount**k * x[t+k]``."""
    x = np.asarray(x, dtype=np.float64)
    return lfilter([1.0], [1.0, -discount], x[::-1])[::-1]


def discounted_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    rewards = np.asarray(rewards, dtype=np.float64)
    return float(np.sum(rewards * gamma ** np.arange(len(rewards))))


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates. ``values`` has one more entry than
    ``rewards``: the bootstrap (0 after a terminal state)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(rewards) + 1:
        raise ValueError("values must have len(rewards) + 1 entries")
    deltas = rewards + gamma * values[1:] - values[:-1]
    return discount_cumsum(deltas, gamma * lam)


def normalize(advantages) -> np.ndarray:
    a = np.asarray(advantages, dtype=np.float64)
    if len(a) < 2:
        raise ValueError("need at least two advantages to normalize")
    return (a - a.mean()) / (a.std() + 1e-8)


@dataclass
class AdvantageEstimates:
    """Reward and cost quantities are kept in separate fields on purpose."""
    reward_advantages: np.ndarray
    cost_advantages: np.ndarray
    reward_returns: np.ndarray
    cost_returns: np.ndarray
    cost_value: float  # J_C estimate (discounted)
    episode_cost: float = 0.0  # mean undiscounted cost per episode


def estimate_constraint_value(batch: Batch, gamma: float = GAMMA) -> float:
    """Mean discounted episode cost. Truncated trajectories count with their
    cost-critic bootstrap."""
    totals = []
    for t in batch.trajectories:
        if not t.terminal and not t.truncated:
            continue
        disc = gamma ** np.arange(len(t))
        total = float(np.sum(disc * t.costs))
        if t.truncated:
            if t.last_cost_value is None or not np.isfinite(t.last_cost_value):
                continue
            total += gamma ** len(t) * t.last_cost_value
        totals.append(total)
    if not totals:
        raise ValueError("no completed episode and no bootstrap value in batch")
    return float(np.mean(totals))


def mean_episode_cost(batch: Batch) -> float:
    """Mean undiscounted cost of completed episodes; with none completed, the
    mean cost per trajectory."""
    done = batch.completed or batch.trajectories
    return float(np.mean([t.episode_cost for t in done]))


def compute_advantages(batch: Batch, gamma: float = GAMMA, lam: float = LAMBDA,
                       normalize_rewards: bool = True) -> AdvantageEstimates:
    """GAE for reward (reward critic) and cost (cost critic). Reward advantages
    are normalized; cost advantages keep their scale."""
    adv, cadv, ret, cret = [], [], [], []
    for t in batch.trajectories:
        boot_v = t.last_value if t.truncated else 0.0
        boot_c = t.last_cost_value if t.truncated else 0.0
        v = np.append(t.values, boot_v)
        vc = np.append(t.cost_values, boot_c)
        adv.append(gae(t.rewards, v, gamma, lam))
        cadv.append(gae(t.costs, vc, gamma, lam))
        ret.append(discount_cumsum(np.append(t.rewards, boot_v), gamma)[:-1])
        cret.append(discount_cumsum(np.append(t.costs, boot_c), gamma)[:-1])
    a = np.concatenate(adv)
    if normalize_rewards and len(a) >= 2:
        a = normalize(a)
    return AdvantageEstimates(a, np.concatenate(cadv), np.concatenate(ret), np.concatenate(cret),
                              estimate_constraint_value(batch, gamma), mean_episode_cost(batch))
