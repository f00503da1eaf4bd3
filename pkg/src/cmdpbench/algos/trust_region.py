"""Shared trust-region machinery: CG on the Fisher, step scaling and the
backtracking line search."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from ..numerics import NonFiniteError, conjugate_gradient
from ..policy_net import (GaussianPolicy, OldPolicyStats, fisher_vector_product,
                          gaussian_log_prob, surrogate_and_gradient)
from ..runtime import Batch


@dataclass(frozen=True)
class TrustRegionConfig:
    target_kl: float = 0.02
    cg_iters: int = 10
    damping: float = 0.1
    backtrack_steps: int = 100
    backtrack_coeff: float = 0.8

    def __post_init__(self):
        if self.target_kl <= 0:
            raise ValueError("target_kl must be positive")
        if not 0 < self.backtrack_coeff < 1:
            raise ValueError("backtrack_coeff must lie in (0, 1)")
        if self.backtrack_steps < 1 or self.cg_iters < 1:
            raise ValueError("backtrack_steps and cg_iters must be >= 1")


@dataclass
class UpdateReport:
    kl_after: float = 0.0
    surrogate_before: float = 0.0
    surrogate_after: float = 0.0
    constraint_estimate: float = 0.0
    accepted_exponent: Optional[int] = None
    rejected: bool = False
    multiplier: float = 0.0
    case: str = "trpo"
    step: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    cost_surrogate_before: float = 0.0
    cost_surrogate_after: float = 0.0


class BatchData(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    old: OldPolicyStats

    @classmethod
    def from_batch(cls, batch: Batch) -> "BatchData":
        return cls(batch.obs, batch.actions, batch.log_probs, batch.old_stats())


def evaluate(policy: GaussianPolicy, data: BatchData, adv, adv_c=None):
    """Reward surrogate, cost surrogate and mean KL from one forward pass."""
    mean, _ = policy.mean_net.forward(data.obs)
    logp = gaussian_log_prob(mean, policy.log_std, data.actions)
    ratio = np.exp(logp - data.old_log_probs)
    var = np.exp(2.0 * policy.log_std)
    old = data.old
    kl = (policy.log_std - np.log(old.std) + (old.std ** 2 + (mean - old.mean) ** 2) / (2 * var)
          - 0.5).sum(axis=1).mean()
    surr = float(np.mean(ratio * adv))
    surr_c = float(np.mean(ratio * adv_c)) if adv_c is not None else 0.0
    if not np.isfinite(kl) or not np.isfinite(surr):
        raise NonFiniteError("non-finite surrogate or KL during line search")
    return surr, surr_c, float(kl)


class FisherSolver:
    """``H`` (damped Fisher at the rollout policy) and CG solves against it."""

    def __init__(self, policy: GaussianPolicy, data: BatchData, cfg: TrustRegionConfig):
        self.policy, self.data, self.cfg = policy, data, cfg

    def hvp(self, v):
        return fisher_vector_product(self.policy, self.data.old, self.data.obs, v, self.cfg.damping)

    def solve(self, b):
        res = conjugate_gradient(self.hvp, b, self.cfg.cg_iters)
        return res.x


def gradient(policy: GaussianPolicy, data: BatchData, adv) -> np.ndarray:
    return surrogate_and_gradient(policy, data.old_log_probs, data.obs, data.actions, adv)[1]


def natural_step(solver: FisherSolver, g) -> np.ndarray:
    """Largest step along ``H^-1 g`` whose quadratic KL model equals ``delta``."""
    x = solver.solve(g)
    xhx = float(x @ solver.hvp(x))
    if not np.isfinite(xhx):
        raise NonFiniteError("non-finite curvature along the search direction")
    if xhx <= 0.0:
        return np.zeros_like(x)
    return np.sqrt(2.0 * solver.cfg.target_kl / xhx) * x


def line_search(policy: GaussianPolicy, step, data: BatchData, cfg: TrustRegionConfig,
                accept: Callable[[float, float, float], bool], adv, adv_c=None):
    """Try ``theta + coeff**j * step`` for ``j = 0 .. backtrack_steps-1``.

    ``accept(surrogate_gain, cost_surrogate_change, kl)`` decides each
    candidate. Returns ``(policy, report)``; on rejection the original policy
    is returned unchanged.
    """
    surr0, surr_c0, _ = evaluate(policy, data, adv, adv_c)
    report = UpdateReport(surrogate_before=surr0, surrogate_after=surr0,
                          cost_surrogate_before=surr_c0, cost_surrogate_after=surr_c0,
                          step=np.zeros_like(step))
    flat0 = policy.flat
    if np.any(step):
        for j in range(cfg.backtrack_steps):
            frac = cfg.backtrack_coeff ** j
            cand = policy.with_flat(flat0 + frac * step)
            surr, surr_c, kl = evaluate(cand, data, adv, adv_c)
            if accept(surr - surr0, surr_c - surr_c0, kl):
                report.kl_after = kl
                report.surrogate_after = surr
                report.cost_surrogate_after = surr_c
                report.accepted_exponent = j
                report.step = frac * step
                return cand, report
    report.rejected = True
    return policy, report


def trpo_step(policy: GaussianPolicy, batch: Batch | BatchData, adv,
              cfg: TrustRegionConfig = TrustRegionConfig()):
    """Natural-gradient step on ``mean(ratio * adv)`` with KL backtracking.

    A candidate is accepted when the surrogate strictly improves and the mean
    KL to the rollout policy is at most ``cfg.target_kl``.
    """
    data = batch if isinstance(batch, BatchData) else BatchData.from_batch(batch)
    adv = np.asarray(adv, dtype=np.float64)
    g = gradient(policy, data, adv)
    solver = FisherSolver(policy, data, cfg)
    step = natural_step(solver, g) if np.any(g) else np.zeros_like(g)
    return line_search(policy, step, data, cfg,
                       lambda gain, _c, kl: gain > 0 and kl <= cfg.target_kl, adv)
