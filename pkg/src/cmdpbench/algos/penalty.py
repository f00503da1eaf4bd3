"""Penalty-style updates: scalar Lagrange multiplier, state-wise multiplier
network (FAC) and the log-barrier objective (IPO)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy_net import Adam, GaussianPolicy, ValueNet
from ..runtime import Batch
from .trust_region import BatchData, TrustRegionConfig, trpo_step


@dataclass(frozen=True)
class ConstraintConfig:
    target_cost: float = 0.0
    cost_reduction: float = 0.0
    t_ipo: float = 0.01
    lagrangian_lr: float = 0.005
    fac_lr: float = 0.0001
    ipo_fallback_weight: float = 1.0
    # signal for the scalar dual step: "episode_cost" (mean undiscounted
    # episode cost) or "discounted" (the J_C estimate)
    dual_signal: str = "episode_cost"

    def __post_init__(self):
        if self.dual_signal not in ("episode_cost", "discounted"):
            raise ValueError("dual_signal must be 'episode_cost' or 'discounted'")
        if self.t_ipo <= 0:
            raise ValueError("t_ipo must be positive")


@dataclass
class LagrangeState:
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("multiplier must be non-negative")


def dual_ascent(state: LagrangeState, cost_value: float, d: float, lr: float) -> LagrangeState:
    """Projected gradient ascent on the dual: ``max(0, lam + lr (J_C - d))``."""
    return LagrangeState(max(0.0, state.lam + lr * (cost_value - d)))


def lagrangian_step(policy: GaussianPolicy, batch: Batch | BatchData, adv, adv_c,
                    lam_state: LagrangeState, cost_value: float,
                    cfg: TrustRegionConfig = TrustRegionConfig(),
                    ccfg: ConstraintConfig = ConstraintConfig()):
    """Trust-region step on ``(A - lam A_C) / (1 + lam)`` with ``lam`` frozen,
    followed by one dual ascent step on ``lam`` driven by ``cost_value``."""
    lam = lam_state.lam
    composite = (np.asarray(adv) - lam * np.asarray(adv_c)) / (1.0 + lam)
    new, report = trpo_step(policy, batch, composite, cfg)
    new_state = dual_ascent(lam_state, cost_value, ccfg.target_cost, ccfg.lagrangian_lr)
    report.constraint_estimate = cost_value
    report.multiplier = new_state.lam
    return new, new_state, report


class MultiplierNet:
    """State-wise multiplier ``lambda_xi(s) >= 0`` (softplus head), trained by
    Adam ascent on ``mean_s[lambda_xi(s) (cost-to-go(s) - d)]``."""

    def __init__(self, net: ValueNet, lr: float = 0.0001):
        if not net.net.softplus_out:
            raise ValueError("multiplier network needs a softplus output")
        self.net = net
        self.opt = Adam(lr)

    def __call__(self, obs) -> np.ndarray:
        return self.net.predict(obs)

    def ascent_gradient(self, obs, cost_returns, d: float) -> np.ndarray:
        """Gradient of the ascent objective with respect to ``xi``."""
        out, acts = self.net.net.forward(np.atleast_2d(obs))
        w = (np.asarray(cost_returns) - d) / len(out)
        return self.net.net.backward(acts, w[:, None])

    def ascend(self, obs, cost_returns, d: float) -> "MultiplierNet":
        grad = self.ascent_gradient(obs, cost_returns, d)
        params = self.opt.step(self.net.net.flat, -grad)
        self.net = ValueNet(self.net.net.with_flat(params))
        return self


def fac_step(policy: GaussianPolicy, batch: Batch | BatchData, adv, adv_c, cost_returns,
             multiplier: MultiplierNet, cost_value: float,
             cfg: TrustRegionConfig = TrustRegionConfig(),
             ccfg: ConstraintConfig = ConstraintConfig()):
    """Policy step on ``(A - lambda(s) A_C) / (1 + mean lambda)``, then one
    ascent step for the multiplier network."""
    data = batch if isinstance(batch, BatchData) else BatchData.from_batch(batch)
    lam_s = multiplier(data.obs)
    composite = (np.asarray(adv) - lam_s * np.asarray(adv_c)) / (1.0 + lam_s.mean())
    new, report = trpo_step(policy, data, composite, cfg)
    multiplier.ascend(data.obs, cost_returns, ccfg.target_cost)
    report.constraint_estimate = cost_value
    report.multiplier = float(np.mean(multiplier(data.obs)))
    return new, multiplier, report


def log_barrier(x, t: float):
    """``log(-x) / t``; defined for ``x < 0`` only."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x >= 0):
        raise ValueError("log barrier is undefined for x >= 0")
    out = np.log(-x) / t
    return float(out) if out.ndim == 0 else out


def barrier_weight(violation: float, t: float, fallback: float) -> float:
    """Weight on the cost advantage: the barrier slope ``1 / (t |x|)`` while
    strictly feasible, ``fallback`` otherwise."""
    if violation < 0:
        return 1.0 / (t * -violation)
    return fallback


def ipo_step(policy: GaussianPolicy, batch: Batch | BatchData, adv, adv_c, cost_value: float,
             cfg: TrustRegionConfig = TrustRegionConfig(),
             ccfg: ConstraintConfig = ConstraintConfig()):
    """Trust-region step on the barrier-augmented objective, linearized into
    the advantage ``(A - w A_C) / (1 + w)``."""
    violation = cost_value - ccfg.target_cost
    w = barrier_weight(violation, ccfg.t_ipo, ccfg.ipo_fallback_weight)
    composite = (np.asarray(adv) - w * np.asarray(adv_c)) / (1.0 + w)
    new, report = trpo_step(policy, batch, composite, cfg)
    report.constraint_estimate = cost_value
    report.multiplier = w
    report.case = "barrier" if violation < 0 else "infeasible_fallback"
    return new, report
