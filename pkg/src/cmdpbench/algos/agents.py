"""Uniform update entry point for every algorithm, selected by name."""
from __future__ import annotations

import math

import numpy as np

from ..numerics import RngStream
from ..policy_net import GaussianPolicy, ValueNet
from ..runtime import GAMMA, AdvantageEstimates, Batch
from .penalty import (ConstraintConfig, LagrangeState, MultiplierNet, fac_step, ipo_step,
                      lagrangian_step)
from .projection import cpo_step, pcpo_step
from .shields import WARMUP_RATIO, QCostNet, SafetyLayerModel
from .trust_region import BatchData, TrustRegionConfig, UpdateReport, trpo_step


class Agent:
    """Base: plain TRPO. Subclasses override :meth:`update` and, for shields,
    :meth:`shield` / :meth:`observe`."""

    name = "trpo"

    def __init__(self, obs_dim: int, act_dim: int, rng: RngStream,
                 tr_cfg: TrustRegionConfig = TrustRegionConfig(),
                 c_cfg: ConstraintConfig = ConstraintConfig(),
                 gamma: float = GAMMA, total_epochs: int = 1):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.rng = rng
        self.tr_cfg, self.c_cfg = tr_cfg, c_cfg
        self.gamma = gamma
        self.total_epochs = total_epochs

    @property
    def multiplier(self) -> float:
        return 0.0

    def shield(self, epoch: int):
        return None

    def update(self, policy: GaussianPolicy, batch: Batch | BatchData,
               est: AdvantageEstimates) -> tuple[GaussianPolicy, UpdateReport]:
        new, report = trpo_step(policy, batch, est.reward_advantages, self.tr_cfg)
        report.constraint_estimate = est.cost_value
        return new, report

    def observe(self, batch: Batch, est: AdvantageEstimates, epoch: int) -> None:
        """Hook run after the policy update (shield model fitting)."""


class LagrangianAgent(Agent):
    name = "trpo_lag"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.state = LagrangeState(0.0)

    @property
    def multiplier(self) -> float:
        return self.state.lam

    def update(self, policy, batch, est):
        signal = est.episode_cost if self.c_cfg.dual_signal == "episode_cost" else est.cost_value
        new, self.state, report = lagrangian_step(policy, batch, est.reward_advantages,
                                                  est.cost_advantages, self.state, signal,
                                                  self.tr_cfg, self.c_cfg)
        return new, report


class FacAgent(Agent):
    name = "trpo_fac"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        net = ValueNet.init(self.obs_dim, self.rng.spawn(11), softplus_out=True)
        self.mult = MultiplierNet(net, self.c_cfg.fac_lr)
        self._last = 0.0

    @property
    def multiplier(self) -> float:
        return self._last

    def update(self, policy, batch, est):
        new, self.mult, report = fac_step(policy, batch, est.reward_advantages,
                                          est.cost_advantages, est.cost_returns, self.mult,
                                          est.cost_value, self.tr_cfg, self.c_cfg)
        self._last = report.multiplier
        return new, report


class IpoAgent(Agent):
    name = "trpo_ipo"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._last = 0.0

    @property
    def multiplier(self) -> float:
        return self._last

    def update(self, policy, batch, est):
        new, report = ipo_step(policy, batch, est.reward_advantages, est.cost_advantages,
                               est.cost_value, self.tr_cfg, self.c_cfg)
        self._last = report.multiplier
        return new, report


class CpoAgent(Agent):
    name = "cpo"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._last = 0.0

    @property
    def multiplier(self) -> float:
        return self._last

    def update(self, policy, batch, est):
        new, report = cpo_step(policy, batch, est.reward_advantages, est.cost_advantages,
                               est.cost_value, self.tr_cfg, self.c_cfg.target_cost,
                               self.c_cfg.cost_reduction, self.gamma)
        self._last = report.multiplier
        return new, report


class PcpoAgent(Agent):
    projection = "kl"

    def update(self, policy, batch, est):
        return pcpo_step(policy, batch, est.reward_advantages, est.cost_advantages,
                         est.cost_value, self.tr_cfg, self.c_cfg.target_cost,
                         self.projection, self.gamma)


class PcpoL2Agent(PcpoAgent):
    name = "pcpo_l2"
    projection = "l2"


class PcpoKlAgent(PcpoAgent):
    name = "pcpo_kl"
    projection = "kl"


class _ShieldedAgent(Agent):
    """TRPO policy updates; after the warm-up fraction of epochs, rollouts go
    through a learned shield. Shield models are fit from the first epoch on."""

    history = 3  # number of recent batches kept for shield fitting

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.warmup_epochs = math.ceil(WARMUP_RATIO * self.total_epochs)
        self._data: list[tuple] = []

    def shield_active(self, epoch: int) -> bool:
        return epoch >= self.warmup_epochs

    def _remember(self, item):
        self._data.append(item)
        self._data = self._data[-self.history:]

    def _stack(self):
        return [np.concatenate(parts) for parts in zip(*self._data)]


class SafetyLayerAgent(_ShieldedAgent):
    name = "trpo_sl"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.model = SafetyLayerModel(self.obs_dim, self.act_dim, self.rng.spawn(12))

    def shield(self, epoch):
        return self.model.shield(self.c_cfg.target_cost) if self.shield_active(epoch) else None

    def observe(self, batch, est, epoch):
        self._remember((batch.obs, np.clip(batch.actions, -1, 1), batch.previous_costs, batch.costs))
        obs, act, c_prev, c_next = self._stack()
        self.model.fit(obs, act, c_prev, c_next)


class UnrolledSafetyLayerAgent(_ShieldedAgent):
    name = "trpo_usl"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.qc = QCostNet(self.obs_dim, self.act_dim, self.rng.spawn(13))

    def shield(self, epoch):
        return self.qc.shield(self.c_cfg.target_cost) if self.shield_active(epoch) else None

    def observe(self, batch, est, epoch):
        self._remember((batch.obs, np.clip(batch.actions, -1, 1), est.cost_returns))
        obs, act, ret = self._stack()
        self.qc.fit(obs, act, ret)


ALGORITHMS = {cls.name: cls for cls in (
    Agent, LagrangianAgent, FacAgent, IpoAgent, CpoAgent, PcpoL2Agent, PcpoKlAgent,
    SafetyLayerAgent, UnrolledSafetyLayerAgent)}


def make_agent(name: str, *args, **kwargs) -> Agent:
    try:
        cls = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return cls(*args, **kwargs)
