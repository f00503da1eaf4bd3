"""Rollout-time action shields: the linear safety layer and its unrolled,
Q-function-based variant."""
from __future__ import annotations

import numpy as np

from ..numerics import NonFiniteError, RngStream
from ..policy_net import HIDDEN, Adam, Mlp

USL_ETA = 0.05
USL_ITERS = 20
WARMUP_RATIO = 1.0 / 3.0


def safety_layer_project(a_ref, g_hat, c_prev: float, d: float, clip: bool = True) -> np.ndarray:
    """Closed-form nearest action with ``g_hat . a + c_prev <= d``."""
    a_ref = np.asarray(a_ref, dtype=np.float64)
    g_hat = np.asarray(g_hat, dtype=np.float64)
    gg = float(g_hat @ g_hat)
    if gg == 0.0:
        return a_ref.copy()
    mult = max(0.0, (float(g_hat @ a_ref) + c_prev - d) / gg)
    a = a_ref - mult * g_hat
    return np.clip(a, -1.0, 1.0) if clip else a


class SafetyLayerModel:
    """Per-state linear cost model: ``c_next - c_prev ~ g(s) . a + beta(s)``.

    One MLP emits the action gradient ``g(s)`` and the bias ``beta(s)``.
    """

    def __init__(self, obs_dim: int, act_dim: int, rng: RngStream, hidden=HIDDEN, lr: float = 1e-3):
        self.act_dim = act_dim
        self.net = Mlp.init((obs_dim, *hidden, act_dim + 1), rng)
        self.opt = Adam(lr)

    def predict(self, obs):
        out = self.net(np.atleast_2d(obs))
        return out[:, :self.act_dim], out[:, self.act_dim]

    def loss_and_gradient(self, obs, actions, c_prev, c_next):
        out, acts = self.net.forward(np.atleast_2d(obs))
        g, beta = out[:, :self.act_dim], out[:, self.act_dim]
        err = np.sum(g * actions, axis=1) + beta - (np.asarray(c_next) - np.asarray(c_prev))
        n = len(err)
        gout = np.concatenate([2.0 * err[:, None] * actions, 2.0 * err[:, None]], axis=1) / n
        return float(np.mean(err ** 2)), self.net.backward(acts, gout)

    def fit(self, obs, actions, c_prev, c_next, iters: int = 80) -> list[float]:
        """Full-batch Adam regression; returns the loss before each step."""
        losses = []
        params = self.net.flat
        for _ in range(iters):
            loss, grad = self.loss_and_gradient(obs, actions, c_prev, c_next)
            if not np.isfinite(loss):
                raise NonFiniteError("non-finite safety-layer loss")
            losses.append(loss)
            params = self.opt.step(params, grad)
            self.net = self.net.with_flat(params)
        return losses

    def shield(self, d: float = 0.0):
        def project(obs, action, c_prev):
            g, beta = self.predict(obs[None])
            return safety_layer_project(action, g[0], c_prev + beta[0], d)
        return project


class QCostNet:
    """Cost Q-function ``Q_C(s, a) >= 0`` on the concatenated input."""

    def __init__(self, obs_dim: int, act_dim: int, rng: RngStream, hidden=HIDDEN, lr: float = 1e-3):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.net = Mlp.init((obs_dim + act_dim, *hidden, 1), rng, softplus_out=True)
        self.opt = Adam(lr)

    def _x(self, obs, actions):
        return np.concatenate([np.atleast_2d(obs), np.atleast_2d(actions)], axis=1)

    def value(self, obs, actions) -> np.ndarray:
        return self.net(self._x(obs, actions))[:, 0]

    def value_and_action_grad(self, obs, action):
        """``Q_C(s, a)`` and ``dQ_C/da`` for a single state-action pair."""
        out, acts = self.net.forward(self._x(obs, action))
        _, gx = self.net.backward(acts, np.ones_like(out), want_input=True)
        return float(out[0, 0]), gx[0, self.obs_dim:]

    def param_gradient(self, obs, actions, targets):
        out, acts = self.net.forward(self._x(obs, actions))
        err = out[:, 0] - targets
        return float(np.mean(err ** 2)), self.net.backward(acts, (2.0 * err / len(err))[:, None])

    def fit(self, obs, actions, targets, iters: int = 80) -> list[float]:
        losses = []
        params = self.net.flat
        targets = np.asarray(targets, dtype=np.float64)
        for _ in range(iters):
            loss, grad = self.param_gradient(obs, actions, targets)
            if not np.isfinite(loss):
                raise NonFiniteError("non-finite Q_C loss")
            losses.append(loss)
            params = self.opt.step(params, grad)
            self.net = self.net.with_flat(params)
        return losses

    def shield(self, d: float = 0.0, eta: float = USL_ETA, iters: int = USL_ITERS):
        def correct(obs, action, _c_prev):
            return usl_correct(action, obs, self, d, eta, iters)
        return correct


def usl_correct(a_ref, s, qc, d: float = 0.0, eta: float = USL_ETA, iters: int = USL_ITERS):
    """Normalized gradient descent on ``Q_C(s, a)`` until it drops to ``d``.

    ``qc`` needs ``value_and_action_grad(s, a) -> (value, grad)``. Each
    iteration moves ``a`` by exactly ``eta`` before clipping to [-1, 1].
    """
    if eta <= 0 or iters < 1:
        raise ValueError("need eta > 0 and iters >= 1")
    a = np.asarray(a_ref, dtype=np.float64).copy()
    for _ in range(iters):
        q, grad = qc.value_and_action_grad(s, a)
        if q <= d:
            break
        grad = np.asarray(grad, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite Q_C action gradient")
        z = np.linalg.norm(grad) + 1e-8
        a = np.clip(a - eta / z * grad, -1.0, 1.0)
    return a


def usl_fit_qc(qc: QCostNet, obs, actions, cost_returns, iters: int = 80) -> QCostNet:
    qc.fit(obs, actions, cost_returns, iters)
    return qc


def safety_layer_fit(model: SafetyLayerModel, obs, actions, c_prev, c_next,
                     iters: int = 80) -> SafetyLayerModel:
    model.fit(obs, actions, c_prev, c_next, iters)
    return model
