"""Small tanh MLPs with hand-written backprop, the Gaussian policy built on
them, and the KL / Fisher machinery used by the trust-region updates.

All networks are immutable values: every update returns a new object built
from a new flat parameter vector.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import NonFiniteError, RngStream, check_finite

HIDDEN = (64, 64)
INIT_LOG_STD = -0.5
LOG_2PI = np.log(2.0 * np.pi)


def softplus(z):
    return np.logaddexp(0.0, z)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Mlp:
    """Fully connected net ``sizes[0] -> ... -> sizes[-1]`` with tanh hidden
    units and a linear (or softplus) output.

    Parameters live in one flat float64 vector; ``weights``/``biases`` are
    views into it, weight ``i`` has shape ``(sizes[i], sizes[i+1])``.
    """

    def __init__(self, sizes: Sequence[int], flat=None, softplus_out: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {self.sizes}")
        self.softplus_out = softplus_out
        n = self.num_params(self.sizes)
        if flat is None:
            flat = np.zeros(n)
        flat = np.array(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {flat.shape}")
        self.flat = flat
        self.flat.setflags(write=False)
        self.weights, self.biases = [], []
        i = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(flat[i:i + fan_in * fan_out].reshape(fan_in, fan_out))
            i += fan_in * fan_out
            self.biases.append(flat[i:i + fan_out])
            i += fan_out

    @staticmethod
    def num_params(sizes) -> int:
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    @classmethod
    def init(cls, sizes, rng: RngStream, softplus_out: bool = False) -> "Mlp":
        # weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases
        parts = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            parts.append(np.zeros(fan_out))
        return cls(sizes, np.concatenate(parts), softplus_out)

    def with_flat(self, flat) -> "Mlp":
        return Mlp(self.sizes, flat, self.softplus_out)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x):
        """Returns ``(output, cache)`` for a batch ``x`` of shape (N, in_dim)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"input shape {x.shape} does not match in_dim {self.in_dim}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        out = softplus(h) if self.softplus_out else h
        return out, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, grad_out, want_input: bool = False):
        """Vector-Jacobian product: gradient of ``sum(grad_out * output)``
        w.r.t. the flat parameters (summed over the batch)."""
        g = np.asarray(grad_out, dtype=np.float64)
        if self.softplus_out:
            g = g * sigmoid(acts[-1])
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            grads.append(g.sum(axis=0))
            grads.append((h_in.T @ g).ravel())
            if i > 0 or want_input:
                g = g @ self.weights[i].T
                if i > 0:
                    g = g * (1.0 - h_in ** 2)
        flat = np.concatenate(grads[::-1])
        if want_input:
            return flat, g
        return flat

    def jvp(self, acts, dflat):
        """Jacobian-vector product: directional derivative of the output for a
        parameter perturbation ``dflat`` (forward-mode)."""
        d = self.with_flat(dflat)
        dh = np.zeros_like(acts[0])
        last = len(self.weights) - 1
        for i, (W, dW, db) in enumerate(zip(self.weights, d.weights, d.biases)):
            dz = acts[i] @ dW + db
            if i > 0:
                dz = dz + dh @ W
            dh = dz if i == last else (1.0 - acts[i + 1] ** 2) * dz
        if self.softplus_out:
            dh = dh * sigmoid(acts[-1])
        return dh


@dataclass(frozen=True)
class OldPolicyStats:
    """Per-state action distribution recorded when the batch was collected."""
    mean: np.ndarray
    std: np.ndarray

    def __len__(self):
        return len(self.mean)


class GaussianPolicy:
    """Diagonal Gaussian policy: MLP mean and a state-independent log-std."""

    def __init__(self, mean_net: Mlp, log_std):
        self.mean_net = mean_net
        self.log_std = np.array(log_std, dtype=np.float64)
        if self.log_std.shape != (mean_net.out_dim,):
            raise ValueError("log_std must have one entry per action dimension")
        check_finite(self.log_std, "log_std")

    @classmethod
    def init(cls, obs_dim: int, act_dim: int, rng: RngStream, hidden=HIDDEN,
             log_std: float = INIT_LOG_STD) -> "GaussianPolicy":
        net = Mlp.init((obs_dim, *hidden, act_dim), rng)
        return cls(net, np.full(act_dim, log_std))

    @property
    def obs_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def act_dim(self) -> int:
        return self.mean_net.out_dim

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.mean_net.flat, self.log_std])

    @property
    def num_params(self) -> int:
        return self.mean_net.flat.size + self.act_dim

    def with_flat(self, flat) -> "GaussianPolicy":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {flat.shape}")
        k = self.mean_net.flat.size
        return GaussianPolicy(self.mean_net.with_flat(flat[:k]), flat[k:])

    def distribution(self, obs):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        mean, _ = self.mean_net.forward(obs)
        std = np.broadcast_to(np.exp(self.log_std), mean.shape)
        return mean, std

    def stats(self, obs) -> OldPolicyStats:
        mean, std = self.distribution(obs)
        return OldPolicyStats(mean.copy(), np.array(std))


def policy_forward(policy: GaussianPolicy, obs):
    """Mean and std of the action distribution at a single observation."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (policy.obs_dim,):
        raise ValueError(f"observation has shape {obs.shape}, expected ({policy.obs_dim},)")
    mean, std = policy.distribution(obs[None])
    return mean[0], np.array(std[0])


def gaussian_log_prob(mean, log_std, action):
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z + 2.0 * log_std + LOG_2PI, axis=-1)


def log_prob(policy: GaussianPolicy, obs, action):
    """Log-density of ``action`` under the policy (batched or single)."""
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    mean, _ = policy.distribution(obs)
    out = gaussian_log_prob(mean, policy.log_std, np.atleast_2d(action))
    return float(out[0]) if single else out


def sample_action(policy: GaussianPolicy, obs, rng: RngStream):
    mean, std = policy_forward(policy, obs)
    action = mean + std * rng.normal(policy.act_dim)
    return action, float(gaussian_log_prob(mean, policy.log_std, action))


def _kl_terms(old: OldPolicyStats, policy: GaussianPolicy, obs):
    mean, acts = policy.mean_net.forward(np.asarray(obs, dtype=np.float64))
    if len(old) != len(mean):
        raise ValueError("old-policy stats and observation batch differ in length")
    var = np.exp(2.0 * policy.log_std)
    diff = mean - old.mean
    return mean, acts, var, diff


def mean_kl(old: OldPolicyStats, policy: GaussianPolicy, obs) -> float:
    """Mean over states of KL(old || policy) for diagonal Gaussians."""
    if len(old) == 0:
        raise ValueError("empty batch")
    _, _, var, diff = _kl_terms(old, policy, obs)
    kl = (policy.log_std - np.log(old.std)
          + (old.std ** 2 + diff ** 2) / (2.0 * var) - 0.5).sum(axis=1)
    value = float(kl.mean())
    if not np.isfinite(value):
        raise NonFiniteError("non-finite KL")
    return value


def mean_kl_gradient(old: OldPolicyStats, policy: GaussianPolicy, obs) -> np.ndarray:
    _, acts, var, diff = _kl_terms(old, policy, obs)
    n = len(diff)
    g_net = policy.mean_net.backward(acts, diff / var / n)
    g_std = (1.0 - (old.std ** 2 + diff ** 2) / var).mean(axis=0)
    return np.concatenate([g_net, g_std])


def fisher_vector_product(policy: GaussianPolicy, old: OldPolicyStats, obs, v,
                          damping: float = 0.1) -> np.ndarray:
    """``H v + damping * v`` with H the Hessian of :func:`mean_kl`.

    The mean-network block uses the Gauss-Newton form ``J^T diag(1/var) J``,
    which is exact at ``policy == old`` (the only place the trust-region
    updates evaluate it). The log-std block and the mean/log-std cross terms
    are exact everywhere.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (policy.num_params,):
        raise ValueError(f"vector has shape {v.shape}, expected ({policy.num_params},)")
    k = policy.mean_net.flat.size
    v_net, v_std = v[:k], v[k:]
    _, acts, var, diff = _kl_terms(old, policy, obs)
    n = len(diff)
    jv = policy.mean_net.jvp(acts, v_net)
    cross = -2.0 * diff / var
    hv_net = policy.mean_net.backward(acts, (jv / var + cross * v_std) / n)
    curv_std = (2.0 * (old.std ** 2 + diff ** 2) / var).mean(axis=0)
    hv_std = curv_std * v_std + (cross * jv).mean(axis=0)
    out = np.concatenate([hv_net, hv_std]) + damping * v
    return check_finite(out, "Fisher-vector product")


def surrogate_and_gradient(policy: GaussianPolicy, old_log_prob, obs, actions, advantages):
    """Importance-weighted surrogate ``mean(ratio * A)`` and its gradient."""
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if len(adv) != len(obs):
        raise ValueError("advantages are not aligned with the batch")
    mean, acts = policy.mean_net.forward(obs)
    logp = gaussian_log_prob(mean, policy.log_std, actions)
    ratio = np.exp(logp - old_log_prob)
    if not np.all(np.isfinite(ratio)):
        raise NonFiniteError("non-finite likelihood ratio")
    n = len(adv)
    w = ratio * adv / n
    inv_var = np.exp(-2.0 * policy.log_std)
    resid = actions - mean
    g_net = policy.mean_net.backward(acts, w[:, None] * resid * inv_var)
    g_std = (w[:, None] * (resid ** 2 * inv_var - 1.0)).sum(axis=0)
    return float(np.sum(w)), np.concatenate([g_net, g_std])


def surrogate(policy: GaussianPolicy, old_log_prob, obs, actions, advantages) -> float:
    logp = log_prob(policy, obs, actions)
    return float(np.mean(np.exp(logp - old_log_prob) * advantages))


class Adam:
    """Plain Adam on a flat vector (maximize=False means descent)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params, grad):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class FitReport:
    initial_mse: float
    final_mse: float
    warning: bool = False


@dataclass
class ValueNet:
    """Scalar critic. ``softplus_out`` keeps the output non-negative (used for
    the FAC multiplier and the USL cost Q-function)."""
    net: Mlp
    report: FitReport | None = field(default=None, compare=False)

    @classmethod
    def init(cls, in_dim: int, rng: RngStream, hidden=HIDDEN, softplus_out: bool = False):
        return cls(Mlp.init((in_dim, *hidden, 1), rng, softplus_out))

    def predict(self, obs) -> np.ndarray:
        return self.net(np.atleast_2d(np.asarray(obs, dtype=np.float64)))[:, 0]

    def mse_and_gradient(self, obs, targets):
        out, acts = self.net.forward(np.atleast_2d(np.asarray(obs, dtype=np.float64)))
        err = out[:, 0] - targets
        n = len(err)
        loss = float(np.mean(err ** 2))
        grad = self.net.backward(acts, (2.0 * err / n)[:, None])
        return loss, grad


def fit_value(net: ValueNet, obs, targets, iters: int = 80, lr: float = 1e-3,
              optimizer: str = "adam") -> ValueNet:
    """Full-batch regression of ``net`` onto ``targets``.

    ``optimizer`` is ``"adam"`` or ``"sgd"`` (plain gradient descent).
    """
    targets = check_finite(targets, "regression targets").ravel()
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if len(targets) != len(obs):
        raise ValueError("targets are not aligned with observations")
    opt = Adam(lr) if optimizer == "adam" else None
    params = net.net.flat.copy()
    cur = net
    first = None
    loss = None
    for _ in range(iters):
        loss, grad = cur.mse_and_gradient(obs, targets)
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite value loss")
        if first is None:
            first = loss
        params = opt.step(params, grad) if opt is not None else params - lr * grad
        cur = ValueNet(cur.net.with_flat(params))
    final = float(np.mean((cur.predict(obs) - targets) ** 2))
    if not np.isfinite(final):
        raise NonFiniteError("non-finite value loss")
    first = final if first is None else first
    report = FitReport(first, final, warning=final > first)
    if report.warning:
        warnings.warn(f"value fit increased MSE from {first:.6g} to {final:.6g}", RuntimeWarning)
    cur.report = report
    return cur


# Checkpoint layout (all little-endian):
#   b"CMPB" | u32 version | u32 kind (0 = Mlp, 1 = GaussianPolicy) | u32 softplus
#   | u32 n_sizes | n_sizes * u32 layer sizes | u32 act_dim | u64 n_values
#   | n_values * f64 flat parameters (policy: mean net then log_std)
_MAGIC = b"CMPB"
_VERSION = 1


def to_bytes(model) -> bytes:
    if isinstance(model, GaussianPolicy):
        kind, net, act_dim, flat = 1, model.mean_net, model.act_dim, model.flat
    elif isinstance(model, ValueNet):
        kind, net, act_dim, flat = 0, model.net, 0, model.net.flat
    elif isinstance(model, Mlp):
        kind, net, act_dim, flat = 0, model, 0, model.flat
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    head = _MAGIC + struct.pack("<IIII", _VERSION, kind, int(net.softplus_out), len(net.sizes))
    head += struct.pack(f"<{len(net.sizes)}I", *net.sizes)
    head += struct.pack("<IQ", act_dim, flat.size)
    return head + np.asarray(flat, dtype="<f8").tobytes()


def from_bytes(data: bytes):
    if data[:4] != _MAGIC:
        raise ValueError("not a parameter checkpoint")
    version, kind, sp, n_sizes = struct.unpack_from("<IIII", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 20
    sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
    off += 4 * n_sizes
    act_dim, n = struct.unpack_from("<IQ", data, off)
    off += 12
    flat = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
    if kind == 1:
        k = Mlp.num_params(sizes)
        return GaussianPolicy(Mlp(sizes, flat[:k]), flat[k:k + act_dim])
    return Mlp(sizes, flat, bool(sp))


def save_checkpoint(model, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
