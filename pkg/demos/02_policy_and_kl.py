"""Gaussian policy basics: sampling, log-probabilities, the mean KL that
bounds every update, and the Fisher-vector product used by CG."""
import numpy as np

from cmdpbench.numerics import RngStream, conjugate_gradient
from cmdpbench.policy_net import (GaussianPolicy, fisher_vector_product, log_prob, mean_kl,
                                  sample_action)

rng = RngStream(0)
policy = GaussianPolicy.init(obs_dim=6, act_dim=2, rng=rng.spawn(0))
obs = np.random.default_rng(1).normal(size=(256, 6))
old = policy.stats(obs)

acts = np.stack([sample_action(policy, o, rng.spawn(10 + i))[0] for i, o in enumerate(obs[:3])])
print("sampled actions:\n", acts)
print("log-probs:", log_prob(policy, obs[:3], acts))

# A small parameter perturbation and the KL it induces.
direction = np.random.default_rng(2).normal(size=policy.num_params)
for eps in (1e-3, 1e-2, 1e-1):
    moved = policy.with_flat(policy.flat + eps * direction)
    print(f"eps={eps:g}  mean KL={mean_kl(old, moved, obs):.3e}")

# Quadratic model of the KL: 0.5 * x' F x matches for small steps.
x = 1e-2 * direction
fx = fisher_vector_product(policy, old, obs, x, damping=0.0)
print(f"quadratic model {0.5 * x @ fx:.3e} vs exact "
      f"{mean_kl(old, policy.with_flat(policy.flat + x), obs):.3e}")

# Natural-gradient direction by conjugate gradient on the damped Fisher.
g = np.random.default_rng(3).normal(size=policy.num_params)
res = conjugate_gradient(lambda v: fisher_vector_product(policy, old, obs, v, 0.1), g, 10)
print(f"CG: {res.iterations} iterations, residual {res.residual_norm:.2e}, converged={res.converged}")
