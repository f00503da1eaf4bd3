"""The constrained step rules on a toy quadratic problem: the CPO dual
solution in each of its cases and the two PCPO projection metrics."""
import numpy as np

from cmdpbench.algos import cpo_direction, pcpo_direction

H = np.array([[2.0, 0.3], [0.3, 1.0]])
hinv = lambda v: np.linalg.solve(H, v)
g = np.array([1.0, 0.5])        # reward gradient
g_c = np.array([0.2, 1.0])      # cost gradient
delta = 0.01

for b in (-0.5, 0.05, 0.5):     # slack: satisfied, tight, badly violated
    sol = cpo_direction(g, g_c, b, delta, hinv)
    x = sol.step
    print(f"b={b:+.2f} case={sol.case:12s} x={np.round(x, 4)} "
          f"g_c.x+b={g_c @ x + b:+.2e} x'Hx/2={0.5 * x @ H @ x:.4f}")

b = 0.05
for label, linv in (("l2", None), ("kl", hinv)):
    step, projected = pcpo_direction(g, g_c, b, delta, hinv, linv)
    print(f"PCPO-{label}: step={np.round(step, 4)} projected={projected} "
          f"g_c.x+b={g_c @ step + b:+.2e}")
