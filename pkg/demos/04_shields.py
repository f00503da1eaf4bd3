"""Action shields: the closed-form safety layer and the unrolled
Q_C-gradient correction, on hand-built cost models."""
import numpy as np

from cmdpbench.algos import safety_layer_project, usl_correct

a = np.array([0.6, 0.2])
g = np.array([1.0, 0.0])
for c_prev in (0.0, 0.5, 0.9):
    out = safety_layer_project(a, g, c_prev, d=1.0)
    print(f"c_prev={c_prev}: {a} -> {out}  predicted cost {g @ out + c_prev:.2f}")


class HazardQc:
    """Q_C(s, a) = exp(-|a - h|^2 / 0.1): a stand-in critic that expects cost
    when the action heads toward a hazard direction ``h`` (the state here)."""

    def value_and_action_grad(self, h, a):
        q = float(np.exp(-np.sum((a - h) ** 2) / 0.1))
        return q, -2 * (a - h) / 0.1 * q


h = np.array([0.5, 0.0])
a = np.array([0.45, 0.05])
qc = HazardQc()
out = usl_correct(a, h, qc, d=0.25)
print("USL correction:", a, "->", np.round(out, 4),
      f"Q_C {qc.value_and_action_grad(h, a)[0]:.3f} -> {qc.value_and_action_grad(h, out)[0]:.3f}")
