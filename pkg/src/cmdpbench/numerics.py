"""Dense linear algebra helpers, iterative solvers and verification oracles.

Everything here works on float64 numpy arrays. Operations fail loudly on
non-finite values instead of clamping them.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

LinearOperator = Callable[[np.ndarray], np.ndarray]


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up where a finite value is required."""


def check_finite(x, what: str = "value") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite {what}")
    return arr


class RngStream:
    """Seeded random stream (PCG64). Single owner; never share across workers."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def spawn(self, offset: int) -> "RngStream":
        """Independent child stream derived from (seed, offset)."""
        ss = np.random.SeedSequence([self.seed, int(offset)])
        return RngStream(int(ss.generate_state(1, np.uint64)[0]))

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state


class CGResult(NamedTuple):
    x: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def conjugate_gradient(
    op: LinearOperator,
    b,
    max_iters: int = 10,
    residual_tol: float = 1e-10,
) -> CGResult:
    """Solve ``op(x) = b`` for a symmetric positive definite ``op``.

    Damping, if wanted, must already be part of ``op``. If the tolerance is not
    reached within ``max_iters`` the best iterate (smallest residual) is returned
    with ``converged=False``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    b = check_finite(b, "right-hand side").ravel()
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    best_x, best_res = x.copy(), np.sqrt(rr)
    if best_res <= residual_tol:
        return CGResult(x, float(best_res), 0, True)
    it = 0
    for it in range(1, max_iters + 1):
        z = np.asarray(op(p), dtype=np.float64)
        if z.shape != p.shape:
            raise ValueError(f"operator returned shape {z.shape}, expected {p.shape}")
        check_finite(z, "operator output")
        pz = p @ z
        if pz <= 0.0:
            # operator is not positive definite along p
            break
        alpha = rr / pz
        x = x + alpha * p
        r = r - alpha * z
        rr_new = r @ r
        res = np.sqrt(rr_new)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= residual_tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    # recompute the true residual; the recursive one drifts
    true_res = float(np.linalg.norm(np.asarray(op(best_x)) - b))
    check_finite(best_x, "CG solution")
    return CGResult(best_x, true_res, it, true_res <= residual_tol)


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    shape = x.shape
    flat = x.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(flat.reshape(shape)))
        flat[i] = orig - eps
        fm = float(f(flat.reshape(shape)))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(shape)


def solve_qp_projection_oracle(a_ref, g, offset: float, limit: float) -> np.ndarray:
    """Nearest point to ``a_ref`` in the half-space ``g @ a + offset <= limit``.

    Enumerates the two KKT cases. With the constraint active, the bordered
    system ``[[I, g], [g^T, 0]] [a; mu] = [a_ref; limit - offset]`` is solved
    densely and the case is kept only if ``mu >= 0``.
    """
    a_ref = check_finite(a_ref, "reference action").ravel()
    g = check_finite(g, "constraint gradient").ravel()
    if not np.any(g):
        raise ValueError("zero constraint gradient")
    if g @ a_ref + offset <= limit:
        return a_ref.copy()
    n = a_ref.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = np.eye(n)
    kkt[:n, n] = g
    kkt[n, :n] = g
    rhs = np.concatenate([a_ref, [limit - offset]])
    sol = np.linalg.solve(kkt, rhs)
    if sol[n] < 0:
        raise ArithmeticError("active-set case produced a negative multiplier")
    return sol[:n]
