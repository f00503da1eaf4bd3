"""CPO and PCPO: single-constraint trust-region updates with a linearized
cost constraint ``g_c . step + b <= 0``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..policy_net import GaussianPolicy
from ..runtime import GAMMA, Batch
from .trust_region import (BatchData, FisherSolver, TrustRegionConfig, UpdateReport, evaluate,
                           gradient, line_search, natural_step, trpo_step)

EPS = 1e-12
Solve = Callable[[np.ndarray], np.ndarray]


@dataclass
class CpoSolution:
    step: np.ndarray
    case: str  # "trpo" | "both_active" | "recovery" | "degenerate"
    lam: float = 0.0
    nu: float = 0.0


def cpo_direction(g, g_c, b: float, delta: float, hinv: Solve) -> CpoSolution:
    """Maximize ``g.x`` subject to ``x.H.x / 2 <= delta`` and ``g_c.x + b <= 0``.

    ``hinv(v)`` must return ``H^-1 v``. Solved through the Lagrange dual:
    if the unconstrained trust-region step already satisfies the linear
    constraint it is returned; if no point of the trust region is feasible the
    recovery step ``-sqrt(2 delta / s) H^-1 g_c`` is taken; otherwise both
    constraints are active and ``x = (H^-1 g - nu H^-1 g_c) / lam`` with
    ``lam = sqrt((q - r^2/s) / (2 delta - b^2/s))`` and ``nu = (r + lam b) / s``.
    """
    g = np.asarray(g, dtype=np.float64)
    g_c = np.asarray(g_c, dtype=np.float64)
    x_g = hinv(g)
    q = float(g @ x_g)
    x_c = hinv(g_c) if np.any(g_c) else np.zeros_like(g_c)
    s = float(g_c @ x_c)
    r = float(g @ x_c)
    x_trpo = np.sqrt(2.0 * delta / q) * x_g if q > EPS else np.zeros_like(g)
    if s <= EPS:
        return CpoSolution(x_trpo, "degenerate")
    if q > EPS and g_c @ x_trpo + b <= 0.0:
        return CpoSolution(x_trpo, "trpo", lam=np.sqrt(q / (2.0 * delta)))
    if b > 0.0 and b * b / s >= 2.0 * delta:
        return CpoSolution(-np.sqrt(2.0 * delta / s) * x_c, "recovery")
    A = q - r * r / s
    B = 2.0 * delta - b * b / s
    if A <= EPS or B <= EPS:
        # reward gradient parallel to the cost gradient: closest point on the plane
        return CpoSolution(-(b / s) * x_c, "both_active")
    lam = np.sqrt(A / B)
    nu = (r + lam * b) / s
    if nu < 0.0:
        return CpoSolution(x_trpo, "trpo", lam=np.sqrt(q / (2.0 * delta)))
    return CpoSolution((x_g - nu * x_c) / lam, "both_active", lam=float(lam), nu=float(nu))


def pcpo_direction(g, g_c, b: float, delta: float, hinv: Solve, linv: Solve | None = None):
    """Trust-region reward step followed by a projection onto the linearized
    constraint set in the metric ``L`` (``linv`` = ``L^-1``; identity if None).

    Returns ``(step, projected)``; ``projected`` is False when ``g_c`` is
    degenerate and the plain trust-region step is returned.
    """
    g = np.asarray(g, dtype=np.float64)
    g_c = np.asarray(g_c, dtype=np.float64)
    x_g = hinv(g)
    q = float(g @ x_g)
    x_trpo = np.sqrt(2.0 * delta / q) * x_g if q > EPS else np.zeros_like(g)
    l_c = linv(g_c) if linv is not None else g_c.copy()
    s_l = float(g_c @ l_c)
    if s_l <= EPS:
        return x_trpo, False
    shift = max(0.0, (float(g_c @ x_trpo) + b) / s_l)
    return x_trpo - shift * l_c, True


def _constraint_inputs(policy, data, adv, adv_c, cost_value, d, gamma, cost_reduction):
    g = gradient(policy, data, adv)
    # linearized constraint: J_C + (1/(1-gamma)) E[ratio * A_C] <= d - cost_reduction
    g_c = gradient(policy, data, adv_c) / (1.0 - gamma)
    b = cost_value - d + cost_reduction
    return g, g_c, b


def cpo_step(policy: GaussianPolicy, batch: Batch | BatchData, adv, adv_c, cost_value: float,
             cfg: TrustRegionConfig = TrustRegionConfig(), d: float = 0.0,
             cost_reduction: float = 0.0, gamma: float = GAMMA):
    data = batch if isinstance(batch, BatchData) else BatchData.from_batch(batch)
    adv = np.asarray(adv, dtype=np.float64)
    adv_c = np.asarray(adv_c, dtype=np.float64)
    g, g_c, b = _constraint_inputs(policy, data, adv, adv_c, cost_value, d, gamma, cost_reduction)
    solver = FisherSolver(policy, data, cfg)
    sol = cpo_direction(g, g_c, b, cfg.target_kl, solver.solve)
    if sol.case == "degenerate":
        if np.any(adv_c) or b > 0:
            warnings.warn("degenerate cost gradient; falling back to a TRPO step", RuntimeWarning)
        new, report = trpo_step(policy, data, adv, cfg)
        report.case = "degenerate"
        report.constraint_estimate = cost_value
        return new, report
    if sol.case == "trpo":
        # same KL-normalized step as trpo_step
        step = natural_step(solver, g)
    else:
        step = sol.step
    slack = max(0.0, -b)
    need_gain = sol.case != "recovery"

    def accept(gain, cost_change, kl):
        if kl > cfg.target_kl:
            return False
        if cost_change / (1.0 - gamma) > slack:
            return False
        return gain > 0 if need_gain else True

    new, report = line_search(policy, step, data, cfg, accept, adv, adv_c)
    report.case = sol.case
    report.constraint_estimate = cost_value
    report.multiplier = sol.nu
    return new, report


def pcpo_step(policy: GaussianPolicy, batch: Batch | BatchData, adv, adv_c, cost_value: float,
              cfg: TrustRegionConfig = TrustRegionConfig(), d: float = 0.0,
              projection: str = "kl", gamma: float = GAMMA, kl_valve: float = 4.0):
    """Analytical PCPO update, no line search. If the realized KL exceeds
    ``kl_valve * target_kl`` the step is halved until it does not."""
    if projection not in ("kl", "l2"):
        raise ValueError("projection must be 'kl' or 'l2'")
    data = batch if isinstance(batch, BatchData) else BatchData.from_batch(batch)
    adv = np.asarray(adv, dtype=np.float64)
    adv_c = np.asarray(adv_c, dtype=np.float64)
    g, g_c, b = _constraint_inputs(policy, data, adv, adv_c, cost_value, d, gamma, 0.0)
    solver = FisherSolver(policy, data, cfg)
    step, projected = pcpo_direction(g, g_c, b, cfg.target_kl, solver.solve,
                                     solver.solve if projection == "kl" else None)
    if not projected:
        if np.any(adv_c) or b > 0:
            warnings.warn("degenerate cost gradient; falling back to a TRPO step", RuntimeWarning)
        new, report = trpo_step(policy, data, adv, cfg)
        report.case = "degenerate"
        report.constraint_estimate = cost_value
        return new, report
    surr0, surr_c0, _ = evaluate(policy, data, adv, adv_c)
    flat0 = policy.flat
    halvings = 0
    while True:
        new = policy.with_flat(flat0 + step)
        surr, surr_c, kl = evaluate(new, data, adv, adv_c)
        if kl <= kl_valve * cfg.target_kl or halvings >= 60:
            break
        step = step / 2.0
        halvings += 1
    report = UpdateReport(kl_after=kl, surrogate_before=surr0, surrogate_after=surr,
                          constraint_estimate=cost_value, accepted_exponent=halvings,
                          case=f"pcpo_{projection}", step=step,
                          cost_surrogate_before=surr_c0, cost_surrogate_after=surr_c)
    return new, report
