"""Policy-update rules sharing one trust-region backbone."""
from .agents import ALGORITHMS, Agent, make_agent
from .penalty import (ConstraintConfig, LagrangeState, MultiplierNet, barrier_weight, dual_ascent,
                      fac_step, ipo_step, lagrangian_step, log_barrier)
from .projection import CpoSolution, cpo_direction, cpo_step, pcpo_direction, pcpo_step
from .shields import (QCostNet, SafetyLayerModel, safety_layer_fit, safety_layer_project,
                      usl_correct, usl_fit_qc)
from .trust_region import (BatchData, FisherSolver, TrustRegionConfig, UpdateReport, line_search,
                           natural_step, trpo_step)

__all__ = [
    "ALGORITHMS", "Agent", "make_agent", "ConstraintConfig", "LagrangeState", "MultiplierNet",
    "barrier_weight", "dual_ascent", "fac_step", "ipo_step", "lagrangian_step", "log_barrier",
    "CpoSolution", "cpo_direction", "cpo_step", "pcpo_direction", "pcpo_step", "QCostNet",
    "SafetyLayerModel", "safety_layer_fit", "safety_layer_project", "usl_correct", "usl_fit_qc",
    "BatchData", "FisherSolver", "TrustRegionConfig", "UpdateReport", "line_search",
    "natural_step", "trpo_step",
]
