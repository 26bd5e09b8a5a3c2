"""Delayed-feedback bandits with a hybrid Tsallis/negentropy FTRL learner."""
from .engine import DelayedBanditFTRL, EngineFlags, RunTrace, importance_weighted_estimate, run
from .environments import (Environment, ExplicitDelays, FixedDelay, ObliviousEnv, RandomDelays,
                           StochasticEnv, flip_stress_matrix)
from .ftrl_core import (RegularizerWeights, SolverDiagnostic, SolverError, invert_marginal,
                        marginal_derivative, objective_value, solve_ftrl, solve_ftrl_full)
from .schedules import TuningConstants, tuning_constants

__all__ = [
    "DelayedBanditFTRL", "EngineFlags", "Environment", "ExplicitDelays", "FixedDelay",
    "ObliviousEnv", "RandomDelays", "RegularizerWeights", "RunTrace", "SolverDiagnostic",
    "SolverError", "StochasticEnv", "TuningConstants", "flip_stress_matrix",
    "importance_weighted_estimate", "invert_marginal", "marginal_derivative", "objective_value",
    "run", "solve_ftrl", "solve_ftrl_full", "tuning_constants",
]
