"""Sparse reconstruction: per-view GAMP, the joint multi-view turbo estimator
with EM parameter learning, and classical baselines."""

from .baselines import ls_baseline, sals_oracle, sp_baseline
from .gamp import GampConfig, GampResult, bg_denoise, gamp_single, real_stack
from .turbo import (
    SolverOutput,
    StructureResult,
    em_turbo_gamp,
    em_update,
    steady_state_priors,
    structure_pass,
)

__all__ = [
    "GampConfig",
    "GampResult",
    "SolverOutput",
    "StructureResult",
    "bg_denoise",
    "em_turbo_gamp",
    "em_update",
    "gamp_single",
    "ls_baseline",
    "real_stack",
    "sals_oracle",
    "sp_baseline",
    "steady_state_priors",
    "structure_pass",
]
