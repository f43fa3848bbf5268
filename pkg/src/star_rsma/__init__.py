"""Max-min energy-efficient rate splitting over a mode-switching STAR-RIS with
finite-blocklength rates."""
from .channel import (ChannelSet, ScenarioConfig, StarRisState, compose_all, compose_channel,
                      default_mode_mask, generate_channels, reflect_only_mask, trial_rng)
from .harness import ExperimentSpec, ResultRow, emit, run_experiment, wire_baseline
from .numerics import (ConstraintViolationError, InvalidInputError, NumericDomainError,
                       inv_q, q_function)
from .rates import BeamformerSet, FblParams, RateReport, common_rate, evaluate, private_rate
from .solver import SolverSettings, SolveResult, allocate_common_rate, optimize

__all__ = [
    "BeamformerSet", "ChannelSet", "ConstraintViolationError", "ExperimentSpec", "FblParams",
    "InvalidInputError", "NumericDomainError", "RateReport", "ResultRow", "ScenarioConfig",
    "SolveResult", "SolverSettings", "StarRisState", "allocate_common_rate", "common_rate",
    "compose_all", "compose_channel", "default_mode_mask", "emit", "evaluate",
    "generate_channels", "inv_q", "optimize", "private_rate", "q_function",
    "reflect_only_mask", "run_experiment", "trial_rng", "wire_baseline",
]
