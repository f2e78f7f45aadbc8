"""Photon-counting witness of opto-mechanical entanglement.

Closed-form click statistics, a truncated Fock-space oracle, the witness
and its separable bound, setting optimisation and run planning.
"""

from .analytic import hardware_to_params, probability_set
from .exceptions import (
    CalibrationDegenerateError,
    ConfigError,
    InconsistentProbabilitiesError,
    NoViolationError,
    NumericalError,
    UnderTruncationError,
    WitnessError,
)
from .fock import TwoModeState, oracle_probability_set, simulate_protocol
from .optimize import OptimizationResult, SweepRow, WitnessOptimizer, optimize_p, optimize_setting, sweep_n0, sweep_T
from .params import ClickProbabilitySet, HardwareParams, SystemParams
from .statistics import RunPlan, calibration_constants, plan_runs, required_runs, simulate_experiment, simulate_replications
from .witness import DisplacementSetting, WitnessEvaluation, evaluate, separable_bound

__version__ = "0.1.0"

__all__ = [
    "CalibrationDegenerateError",
    "ClickProbabilitySet",
    "ConfigError",
    "DisplacementSetting",
    "HardwareParams",
    "InconsistentProbabilitiesError",
    "NoViolationError",
    "NumericalError",
    "OptimizationResult",
    "RunPlan",
    "SweepRow",
    "SystemParams",
    "TwoModeState",
    "UnderTruncationError",
    "WitnessError",
    "WitnessEvaluation",
    "WitnessOptimizer",
    "calibration_constants",
    "evaluate",
    "hardware_to_params",
    "optimize_p",
    "optimize_setting",
    "oracle_probability_set",
    "plan_runs",
    "probability_set",
    "required_runs",
    "separable_bound",
    "simulate_experiment",
    "simulate_replications",
    "simulate_protocol",
    "sweep_T",
    "sweep_n0",
]
