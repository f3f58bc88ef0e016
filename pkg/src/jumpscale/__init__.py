"""Scaled quantum-jump Monte Carlo for a damped harmonic oscillator.

Jump probabilities are multiplied by a factor beta while the deterministic
flow is left untouched; the unscaled expectation value is then reconstructed
from the scaled ensemble.  Both the standard wave-function unravelling (all
rates nonnegative) and the doubled-space unravelling (rates may turn
negative) are supported.
"""

from .coefficients import (
    OhmicParams,
    OscillatorModel,
    channel_rates,
    classify,
    constant_rate_model,
    delta_coefficient,
    gamma_coefficient,
    qbm_model,
)
from .ensemble import PRESETS, EnsembleResult, RunConfig, compare, run_ensemble
from .errors import ConfigError, GuardTrip, LeakageError, OracleError
from .estimator import ScalingLedger, TermBreakdown, decompose, reconstruct, standard_error, validity_error
from .hilbert import DoubledVector, FockVector, StateSpec, make_initial_state
from .oracle import DensityMatrix, heating_moment, integrate_master, path_integral_expectation
from .trajectories import TrajectoryConfig, TrajectoryRecord, run_doubled_trajectory, run_mcwf_trajectory

__all__ = [
    "ConfigError",
    "DensityMatrix",
    "DoubledVector",
    "EnsembleResult",
    "FockVector",
    "GuardTrip",
    "LeakageError",
    "OhmicParams",
    "OracleError",
    "OscillatorModel",
    "PRESETS",
    "RunConfig",
    "ScalingLedger",
    "StateSpec",
    "TermBreakdown",
    "TrajectoryConfig",
    "TrajectoryRecord",
    "channel_rates",
    "classify",
    "compare",
    "constant_rate_model",
    "decompose",
    "delta_coefficient",
    "gamma_coefficient",
    "heating_moment",
    "integrate_master",
    "make_initial_state",
    "path_integral_expectation",
    "qbm_model",
    "reconstruct",
    "run_doubled_trajectory",
    "run_ensemble",
    "run_mcwf_trajectory",
    "standard_error",
    "validity_error",
]
