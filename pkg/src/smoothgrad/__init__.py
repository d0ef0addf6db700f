"""Gradient estimation for programs with input-dependent branches."""

from .api import GradResult, SmoothProgram, run_ad, run_crisp
from .baselines import EstimatorConfig, ipa_estimate, pgo_estimate, rf_estimate
from .dgo import DgoConfig, dgo_estimate
from .errors import (AdNumericError, ConfigError, DegenerateMergeError, EmptyStateError,
                     RunawayLoopError, SampleError, SmoothGradError, SmoothUsageError,
                     UnsupportedOpError)
from .si import RestrictConfig, si_execute

__all__ = [
    "AdNumericError", "ConfigError", "DegenerateMergeError", "DgoConfig", "EmptyStateError",
    "EstimatorConfig", "GradResult", "RestrictConfig", "RunawayLoopError", "SampleError",
    "SmoothGradError", "SmoothProgram", "SmoothUsageError", "UnsupportedOpError",
    "dgo_estimate", "ipa_estimate", "pgo_estimate", "rf_estimate", "run_ad", "run_crisp",
    "si_execute",
]
