"""Anchor-based relative similarity testing with learned kernels and directions."""

__version__ = "0.1.0"

from .errors import (AMDError, DegenerateDataError, HarnessError, InputError, NumericError,
                     UnsupportedSpecError)
from .estimator import (DiscreteDistribution, SampleTriple, amd_discrete, branch_objective_and_gradient,
                        h_matrix, population_dk_discrete, statistic, u_statistic, variance_estimate)
from .kernels import (DeepKernelParams, GaussianParams, NetworkParams, gram_block, kernel_eval,
                      median_heuristic)
from .phase1 import Phase1Config, Phase1Result, generate_augmented, optimize_branch, run_phase1
from .phase2 import TestConfig, TestOutcome, run_amd_b, run_oriented, run_phase2

__all__ = [
    "AMDError", "DegenerateDataError", "HarnessError", "InputError", "NumericError",
    "UnsupportedSpecError", "DiscreteDistribution", "SampleTriple", "amd_discrete",
    "branch_objective_and_gradient", "h_matrix", "population_dk_discrete", "statistic",
    "u_statistic", "variance_estimate", "DeepKernelParams", "GaussianParams", "NetworkParams",
    "gram_block", "kernel_eval", "median_heuristic", "Phase1Config", "Phase1Result",
    "generate_augmented", "optimize_branch", "run_phase1", "TestConfig", "TestOutcome",
    "run_amd_b", "run_oriented", "run_phase2",
]
