"""Probabilistic strategic-parameter tuning.

Learn a probability distribution over K discrete parameter choices that
maximizes a constrained multi-metric objective from sparse, noisy
observations.  The package bundles the optimization loop, noiseless oracles
and a stochastic-compositional baseline, simulated environments, and a
deterministic Monte Carlo experiment harness with a CLI.
"""

from .algorithm import kl_proximal_step, pasto_run, smooth_pmf
from .baselines import (
    DominanceResult,
    dominance_check,
    prob_oracle,
    single_best_oracle,
    sscgd_run,
    two_arm_grid_oracle,
)
from .environments import (
    DriftEnvironment,
    Environment,
    relative_gain,
    setting_a,
    setting_b,
)
from .errors import (
    ArmOutOfRangeError,
    ConfigError,
    DegenerateGapError,
    DimensionMismatchError,
    EmptyVectorError,
    InvalidEpsilonError,
    NegativeEntryError,
    NonDifferentiableObjectiveError,
    NonFiniteEntryError,
    NonFiniteGradientError,
    PastoError,
    ZeroProbabilityError,
    ZeroSumError,
)
from .estimator import (
    RunningMean,
    absorb,
    adaptive_cap,
    importance_weighted_estimate,
    pasto_gradient,
)
from .harness import (
    ExperimentConfig,
    ResultBundle,
    config_to_dict,
    emit,
    load_config,
    parse_config,
    run_experiment,
)
from .objective import objective_grad, objective_value, objective_value_batch
from .types import (
    ConstantEpsilon,
    Guardrail,
    GuardrailKind,
    InverseSqrtEpsilon,
    MetricMatrix,
    Objective,
    Observation,
    PastoConfig,
    Pmf,
    Trajectory,
    TrajectoryRecord,
    WeightVector,
    hard_guardrail,
    make_pmf,
    soft_guardrail,
)

__version__ = "0.1.0"

__all__ = [
    "ArmOutOfRangeError",
    "ConfigError",
    "ConstantEpsilon",
    "DegenerateGapError",
    "DimensionMismatchError",
    "DominanceResult",
    "DriftEnvironment",
    "EmptyVectorError",
    "Environment",
    "ExperimentConfig",
    "Guardrail",
    "GuardrailKind",
    "InvalidEpsilonError",
    "InverseSqrtEpsilon",
    "MetricMatrix",
    "NegativeEntryError",
    "NonDifferentiableObjectiveError",
    "NonFiniteEntryError",
    "NonFiniteGradientError",
    "Objective",
    "Observation",
    "PastoConfig",
    "PastoError",
    "Pmf",
    "ResultBundle",
    "RunningMean",
    "Trajectory",
    "TrajectoryRecord",
    "WeightVector",
    "ZeroProbabilityError",
    "ZeroSumError",
    "absorb",
    "adaptive_cap",
    "config_to_dict",
    "dominance_check",
    "emit",
    "hard_guardrail",
    "importance_weighted_estimate",
    "kl_proximal_step",
    "load_config",
    "make_pmf",
    "objective_grad",
    "objective_value",
    "objective_value_batch",
    "parse_config",
    "pasto_gradient",
    "pasto_run",
    "prob_oracle",
    "relative_gain",
    "run_experiment",
    "setting_a",
    "setting_b",
    "single_best_oracle",
    "smooth_pmf",
    "soft_guardrail",
    "sscgd_run",
    "two_arm_grid_oracle",
]
