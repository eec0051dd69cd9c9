"""Sparse importance-weighted metric estimates and their running history average."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ArmOutOfRangeError,
    ConfigError,
    DimensionMismatchError,
    EmptyVectorError,
    ZeroProbabilityError,
)
from .objective import objective_grad
from .types import MetricMatrix, Objective, Observation, Pmf


def adaptive_cap(max_abs_metric: float, k: int, eps: float) -> float:
    """Default clamp for importance-weighted entries: max|metric| * K / eps.

    With the smoothing floor eps/K on sampling probabilities this bounds every
    post-division entry, so it acts as an overflow guard rather than a bias.
    """
    if max_abs_metric <= 0.0:
        return float("inf")
    return max_abs_metric * k / eps


def importance_weighted_estimate(obs: Observation, k: int, m: int, cap: float) -> MetricMatrix:
    """One-column estimate of the full metric matrix from a single observation.

    Every column is zero except the sampled arm's, which holds
    metrics / sample_prob with each entry clamped into [-cap, cap].
    """
    if not cap > 0.0:
        raise ConfigError(f"cap must be positive (inf allowed), got {cap}")
    if obs.sample_prob <= 0.0:
        raise ZeroProbabilityError(f"sample probability must be positive, got {obs.sample_prob}")
    if not 0 <= obs.arm < k:
        raise ArmOutOfRangeError(f"arm {obs.arm} outside [0, {k})")
    if obs.metrics.size != m:
        raise DimensionMismatchError(f"observation has {obs.metrics.size} metrics, expected {m}")
    out = np.zeros((m, k))
    column = obs.metrics / obs.sample_prob
    np.clip(column, -cap, cap, out=column)
    out[:, obs.arm] = column
    return MetricMatrix(out)


@dataclass(frozen=True, eq=False)
class RunningMean:
    """Weighted running average of M x K estimate matrices.

    Stores the weighted sum so that recursive absorption and a one-shot batch
    mean agree to the last few ulps.  count includes the prior's weight.
    """

    total: np.ndarray
    count: float

    @classmethod
    def empty(cls, m: int, k: int, prior: MetricMatrix | None = None,
              prior_weight: float = 1.0) -> "RunningMean":
        if prior is not None and prior_weight > 0.0:
            if prior.m != m or prior.k != k:
                raise DimensionMismatchError(
                    f"prior has shape {(prior.m, prior.k)}, expected {(m, k)}"
                )
            return cls(total=prior.values * prior_weight, count=float(prior_weight))
        return cls(total=np.zeros((m, k)), count=0.0)

    @property
    def mean(self) -> MetricMatrix:
        if self.count <= 0.0:
            return MetricMatrix(np.zeros_like(self.total))
        return MetricMatrix(self.total / self.count)

    @property
    def m(self) -> int:
        return self.total.shape[0]

    @property
    def k(self) -> int:
        return self.total.shape[1]


def absorb(state: RunningMean, estimates: Sequence[MetricMatrix]) -> RunningMean:
    """Fold one iteration's estimates into the running mean.

    When several estimates come from parallel queries of the same iteration,
    their average enters as a single unit of weight, preserving the
    one-unit-per-iteration semantics of the history average.
    """
    if len(estimates) == 0:
        raise EmptyVectorError("absorb needs at least one estimate")
    shape = state.total.shape
    for est in estimates:
        if est.values.shape != shape:
            raise DimensionMismatchError(
                f"estimate has shape {est.values.shape}, expected {shape}"
            )
    if len(estimates) == 1:
        unit = estimates[0].values
    else:
        unit = estimates[0].values.copy()
        for est in estimates[1:]:
            unit += est.values
        unit /= len(estimates)
    return RunningMean(total=state.total + unit, count=state.count + 1.0)


def pasto_gradient(estimate: MetricMatrix, p: Pmf, objective: Objective) -> np.ndarray:
    """Plug-in objective gradient over the simplex: estimate^T grad_f(estimate @ p)."""
    if estimate.k != p.k:
        raise DimensionMismatchError(
            f"estimate has {estimate.k} arms but the pmf has {p.k}"
        )
    z = estimate.values @ p.probs
    return estimate.values.T @ objective_grad(objective, z)

