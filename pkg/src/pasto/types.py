"""Core value types: pmfs, weight vectors, metric matrices, objectives, run
configuration, and trajectories.

Everything here is an immutable value object; instances are safe to share
across threads and replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .errors import (
    ArmOutOfRangeError,
    ConfigError,
    DimensionMismatchError,
    EmptyVectorError,
    InvalidEpsilonError,
    NegativeEntryError,
    NonFiniteEntryError,
    PastoError,
    ZeroProbabilityError,
    ZeroSumError,
)

PMF_SUM_TOL = 1e-9
PBAR_MEAN_TOL = 1e-9


def _float_vector(raw: object, what: str) -> np.ndarray:
    arr = np.array(raw, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{what} must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyVectorError(f"{what} has no entries")
    return arr


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over K arms; renormalized on construction so small
    floating-point drift never faults."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _float_vector(self.probs, "pmf")
        if not np.isfinite(probs).all():
            raise NonFiniteEntryError("pmf entries must be finite")
        if (probs < 0.0).any():
            raise NegativeEntryError("pmf entries must be nonnegative")
        total = float(probs.sum())
        if total <= 0.0:
            raise ZeroSumError("pmf entries sum to zero")
        if abs(total - 1.0) > 0.0:
            probs = probs / total
        object.__setattr__(self, "probs", probs)

    @classmethod
    def _from_normalized(cls, probs: np.ndarray) -> "Pmf":
        # Fast path for arrays already known to be valid pmfs (internal use).
        out = object.__new__(cls)
        object.__setattr__(out, "probs", probs)
        return out

    @property
    def k(self) -> int:
        return self.probs.size


def make_pmf(raw: Sequence[float] | np.ndarray) -> Pmf:
    """Build a pmf from nonnegative weights, normalizing them to sum to one."""
    return Pmf(raw)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Unnormalized multiplicative weights. Strictly positive and scale-free:
    w and c*w (c > 0) induce the same pmf."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = _float_vector(self.weights, "weight vector")
        if not np.isfinite(weights).all():
            raise NonFiniteEntryError("weights must be finite")
        if (weights <= 0.0).any():
            raise NegativeEntryError("weights must be strictly positive")
        object.__setattr__(self, "weights", weights)

    def to_pmf(self) -> Pmf:
        return Pmf._from_normalized(self.weights / self.weights.sum())

    @property
    def k(self) -> int:
        return self.weights.size


@dataclass(frozen=True, eq=False)
class MetricMatrix:
    """M x K matrix of per-arm metric values (one row per tracked metric)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatchError(
                f"metric matrix must be 2-dimensional, got shape {values.shape}"
            )
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptyVectorError("metric matrix needs at least one metric and one arm")
        if not np.isfinite(values).all():
            raise NonFiniteEntryError("metric matrix entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


class GuardrailKind(str, Enum):
    SOFT_SQUARE = "soft_square"
    HARD_BARRIER = "hard_barrier"


@dataclass(frozen=True)
class Guardrail:
    """Lower-bound constraint on one metric.

    Soft-square guardrails subtract penalty * min(0, value - threshold)^2 from
    the objective; hard barriers send it to -inf below the threshold and carry
    no penalty coefficient.
    """

    metric: int
    threshold: float
    kind: GuardrailKind = GuardrailKind.SOFT_SQUARE
    penalty: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GuardrailKind(self.kind))
        if not isinstance(self.metric, (int, np.integer)) or self.metric < 0:
            raise DimensionMismatchError(f"guardrail metric index must be >= 0, got {self.metric}")
        if not math.isfinite(self.threshold):
            raise NonFiniteEntryError("guardrail threshold must be finite")
        if self.kind is GuardrailKind.SOFT_SQUARE:
            if self.penalty is None:
                raise ConfigError("soft-square guardrails require a penalty coefficient")
            if not math.isfinite(self.penalty):
                raise NonFiniteEntryError("guardrail penalty must be finite")
            if self.penalty < 0.0:
                raise NegativeEntryError("guardrail penalty must be nonnegative")
        elif self.penalty is not None:
            raise ConfigError("hard-barrier guardrails carry no penalty coefficient")


def soft_guardrail(metric: int, threshold: float, penalty: float) -> Guardrail:
    return Guardrail(metric=metric, threshold=threshold, kind=GuardrailKind.SOFT_SQUARE, penalty=penalty)


def hard_guardrail(metric: int, threshold: float) -> Guardrail:
    return Guardrail(metric=metric, threshold=threshold, kind=GuardrailKind.HARD_BARRIER)


@dataclass(frozen=True, eq=False)
class Objective:
    """Maximize one primary metric minus penalties for guardrail violations."""

    primary_metric: int
    guardrails: tuple[Guardrail, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "guardrails", tuple(self.guardrails))
        if not isinstance(self.primary_metric, (int, np.integer)) or self.primary_metric < 0:
            raise DimensionMismatchError(
                f"primary metric index must be >= 0, got {self.primary_metric}"
            )
        indices = [int(self.primary_metric)] + [int(g.metric) for g in self.guardrails]
        if len(set(indices)) != len(indices):
            raise ConfigError(f"objective metric indices must be distinct, got {indices}")
        soft = [g for g in self.guardrails if g.kind is GuardrailKind.SOFT_SQUARE]
        hard = [g for g in self.guardrails if g.kind is GuardrailKind.HARD_BARRIER]
        object.__setattr__(self, "_soft_idx", np.array([g.metric for g in soft], dtype=np.intp))
        object.__setattr__(self, "_soft_c", np.array([g.threshold for g in soft], dtype=float))
        object.__setattr__(self, "_soft_lam", np.array([g.penalty for g in soft], dtype=float))
        object.__setattr__(self, "_hard_idx", np.array([g.metric for g in hard], dtype=np.intp))
        object.__setattr__(self, "_hard_c", np.array([g.threshold for g in hard], dtype=float))
        object.__setattr__(self, "_max_idx", max(indices))

    @property
    def differentiable(self) -> bool:
        return self._hard_idx.size == 0  # type: ignore[attr-defined]

    @property
    def max_metric_index(self) -> int:
        return self._max_idx  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=False)
class Observation:
    """One noisy metric sample for a single queried arm."""

    arm: int
    metrics: np.ndarray
    sample_prob: float

    def __post_init__(self) -> None:
        if not isinstance(self.arm, (int, np.integer)) or self.arm < 0:
            raise ArmOutOfRangeError(f"arm index must be >= 0, got {self.arm}")
        metrics = _float_vector(self.metrics, "observation metrics")
        if not np.isfinite(metrics).all():
            raise NonFiniteEntryError("observed metrics must be finite")
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "arm", int(self.arm))
        if not (0.0 < self.sample_prob <= 1.0):
            raise ZeroProbabilityError(
                f"sample probability must lie in (0, 1], got {self.sample_prob}"
            )


@dataclass(frozen=True)
class InverseSqrtEpsilon:
    """Exploration floor eps_t = scale / sqrt(t + shift)."""

    scale: float
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise InvalidEpsilonError(f"epsilon scale must be positive, got {self.scale}")
        if not (math.isfinite(self.shift) and self.shift >= 0.0):
            raise InvalidEpsilonError(f"epsilon shift must be nonnegative, got {self.shift}")

    def __call__(self, t: int) -> float:
        return self.scale / math.sqrt(t + self.shift)


@dataclass(frozen=True)
class ConstantEpsilon:
    """Fixed exploration amount in (0, 1)."""

    value: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and 0.0 < self.value < 1.0):
            raise InvalidEpsilonError(f"constant epsilon must lie in (0, 1), got {self.value}")

    def __call__(self, t: int) -> float:
        return self.value


EpsilonSchedule = Union[InverseSqrtEpsilon, ConstantEpsilon]


@dataclass(frozen=True, eq=False)
class PastoConfig:
    """Run parameters for the optimization loop.

    prior_weight counts the optional prior estimate as that many
    pseudo-observations in the history average (0 discards it).  cap=None
    selects the adaptive clamp max|observed metric| * K / eps_t for the
    importance-weighted estimates; any positive value (including inf)
    overrides it.
    """

    horizon: int
    gamma: float
    epsilon: EpsilonSchedule = InverseSqrtEpsilon(scale=0.1, shift=10.0)
    parallel_q: int = 1
    prior: MetricMatrix | None = None
    prior_weight: float = 1.0
    cap: float | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not callable(self.epsilon):
            raise ConfigError("epsilon must be an epsilon schedule")
        if not isinstance(self.parallel_q, (int, np.integer)) or self.parallel_q < 1:
            raise ConfigError(f"parallel_q must be a positive integer, got {self.parallel_q}")
        if self.prior is not None and not isinstance(self.prior, MetricMatrix):
            raise ConfigError("prior must be a MetricMatrix or None")
        if not (math.isfinite(self.prior_weight) and self.prior_weight >= 0.0):
            raise ConfigError(f"prior_weight must be nonnegative, got {self.prior_weight}")
        if self.cap is not None and not self.cap > 0.0:
            raise ConfigError(f"cap must be positive (inf allowed), got {self.cap}")
        if not isinstance(self.rng_seed, (int, np.integer)) or not 0 <= self.rng_seed < 2**64:
            raise ConfigError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")

    def epsilon_at(self, t: int) -> float:
        """Realized smoothing at iteration t, clamped into (0, 1]."""
        return min(self.epsilon(t), 1.0)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One iteration of a run, materialized from the trajectory arrays."""

    t: int
    pmf: Pmf
    observations: tuple[Observation, ...]
    gradient: np.ndarray
    epsilon: float
    estimated_objective: float
    true_objective: float | None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-iteration history of a run plus the averaged final pmf.

    Row t-1 of each array belongs to iteration t (1-based).  true_objectives
    is None when the environment exposes no ground truth.
    """

    pmfs: np.ndarray              # (T, K)
    gradients: np.ndarray         # (T, K)
    arms: np.ndarray              # (T, Q)
    observed_metrics: np.ndarray  # (T, Q, M)
    sample_probs: np.ndarray      # (T, Q)
    epsilons: np.ndarray          # (T,)
    estimated_objectives: np.ndarray  # (T,)
    true_objectives: np.ndarray | None
    p_bar: Pmf

    def __post_init__(self) -> None:
        t, k = self.pmfs.shape
        if t < 1:
            raise EmptyVectorError("trajectory needs at least one iteration")
        q = self.arms.shape[1]
        m = self.observed_metrics.shape[2]
        expected = {
            "gradients": (t, k),
            "arms": (t, q),
            "observed_metrics": (t, q, m),
            "sample_probs": (t, q),
            "epsilons": (t,),
            "estimated_objectives": (t,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimensionMismatchError(f"trajectory field {name} has shape {arr.shape}, expected {shape}")
        if self.true_objectives is not None and self.true_objectives.shape != (t,):
            raise DimensionMismatchError("true_objectives must have one entry per iteration")
        if self.p_bar.k != k:
            raise DimensionMismatchError("p_bar arm count does not match the trajectory")
        mean = self.pmfs.mean(axis=0)
        if np.abs(self.p_bar.probs - mean).max() > PBAR_MEAN_TOL:
            raise PastoError("p_bar must equal the arithmetic mean of the recorded pmfs")
        for name in expected:
            getattr(self, name).setflags(write=False)
        self.pmfs.setflags(write=False)
        if self.true_objectives is not None:
            self.true_objectives.setflags(write=False)

    def __len__(self) -> int:
        return self.pmfs.shape[0]

    @property
    def horizon(self) -> int:
        return self.pmfs.shape[0]

    @property
    def k(self) -> int:
        return self.pmfs.shape[1]

    def record(self, t: int) -> TrajectoryRecord:
        """Materialize iteration t (1-based) as a record with typed fields."""
        if not 1 <= t <= len(self):
            raise DimensionMismatchError(f"iteration {t} outside [1, {len(self)}]")
        i = t - 1
        obs = tuple(
            Observation(
                arm=int(self.arms[i, q]),
                metrics=self.observed_metrics[i, q].copy(),
                sample_prob=float(self.sample_probs[i, q]),
            )
            for q in range(self.arms.shape[1])
        )
        true_obj = None if self.true_objectives is None else float(self.true_objectives[i])
        return TrajectoryRecord(
            t=t,
            pmf=Pmf._from_normalized(self.pmfs[i].copy()),
            observations=obs,
            gradient=self.gradients[i].copy(),
            epsilon=float(self.epsilons[i]),
            estimated_objective=float(self.estimated_objectives[i]),
            true_objective=true_obj,
        )
