"""Evaluation and gradients for penalty-form objectives.

An objective maximizes one primary metric and subtracts
penalty * min(0, value - threshold)^2 for each soft-square guardrail.  Hard
barriers return -inf when their metric falls strictly below the threshold
(the value at exactly the threshold is feasible) and are accepted for
reporting and oracles only, never for gradient-based optimization.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, NonDifferentiableObjectiveError
from .types import Objective


def _check_dim(objective: Objective, m: int) -> None:
    if objective.max_metric_index >= m:
        raise DimensionMismatchError(
            f"objective references metric {objective.max_metric_index} "
            f"but only {m} metrics are present"
        )


def _value_from_z(objective: Objective, z: np.ndarray) -> float:
    hard_idx = objective._hard_idx  # type: ignore[attr-defined]
    if hard_idx.size and bool((z[hard_idx] < objective._hard_c).any()):  # type: ignore[attr-defined]
        return float("-inf")
    value = float(z[objective.primary_metric])
    soft_idx = objective._soft_idx  # type: ignore[attr-defined]
    if soft_idx.size:
        d = np.minimum(z[soft_idx] - objective._soft_c, 0.0)  # type: ignore[attr-defined]
        value -= float((objective._soft_lam * d * d).sum())  # type: ignore[attr-defined]
    return value


def _grad_vector(objective: Objective, z: np.ndarray) -> np.ndarray:
    g = np.zeros(z.size)
    g[objective.primary_metric] = 1.0
    soft_idx = objective._soft_idx  # type: ignore[attr-defined]
    if soft_idx.size:
        d = np.minimum(z[soft_idx] - objective._soft_c, 0.0)  # type: ignore[attr-defined]
        g[soft_idx] = -2.0 * objective._soft_lam * d  # type: ignore[attr-defined]
    return g


def _value_and_grad(objective: Objective, z: np.ndarray) -> tuple[float, np.ndarray]:
    # Fused soft value and gradient for the hot loop; bitwise-identical to
    # calling _value_from_z and _grad_vector separately.
    value = float(z[objective.primary_metric])
    g = np.zeros(z.size)
    g[objective.primary_metric] = 1.0
    soft_idx = objective._soft_idx  # type: ignore[attr-defined]
    if soft_idx.size == 1:
        i = soft_idx[0]
        d = min(float(z[i]) - objective._soft_c[0], 0.0)  # type: ignore[attr-defined]
        lam = objective._soft_lam[0]  # type: ignore[attr-defined]
        value -= lam * d * d
        g[i] = -2.0 * lam * d
    elif soft_idx.size:
        d = np.minimum(z[soft_idx] - objective._soft_c, 0.0)  # type: ignore[attr-defined]
        value -= float((objective._soft_lam * d * d).sum())  # type: ignore[attr-defined]
        g[soft_idx] = -2.0 * objective._soft_lam * d  # type: ignore[attr-defined]
    return value, g


def objective_value(objective: Objective, z) -> float:
    """Objective at the metric vector z; -inf when a hard barrier is violated."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatchError(f"metric vector must be 1-dimensional, got shape {z.shape}")
    _check_dim(objective, z.size)
    return _value_from_z(objective, z)


def objective_grad(objective: Objective, z) -> np.ndarray:
    """Gradient of the soft objective at z.

    The primary entry is 1; each soft guardrail entry is
    -2 * penalty * min(0, z - threshold), which is 0 at the kink (both
    one-sided derivatives vanish there).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise DimensionMismatchError(f"metric vector must be 1-dimensional, got shape {z.shape}")
    _check_dim(objective, z.size)
    if not objective.differentiable:
        raise NonDifferentiableObjectiveError(
            "objective has hard-barrier guardrails and no gradient"
        )
    return _grad_vector(objective, z)


def objective_value_batch(objective: Objective, zs) -> np.ndarray:
    """Vectorized objective_value over rows of an (N, M) array."""
    zs = np.asarray(zs, dtype=float)
    if zs.ndim != 2:
        raise DimensionMismatchError(f"batch input must be 2-dimensional, got shape {zs.shape}")
    _check_dim(objective, zs.shape[1])
    out = zs[:, objective.primary_metric].copy()
    soft_idx = objective._soft_idx  # type: ignore[attr-defined]
    if soft_idx.size:
        d = np.minimum(zs[:, soft_idx] - objective._soft_c, 0.0)  # type: ignore[attr-defined]
        out -= (objective._soft_lam * d * d).sum(axis=1)  # type: ignore[attr-defined]
    hard_idx = objective._hard_idx  # type: ignore[attr-defined]
    if hard_idx.size:
        bad = (zs[:, hard_idx] < objective._hard_c).any(axis=1)  # type: ignore[attr-defined]
        out[bad] = float("-inf")
    return out
