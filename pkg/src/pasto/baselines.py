"""Reference optimizers: exhaustive single-arm search, exact-gradient mirror
ascent over the simplex, a two-arm grid oracle, and the tracked-inner-value
stochastic baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithm import _run_loop
from .errors import ConfigError, DimensionMismatchError, NonDifferentiableObjectiveError, PastoError
from .objective import _check_dim, _grad_vector, _value_from_z, objective_value_batch
from .types import MetricMatrix, Objective, PastoConfig, Pmf, Trajectory

DOMINANCE_TOL = 1e-9
DEFAULT_ORACLE_ITERS = 10_000
DEFAULT_BETA_EXPONENT = 0.75


def single_best_oracle(mu: MetricMatrix, objective: Objective) -> tuple[int, float]:
    """Best single arm under the noiseless objective; ties break to the lowest
    index.  Hard-barrier objectives are allowed (values may be -inf)."""
    _check_dim(objective, mu.m)
    values = objective_value_batch(objective, mu.values.T)
    arm = int(np.argmax(values))
    return arm, float(values[arm])


def prob_oracle(mu: MetricMatrix, objective: Objective,
                iters: int = DEFAULT_ORACLE_ITERS) -> tuple[Pmf, float]:
    """Maximize the noiseless soft objective over the simplex by deterministic
    exponentiated gradient with a decaying step, returning the best iterate.

    The incumbent is seeded with every single-arm pmf, so the returned value
    can never fall below the deterministic optimum even when the maximizer
    sits on a vertex that the multiplicative iterates approach only
    asymptotically.
    """
    if not objective.differentiable:
        raise NonDifferentiableObjectiveError("prob_oracle needs a differentiable objective")
    _check_dim(objective, mu.m)
    if iters < 1:
        raise ConfigError(f"iters must be positive, got {iters}")
    values = mu.values
    k = mu.k

    vertex_values = objective_value_batch(objective, values.T)
    best_arm = int(np.argmax(vertex_values))
    best_p = np.zeros(k)
    best_p[best_arm] = 1.0
    best_value = float(vertex_values[best_arm])

    w = np.ones(k)
    p = w / k
    value = _value_from_z(objective, values @ p)
    if value > best_value:
        best_value, best_p = value, p.copy()

    g0 = values.T @ _grad_vector(objective, values @ p)
    step0 = 1.0 / max(1.0, float(np.abs(g0).max()))
    for t in range(1, iters + 1):
        g = values.T @ _grad_vector(objective, values @ p)
        x = (step0 / math.sqrt(t)) * g
        x -= x.max()
        w = w * np.exp(x)
        w /= w.max()
        p_new = w / w.sum()
        value = _value_from_z(objective, values @ p_new)
        if value > best_value:
            best_value, best_p = value, p_new
        if float(np.abs(p_new - p).max()) < 1e-14:
            break
        p = p_new
    return Pmf(best_p), best_value


def two_arm_grid_oracle(mu: MetricMatrix, objective: Objective,
                        step: float = 1e-4) -> tuple[Pmf, float]:
    """Exhaustive probabilistic optimum for K=2 on a 1-d grid over [0, 1].

    Works for hard-barrier objectives too; this is the reference optimum used
    when the mirror-ascent oracle does not apply.
    """
    if mu.k != 2:
        raise DimensionMismatchError(f"grid oracle handles exactly 2 arms, got {mu.k}")
    _check_dim(objective, mu.m)
    n = int(round(1.0 / step))
    q = np.linspace(0.0, 1.0, n + 1)
    pmfs = np.stack([q, 1.0 - q], axis=1)
    vals = objective_value_batch(objective, pmfs @ mu.values.T)
    i = int(np.argmax(vals))
    return Pmf(pmfs[i]), float(vals[i])


@dataclass(frozen=True)
class DominanceResult:
    prob_value: float
    det_value: float
    gap: float


def dominance_check(mu: MetricMatrix, objective: Objective,
                    iters: int = DEFAULT_ORACLE_ITERS) -> DominanceResult:
    """Both optima plus their gap; raises if the probabilistic optimum falls
    below the deterministic one beyond tolerance (it never should)."""
    _, det_value = single_best_oracle(mu, objective)
    _, prob_value = prob_oracle(mu, objective, iters)
    gap = prob_value - det_value
    if gap < -DOMINANCE_TOL:
        raise PastoError(
            f"probabilistic optimum {prob_value} fell below single-best {det_value}"
        )
    return DominanceResult(prob_value=prob_value, det_value=det_value, gap=gap)


def sscgd_run(env, objective: Objective, config: PastoConfig,
              beta_exponent: float = DEFAULT_BETA_EXPONENT) -> tuple[Pmf, Trajectory]:
    """Stochastic compositional baseline: the same smoothed sampling and
    multiplicative update, but the inner metric value is tracked as
    z_t = (1 - beta_t) z_{t-1} + beta_t * (U_t p_t) with beta_t = t^-beta_exponent,
    and the gradient uses the current sparse estimate U_t instead of the
    history average.

    The schedule default t^(-3/4) is this implementation's choice (the method
    is usually cited without one) and is disclosed in experiment metadata.
    """
    if not (math.isfinite(beta_exponent) and beta_exponent > 0.0):
        raise ConfigError(f"beta_exponent must be positive, got {beta_exponent}")
    return _run_loop(env, objective, config, history_average=False,
                     beta_exponent=beta_exponent)
