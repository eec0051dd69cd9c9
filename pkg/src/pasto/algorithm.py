"""The main optimization loop: smoothed sampling, noisy queries,
importance-weighted estimation, and multiplicative pmf updates.

The loop keeps raw arrays in its hot path; the public operations here and in
the estimator module define the semantics, and the recorded trajectory is
reproducible from them (see the consistency tests).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    InvalidEpsilonError,
    NonDifferentiableObjectiveError,
    NonFiniteGradientError,
)
from .objective import _check_dim, _value_and_grad, _value_from_z, objective_value_batch
from .types import InverseSqrtEpsilon, Objective, PastoConfig, Pmf, Trajectory, WeightVector

# Multiplicative updates beyond exp(30) per step usually mean the estimate cap
# or the step size is too aggressive; the loop warns once per run.
GRADIENT_SCALE_WARNING = 30.0

_TINY = float(np.finfo(float).tiny)


def _smoothed(weights: np.ndarray, eps: float) -> np.ndarray:
    s = weights.sum()
    if eps > 0.0:
        base = weights * ((1.0 - eps) / s)
        base += eps / weights.size
        return base
    return weights / s


def _multiplicative_update(weights: np.ndarray, gradient: np.ndarray, gamma: float) -> np.ndarray:
    # Log-space form of w * exp(gamma * g) rescaled by its max entry: identical
    # in real arithmetic, but immune to exp overflow.  Entries that underflow
    # are floored at the smallest normal double so weights stay positive.
    x = np.log(weights)
    x += gamma * gradient
    x -= x.max()
    np.exp(x, out=x)
    np.maximum(x, _TINY, out=x)
    return x


def smooth_pmf(w: WeightVector, eps: float) -> Pmf:
    """Mix the normalized weights with the uniform pmf: (1-eps) w/|w| + eps/K.

    Every entry of the result is at least eps/K, which floors sampling
    probabilities and thereby caps importance weights.
    """
    if not (math.isfinite(eps) and 0.0 < eps <= 1.0):
        raise InvalidEpsilonError(f"eps must lie in (0, 1], got {eps}")
    return Pmf._from_normalized(_smoothed(w.weights, eps))


def kl_proximal_step(w: WeightVector, gradient, gamma: float) -> WeightVector:
    """Closed-form KL-proximal ascent step: scale each weight by exp(gamma * g).

    The result is rescaled by its maximum entry, which leaves the induced pmf
    unchanged and prevents overflow over long horizons.
    """
    g = np.asarray(gradient, dtype=float)
    if g.shape != w.weights.shape:
        raise DimensionMismatchError(
            f"gradient has shape {g.shape}, expected {w.weights.shape}"
        )
    if not np.isfinite(g).all():
        raise NonFiniteGradientError("gradient entries must be finite")
    if not (math.isfinite(gamma) and gamma > 0.0):
        raise ConfigError(f"gamma must be positive, got {gamma}")
    return WeightVector(_multiplicative_update(w.weights, g, gamma))


def _epsilon_series(config: PastoConfig, horizon: int) -> np.ndarray:
    """config.epsilon_at evaluated for t = 1..horizon (vectorized where possible)."""
    schedule = config.epsilon
    if isinstance(schedule, InverseSqrtEpsilon):
        t = np.arange(1, horizon + 1, dtype=float)
        series = schedule.scale / np.sqrt(t + schedule.shift)
    else:
        series = np.array([schedule(t) for t in range(1, horizon + 1)], dtype=float)
    return np.minimum(series, 1.0)


def _validate_run(env, objective: Objective, config: PastoConfig) -> None:
    if not objective.differentiable:
        raise NonDifferentiableObjectiveError(
            "the optimization loop needs a differentiable (soft) objective"
        )
    _check_dim(objective, env.m)
    if config.parallel_q > env.k:
        raise ConfigError(
            f"parallel_q {config.parallel_q} exceeds the environment's {env.k} arms"
        )
    if config.prior is not None and (config.prior.m != env.m or config.prior.k != env.k):
        raise DimensionMismatchError(
            f"prior has shape {(config.prior.m, config.prior.k)}, "
            f"environment expects {(env.m, env.k)}"
        )


def _true_objectives(env, objective: Objective, pmfs: np.ndarray) -> np.ndarray | None:
    ground_truth = getattr(env, "ground_truth", None)
    if ground_truth is None:
        return None
    horizon = pmfs.shape[0]
    if getattr(env, "stationary", True):
        mu = ground_truth(1).values
        return objective_value_batch(objective, pmfs @ mu.T)
    out = np.empty(horizon)
    for i in range(horizon):
        z = ground_truth(i + 1).values @ pmfs[i]
        out[i] = _value_from_z(objective, z)
    return out


def _run_loop(env, objective: Objective, config: PastoConfig, *,
              history_average: bool, beta_exponent: float = 0.0) -> tuple[Pmf, Trajectory]:
    _validate_run(env, objective, config)
    k, m = env.k, env.m
    horizon, q, gamma = config.horizon, config.parallel_q, config.gamma
    cap_override = config.cap
    query_batch = env.query_batch
    rng = np.random.default_rng(config.rng_seed)
    # Arm draws are independent of the environment's noise stream, so they can
    # be drawn up front without changing anything but call overhead.
    draws = rng.random((horizon, q))
    eps_rec = _epsilon_series(config, horizon)

    weights = np.ones(k)
    if config.prior is not None and config.prior_weight > 0.0:
        total = config.prior.values * config.prior_weight
        count = float(config.prior_weight)
    else:
        total = np.zeros((m, k))
        count = 0.0
    tracked = np.zeros(m)  # inner value for the tracked-average variant

    pmfs = np.empty((horizon, k))
    gradients = np.empty((horizon, k))
    arms_rec = np.empty((horizon, q), dtype=np.int64)
    metrics_rec = np.empty((horizon, q, m))
    probs_rec = np.empty((horizon, q))
    est_obj = np.empty(horizon)

    max_abs_metric = 0.0
    warned = False
    single = q == 1
    query = env.query

    for i in range(horizon):
        t = i + 1
        eps = eps_rec[i]
        p = _smoothed(weights, eps)

        if single:
            arm = int(p.cumsum().searchsorted(draws[i, 0], side="right"))
            if arm >= k:
                arm = k - 1
            values = query(arm, t)  # (m,)
        else:
            arms = p.cumsum().searchsorted(draws[i], side="right")
            np.minimum(arms, k - 1, out=arms)
            values = query_batch(arms, t)  # (m, q)

        batch_max = max(float(values.max()), -float(values.min()))
        if batch_max > max_abs_metric:
            max_abs_metric = batch_max
        if cap_override is not None:
            cap = cap_override
        elif max_abs_metric > 0.0:
            cap = max_abs_metric * k / eps
        else:
            cap = float("inf")

        if single:
            prob = float(p[arm])
            ratio = values / prob
        else:
            probs = p[arms]
            ratio = values / probs
        np.minimum(ratio, cap, out=ratio)
        np.maximum(ratio, -cap, out=ratio)

        if history_average:
            if single:
                total[:, arm] += ratio
            else:
                unit = np.zeros((m, k))
                np.add.at(unit, (slice(None), arms), ratio)
                unit /= q
                total += unit
            count += 1.0
            basis = total / count
            z = basis @ p
        else:
            basis = np.zeros((m, k))
            if single:
                basis[:, arm] = ratio
            else:
                np.add.at(basis, (slice(None), arms), ratio)
                basis /= q
            beta = float(t) ** -beta_exponent
            tracked *= 1.0 - beta
            tracked += beta * (basis @ p)
            z = tracked
        value, grad_f = _value_and_grad(objective, z)
        g = basis.T @ grad_f

        if not warned:
            scale = gamma * max(float(g.max()), -float(g.min()))
            if scale > GRADIENT_SCALE_WARNING:
                warnings.warn(
                    f"gamma * max|g| = {scale:.1f} exceeds {GRADIENT_SCALE_WARNING:.0f}; "
                    "consider a smaller step size or a tighter estimate cap",
                    RuntimeWarning,
                    stacklevel=3,
                )
                warned = True

        pmfs[i] = p
        gradients[i] = g
        est_obj[i] = value
        if single:
            arms_rec[i, 0] = arm
            metrics_rec[i, 0] = values
            probs_rec[i, 0] = prob
        else:
            arms_rec[i] = arms
            metrics_rec[i] = values.T
            probs_rec[i] = probs

        weights = _multiplicative_update(weights, g, gamma)

    trajectory = Trajectory(
        pmfs=pmfs,
        gradients=gradients,
        arms=arms_rec,
        observed_metrics=metrics_rec,
        sample_probs=probs_rec,
        epsilons=eps_rec,
        estimated_objectives=est_obj,
        true_objectives=_true_objectives(env, objective, pmfs),
        p_bar=Pmf._from_normalized(pmfs.mean(axis=0)),
    )
    return trajectory.p_bar, trajectory


def pasto_run(env, objective: Objective, config: PastoConfig) -> tuple[Pmf, Trajectory]:
    """Run the full loop for config.horizon iterations and return the averaged
    pmf together with the complete trajectory.

    Each iteration smooths the current weights into a sampling pmf, draws
    parallel_q arms i.i.d. from it, turns the noisy observations into a capped
    importance-weighted estimate, folds that into the running history average,
    takes the plug-in gradient there, and applies the multiplicative update.
    Deterministic given config.rng_seed and the environment's seed.
    """
    return _run_loop(env, objective, config, history_average=True)
