"""Simulated noisy-reward environments standing in for the online system.

Each environment owns its RNG stream; create one instance per replica.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArmOutOfRangeError, ConfigError, DegenerateGapError, EmptyVectorError
from .types import MetricMatrix, Objective, soft_guardrail

SETTING_A_MU = ((2.0, 0.0), (-2.0, 2.0))
# "Gaussian noise of N(0, 5.0)" is read as variance 5; override noise_std to run
# the std-5 interpretation instead.
SETTING_A_NOISE_VARIANCE = 5.0
SETTING_A_DEFAULT_Q = 1

SETTING_B_THRESHOLD = 0.5
SETTING_B_PENALTY = 5.0
SETTING_B_DEFAULT_Q = 10

RELATIVE_GAIN_MIN_GAP = 1e-9


class Environment:
    """Stationary environment: queries return a ground-truth column plus
    i.i.d. Gaussian noise per metric per call."""

    stationary = True

    def __init__(self, mu, noise_std: float, seed=0):
        self._mu = mu if isinstance(mu, MetricMatrix) else MetricMatrix(mu)
        noise_std = float(noise_std)
        if not (math.isfinite(noise_std) and noise_std >= 0.0):
            raise ConfigError(f"noise_std must be nonnegative, got {noise_std}")
        self.noise_std = noise_std
        self._rng = np.random.default_rng(seed)
        self.k = self._mu.k
        self.m = self._mu.m
        self._values = self._mu.values

    def ground_truth(self, t: int = 1) -> MetricMatrix:
        return self._mu

    def query_batch(self, arms, t: int = 1) -> np.ndarray:
        """Noisy metric columns for the given arms, as an (M, len(arms)) array."""
        arms = np.asarray(arms)
        if arms.size == 0:
            raise EmptyVectorError("query_batch needs at least one arm")
        if arms.size == 1:
            arm = int(arms[0])
            if not 0 <= arm < self.k:
                raise ArmOutOfRangeError(f"arm {arm} outside [0, {self.k})")
        elif int(arms.min()) < 0 or int(arms.max()) >= self.k:
            raise ArmOutOfRangeError(f"arms {arms} outside [0, {self.k})")
        out = self._values[:, arms]
        if self.noise_std > 0.0:
            noise = self._rng.standard_normal(out.shape)
            noise *= self.noise_std
            out += noise
        return out

    def query(self, arm: int, t: int = 1) -> np.ndarray:
        """One noisy sample of every metric for a single arm, as an (M,) vector."""
        arm = int(arm)
        if not 0 <= arm < self.k:
            raise ArmOutOfRangeError(f"arm {arm} outside [0, {self.k})")
        if self.noise_std > 0.0:
            out = self._rng.standard_normal(self.m)
            out *= self.noise_std
            out += self._values[:, arm]
            return out
        return self._values[:, arm].copy()


class DriftEnvironment(Environment):
    """Nonstationary wrapper: a sinusoidal offset on the primary (first)
    metric row, identical across arms."""

    stationary = False

    def __init__(self, mu, noise_std: float, amplitude: float, period: float, seed=0):
        super().__init__(mu, noise_std, seed)
        if not math.isfinite(amplitude):
            raise ConfigError(f"drift amplitude must be finite, got {amplitude}")
        if not (math.isfinite(period) and period > 0.0):
            raise ConfigError(f"drift period must be positive, got {period}")
        self.amplitude = float(amplitude)
        self.period = float(period)

    def _offset(self, t: int) -> float:
        return self.amplitude * math.sin(2.0 * math.pi * t / self.period)

    def ground_truth(self, t: int = 1) -> MetricMatrix:
        values = self._mu.values.copy()
        values[0, :] += self._offset(t)
        return MetricMatrix(values)

    def query_batch(self, arms, t: int = 1) -> np.ndarray:
        out = super().query_batch(arms, t)
        out[0, :] += self._offset(t)
        return out

    def query(self, arm: int, t: int = 1) -> np.ndarray:
        out = super().query(arm, t)
        out[0] += self._offset(t)
        return out


def setting_a(seed=0, noise_std: float | None = None) -> tuple[Environment, Objective]:
    """Two-arm environment where the arms trade the primary metric against the
    guardrail, with the soft objective (threshold 0, penalty 5)."""
    std = math.sqrt(SETTING_A_NOISE_VARIANCE) if noise_std is None else noise_std
    env = Environment(np.array(SETTING_A_MU), std, seed)
    objective = Objective(0, (soft_guardrail(1, 0.0, 5.0),))
    return env, objective


def setting_b(arms: int, seed=0, noise_std: float = 0.3) -> tuple[Environment, Objective]:
    """Random instance: three metrics drawn i.i.d. Uniform[-1, 1] per arm, with
    soft guardrails (threshold 0.5, penalty 5) on both secondary metrics."""
    if arms < 2:
        raise ConfigError(f"setting_b needs at least 2 arms, got {arms}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    mu_seq, noise_seq = root.spawn(2)
    mu = np.random.default_rng(mu_seq).uniform(-1.0, 1.0, size=(3, arms))
    env = Environment(mu, noise_std, noise_seq)
    objective = Objective(
        0,
        (
            soft_guardrail(1, SETTING_B_THRESHOLD, SETTING_B_PENALTY),
            soft_guardrail(2, SETTING_B_THRESHOLD, SETTING_B_PENALTY),
        ),
    )
    return env, objective


def relative_gain(f_now: float, f_single: float, f_prob_opt: float) -> float:
    """Signed progress between the single-best optimum (0) and the
    probabilistic optimum (1); negative means underperforming the single best."""
    gap = f_prob_opt - f_single
    if not abs(gap) > RELATIVE_GAIN_MIN_GAP:
        raise DegenerateGapError(
            f"probabilistic and single-best optima coincide (gap {gap:.3g})"
        )
    return (f_now - f_single) / gap
