"""Monte Carlo experiment runner: JSON config ingestion, replica
orchestration, metric aggregation, regret computation, and CSV/JSON emission.

Experiments are reproducible down to the byte: replica r derives its
environment and algorithm seeds from the master seed via a splitmix64 hash,
replicas are aggregated in index order regardless of worker count, and all
floating-point output is serialized round-trip exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .algorithm import pasto_run
from .baselines import DEFAULT_BETA_EXPONENT, prob_oracle, single_best_oracle, sscgd_run
from .environments import (
    SETTING_A_DEFAULT_Q,
    SETTING_B_DEFAULT_Q,
    DriftEnvironment,
    Environment,
    setting_a,
    setting_b,
)
from .errors import ConfigError, PastoError
from .objective import objective_value_batch
from .types import (
    ConstantEpsilon,
    EpsilonSchedule,
    Guardrail,
    GuardrailKind,
    InverseSqrtEpsilon,
    MetricMatrix,
    Objective,
    PastoConfig,
    Trajectory,
)

CSV_HEADER = "t,mean_obj,p25_obj,p75_obj,mean_obj_pbar,mean_regret,mean_relative_gain"
CSV_FILENAME = "results.csv"
JSON_FILENAME = "results.json"
WORKER_COUNT_ENV_VAR = "PASTO_THREADS"

_RELATIVE_GAIN_MIN_GAP = 1e-9
_DRIFT_ORACLE_ITERS = 300

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, index: int) -> int:
    """Deterministic 64-bit stream derivation: hash of (seed, index)."""
    x = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


# --------------------------------------------------------------------------
# Config model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SettingASpec:
    noise_std: float | None = None  # None selects the default (variance 5.0)


@dataclass(frozen=True)
class SettingBSpec:
    arms: int
    noise_std: float = 0.3


@dataclass(frozen=True, eq=False)
class CustomSpec:
    mu: MetricMatrix
    noise_std: float
    objective: Objective


@dataclass(frozen=True, eq=False)
class DriftSpec:
    base: Union[SettingASpec, SettingBSpec, CustomSpec]
    amplitude: float
    period: float


EnvironmentSpec = Union[SettingASpec, SettingBSpec, CustomSpec, DriftSpec]


@dataclass(frozen=True, eq=False)
class AlgorithmSpec:
    kind: str  # "pasto" | "sscgd"
    config: PastoConfig
    beta_exponent: float = DEFAULT_BETA_EXPONENT


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    environment: EnvironmentSpec
    algorithm: AlgorithmSpec
    replicas: int = 1
    record_every: int = 1
    seed: int = 0
    output: str | None = None
    emit_format: str = "csv"
    report_true_objective: bool = True


def default_parallel_q(spec: EnvironmentSpec) -> int:
    if isinstance(spec, SettingASpec):
        return SETTING_A_DEFAULT_Q
    if isinstance(spec, SettingBSpec):
        return min(SETTING_B_DEFAULT_Q, spec.arms)
    if isinstance(spec, DriftSpec):
        return default_parallel_q(spec.base)
    return 1


def environment_arm_count(spec: EnvironmentSpec) -> int:
    if isinstance(spec, SettingASpec):
        return 2
    if isinstance(spec, SettingBSpec):
        return spec.arms
    if isinstance(spec, CustomSpec):
        return spec.mu.k
    return environment_arm_count(spec.base)


def build_environment(spec: EnvironmentSpec, seed) -> tuple[Environment, Objective]:
    """Instantiate the environment and its objective for one replica seed."""
    if isinstance(spec, SettingASpec):
        return setting_a(seed=seed, noise_std=spec.noise_std)
    if isinstance(spec, SettingBSpec):
        return setting_b(spec.arms, seed=seed, noise_std=spec.noise_std)
    if isinstance(spec, CustomSpec):
        return Environment(spec.mu, spec.noise_std, seed=seed), spec.objective
    if isinstance(spec, DriftSpec):
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        base_seq, drift_seq = root.spawn(2)
        base_env, objective = build_environment(spec.base, base_seq)
        env = DriftEnvironment(
            base_env.ground_truth(1).values,
            base_env.noise_std,
            spec.amplitude,
            spec.period,
            seed=drift_seq,
        )
        return env, objective
    raise ConfigError(f"unsupported environment spec {type(spec).__name__}")


def _instance_invariant(spec: EnvironmentSpec) -> bool:
    # True when the ground-truth matrix does not depend on the replica seed.
    if isinstance(spec, SettingBSpec):
        return False
    if isinstance(spec, DriftSpec):
        return _instance_invariant(spec.base)
    return True


# --------------------------------------------------------------------------
# JSON schema
# --------------------------------------------------------------------------

def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(raw: dict, path: str, allowed: set[str], required: set[str]) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")
    missing = sorted(required - set(raw))
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {missing}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    return value


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _parse_objective(raw, path: str) -> Objective:
    raw = _expect_mapping(raw, path)
    _check_keys(raw, path, {"primary_metric", "guardrails"}, {"primary_metric"})
    primary = _as_int(raw["primary_metric"], f"{path}.primary_metric")
    guardrails = []
    for i, entry in enumerate(raw.get("guardrails", [])):
        gpath = f"{path}.guardrails[{i}]"
        entry = _expect_mapping(entry, gpath)
        _check_keys(entry, gpath, {"metric", "threshold", "kind", "penalty"},
                    {"metric", "threshold"})
        kind = entry.get("kind", GuardrailKind.SOFT_SQUARE.value)
        if kind not in (GuardrailKind.SOFT_SQUARE.value, GuardrailKind.HARD_BARRIER.value):
            raise ConfigError(f"{gpath}.kind: unknown guardrail kind {kind!r}")
        penalty = entry.get("penalty")
        if penalty is not None:
            penalty = _as_number(penalty, f"{gpath}.penalty")
        try:
            guardrails.append(Guardrail(
                metric=_as_int(entry["metric"], f"{gpath}.metric"),
                threshold=_as_number(entry["threshold"], f"{gpath}.threshold"),
                kind=GuardrailKind(kind),
                penalty=penalty,
            ))
        except PastoError as exc:
            raise ConfigError(f"{gpath}: {exc}") from exc
    try:
        return Objective(primary, tuple(guardrails))
    except PastoError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_environment(raw, path: str, *, allow_drift: bool = True) -> EnvironmentSpec:
    raw = _expect_mapping(raw, path)
    kind = raw.get("kind")
    if kind == "setting_a":
        _check_keys(raw, path, {"kind", "noise_std"}, {"kind"})
        noise = raw.get("noise_std")
        if noise is not None:
            noise = _as_number(noise, f"{path}.noise_std")
            if noise < 0:
                raise ConfigError(f"{path}.noise_std: must be nonnegative")
        return SettingASpec(noise_std=noise)
    if kind == "setting_b":
        _check_keys(raw, path, {"kind", "arms", "noise_std"}, {"kind", "arms"})
        arms = _as_int(raw["arms"], f"{path}.arms")
        if arms < 2:
            raise ConfigError(f"{path}.arms: needs at least 2 arms")
        noise = _as_number(raw.get("noise_std", 0.3), f"{path}.noise_std")
        if noise < 0:
            raise ConfigError(f"{path}.noise_std: must be nonnegative")
        return SettingBSpec(arms=arms, noise_std=noise)
    if kind == "custom":
        _check_keys(raw, path, {"kind", "mu", "noise_std", "objective"},
                    {"kind", "mu", "noise_std", "objective"})
        try:
            mu = MetricMatrix(raw["mu"])
        except (PastoError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.mu: {exc}") from exc
        noise = _as_number(raw["noise_std"], f"{path}.noise_std")
        if noise < 0:
            raise ConfigError(f"{path}.noise_std: must be nonnegative")
        objective = _parse_objective(raw["objective"], f"{path}.objective")
        if objective.max_metric_index >= mu.m:
            raise ConfigError(
                f"{path}.objective: references metric {objective.max_metric_index} "
                f"but mu has {mu.m} rows"
            )
        return CustomSpec(mu=mu, noise_std=noise, objective=objective)
    if kind == "drift":
        if not allow_drift:
            raise ConfigError(f"{path}: drift environments cannot be nested")
        _check_keys(raw, path, {"kind", "base", "amplitude", "period"},
                    {"kind", "base", "amplitude", "period"})
        base = _parse_environment(raw["base"], f"{path}.base", allow_drift=False)
        amplitude = _as_number(raw["amplitude"], f"{path}.amplitude")
        period = _as_number(raw["period"], f"{path}.period")
        if period <= 0:
            raise ConfigError(f"{path}.period: must be positive")
        return DriftSpec(base=base, amplitude=amplitude, period=period)
    raise ConfigError(f"{path}.kind: unknown environment kind {kind!r}")


def _parse_epsilon(raw, path: str) -> EpsilonSchedule:
    raw = _expect_mapping(raw, path)
    kind = raw.get("kind")
    try:
        if kind == "inverse_sqrt":
            _check_keys(raw, path, {"kind", "scale", "shift"}, {"kind", "scale"})
            return InverseSqrtEpsilon(
                scale=_as_number(raw["scale"], f"{path}.scale"),
                shift=_as_number(raw.get("shift", 0.0), f"{path}.shift"),
            )
        if kind == "constant":
            _check_keys(raw, path, {"kind", "value"}, {"kind", "value"})
            return ConstantEpsilon(value=_as_number(raw["value"], f"{path}.value"))
    except PastoError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown epsilon schedule {kind!r}")


def _parse_algorithm(raw, path: str, env_spec: EnvironmentSpec) -> AlgorithmSpec:
    raw = _expect_mapping(raw, path)
    allowed = {"kind", "horizon", "gamma", "epsilon", "parallel_q", "prior",
               "prior_weight", "cap", "beta_exponent"}
    _check_keys(raw, path, allowed, {"kind", "horizon", "gamma"})
    kind = _as_str(raw["kind"], f"{path}.kind")
    if kind not in ("pasto", "sscgd"):
        raise ConfigError(f"{path}.kind: unknown algorithm {kind!r}")
    if kind != "sscgd" and "beta_exponent" in raw:
        raise ConfigError(f"{path}.beta_exponent: only valid for the sscgd algorithm")

    epsilon = (
        _parse_epsilon(raw["epsilon"], f"{path}.epsilon")
        if "epsilon" in raw
        else InverseSqrtEpsilon(scale=0.1, shift=10.0)
    )
    prior = None
    if raw.get("prior") is not None:
        try:
            prior = MetricMatrix(raw["prior"])
        except (PastoError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.prior: {exc}") from exc
    cap = raw.get("cap")
    if cap is not None:
        cap = _as_number(cap, f"{path}.cap")
    parallel_q = raw.get("parallel_q")
    if parallel_q is None:
        parallel_q = default_parallel_q(env_spec)
    else:
        parallel_q = _as_int(parallel_q, f"{path}.parallel_q")
    if parallel_q > environment_arm_count(env_spec):
        raise ConfigError(
            f"{path}.parallel_q: exceeds the environment's "
            f"{environment_arm_count(env_spec)} arms"
        )
    try:
        config = PastoConfig(
            horizon=_as_int(raw["horizon"], f"{path}.horizon"),
            gamma=_as_number(raw["gamma"], f"{path}.gamma"),
            epsilon=epsilon,
            parallel_q=parallel_q,
            prior=prior,
            prior_weight=_as_number(raw.get("prior_weight", 1.0), f"{path}.prior_weight"),
            cap=cap,
            rng_seed=0,
        )
    except PastoError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    beta = _as_number(raw.get("beta_exponent", DEFAULT_BETA_EXPONENT), f"{path}.beta_exponent")
    if beta <= 0:
        raise ConfigError(f"{path}.beta_exponent: must be positive")
    return AlgorithmSpec(kind=kind, config=config, beta_exponent=beta)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping; unknown keys anywhere are an error."""
    raw = _expect_mapping(raw, "config")
    allowed = {"environment", "algorithm", "replicas", "record_every", "seed",
               "output", "format", "report_true_objective"}
    _check_keys(raw, "config", allowed, {"environment", "algorithm"})
    env_spec = _parse_environment(raw["environment"], "environment")
    algorithm = _parse_algorithm(raw["algorithm"], "algorithm", env_spec)
    replicas = _as_int(raw.get("replicas", 1), "replicas")
    if replicas < 1:
        raise ConfigError("replicas: must be >= 1")
    record_every = _as_int(raw.get("record_every", 1), "record_every")
    if record_every < 1:
        raise ConfigError("record_every: must be >= 1")
    seed = _as_int(raw.get("seed", 0), "seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    output = raw.get("output")
    if output is not None:
        output = _as_str(output, "output")
    emit_format = _as_str(raw.get("format", "csv"), "format")
    if emit_format not in ("csv", "json"):
        raise ConfigError(f"format: expected 'csv' or 'json', got {emit_format!r}")
    report = _as_bool(raw.get("report_true_objective", True), "report_true_objective")
    return ExperimentConfig(
        environment=env_spec,
        algorithm=algorithm,
        replicas=replicas,
        record_every=record_every,
        seed=seed,
        output=output,
        emit_format=emit_format,
        report_true_objective=report,
    )


def load_raw_config(path: str | Path) -> dict:
    """Read a JSON config file; decode errors carry line/column anchors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return _expect_mapping(raw, str(path))


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(load_raw_config(path))


def _objective_to_dict(objective: Objective) -> dict:
    return {
        "primary_metric": objective.primary_metric,
        "guardrails": [
            {
                "metric": g.metric,
                "threshold": g.threshold,
                "kind": g.kind.value,
                **({"penalty": g.penalty} if g.penalty is not None else {}),
            }
            for g in objective.guardrails
        ],
    }


def _environment_to_dict(spec: EnvironmentSpec) -> dict:
    if isinstance(spec, SettingASpec):
        return {"kind": "setting_a", "noise_std": spec.noise_std}
    if isinstance(spec, SettingBSpec):
        return {"kind": "setting_b", "arms": spec.arms, "noise_std": spec.noise_std}
    if isinstance(spec, CustomSpec):
        return {
            "kind": "custom",
            "mu": spec.mu.values.tolist(),
            "noise_std": spec.noise_std,
            "objective": _objective_to_dict(spec.objective),
        }
    return {
        "kind": "drift",
        "base": _environment_to_dict(spec.base),
        "amplitude": spec.amplitude,
        "period": spec.period,
    }


def _epsilon_to_dict(epsilon: EpsilonSchedule) -> dict:
    if isinstance(epsilon, InverseSqrtEpsilon):
        return {"kind": "inverse_sqrt", "scale": epsilon.scale, "shift": epsilon.shift}
    return {"kind": "constant", "value": epsilon.value}


def _algorithm_to_dict(spec: AlgorithmSpec) -> dict:
    out = {
        "kind": spec.kind,
        "horizon": spec.config.horizon,
        "gamma": spec.config.gamma,
        "epsilon": _epsilon_to_dict(spec.config.epsilon),
        "parallel_q": spec.config.parallel_q,
        "prior": None if spec.config.prior is None else spec.config.prior.values.tolist(),
        "prior_weight": spec.config.prior_weight,
        "cap": spec.config.cap,
    }
    if spec.kind == "sscgd":
        out["beta_exponent"] = spec.beta_exponent
    return out


def config_to_dict(exp: ExperimentConfig) -> dict:
    """Canonical mapping form of a config (defaults resolved); reparseable."""
    return {
        "environment": _environment_to_dict(exp.environment),
        "algorithm": _algorithm_to_dict(exp.algorithm),
        "replicas": exp.replicas,
        "record_every": exp.record_every,
        "seed": exp.seed,
        "output": exp.output,
        "format": exp.emit_format,
        "report_true_objective": exp.report_true_objective,
    }


# --------------------------------------------------------------------------
# Replica execution and aggregation
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _SharedOracle:
    single_best_value: float
    prob_value: float
    f_star_series: np.ndarray | None = None  # drift environments only


@dataclass(frozen=True, eq=False)
class _ReplicaOutcome:
    ts: np.ndarray
    true_obj: np.ndarray
    obj_pbar: np.ndarray
    regret: np.ndarray
    rel_gain: np.ndarray
    final_pbar: np.ndarray
    single_best_value: float
    prob_value: float


def recorded_iterations(horizon: int, record_every: int) -> np.ndarray:
    """Iterations kept in the output: multiples of record_every plus the last."""
    ts = list(range(record_every, horizon + 1, record_every))
    if not ts or ts[-1] != horizon:
        ts.append(horizon)
    return np.array(ts, dtype=np.int64)


def _running_average_pmfs(pmfs: np.ndarray) -> np.ndarray:
    horizon = pmfs.shape[0]
    return np.cumsum(pmfs, axis=0) / np.arange(1, horizon + 1)[:, None]


def regret_series(trajectory: Trajectory, f_star: float) -> np.ndarray:
    """Cumulative optimality gap sum_{s<=t} (f_star - f(mu p_s)) for stationary
    environments, evaluated at every iteration."""
    if trajectory.true_objectives is None:
        raise ConfigError("regret needs an environment with known ground truth")
    return np.cumsum(f_star - trajectory.true_objectives)


def _drift_f_star_series(env, objective: Objective, horizon: int) -> np.ndarray:
    # Best-fixed-pmf value against the running average of the drifting truth.
    avg = np.zeros((env.m, env.k))
    out = np.empty(horizon)
    for t in range(1, horizon + 1):
        avg += (env.ground_truth(t).values - avg) / t
        _, out[t - 1] = prob_oracle(MetricMatrix(avg), objective, iters=_DRIFT_ORACLE_ITERS)
    return out


def _drift_series(env, objective: Objective, trajectory: Trajectory,
                  f_star_series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    horizon = len(trajectory)
    pbar_running = _running_average_pmfs(trajectory.pmfs)
    avg = np.zeros((env.m, env.k))
    inst = np.empty(horizon)
    pbar_vals = np.empty(horizon)
    for t in range(1, horizon + 1):
        avg += (env.ground_truth(t).values - avg) / t
        inst[t - 1] = objective_value_batch(
            objective, (avg @ trajectory.pmfs[t - 1])[None, :]
        )[0]
        pbar_vals[t - 1] = objective_value_batch(
            objective, (avg @ pbar_running[t - 1])[None, :]
        )[0]
    regret = np.cumsum(f_star_series - inst)
    return pbar_vals, regret


def _replica_outcome(args: tuple[ExperimentConfig, int, _SharedOracle | None]) -> _ReplicaOutcome:
    exp, replica, shared = args
    env_seed = splitmix64(exp.seed, 2 * replica)
    alg_seed = splitmix64(exp.seed, 2 * replica + 1)
    env, objective = build_environment(exp.environment, env_seed)
    config = dataclasses.replace(exp.algorithm.config, rng_seed=alg_seed)
    if exp.algorithm.kind == "pasto":
        p_bar, trajectory = pasto_run(env, objective, config)
    else:
        p_bar, trajectory = sscgd_run(env, objective, config, exp.algorithm.beta_exponent)

    ts = recorded_iterations(config.horizon, exp.record_every)
    idx = ts - 1
    horizon = config.horizon
    nan = float("nan")
    nan_row = np.full(ts.size, nan)

    if not exp.report_true_objective or trajectory.true_objectives is None:
        return _ReplicaOutcome(ts=ts, true_obj=nan_row.copy(), obj_pbar=nan_row.copy(),
                               regret=nan_row.copy(), rel_gain=nan_row.copy(),
                               final_pbar=p_bar.probs, single_best_value=nan, prob_value=nan)

    mu = env.ground_truth(1)
    if shared is not None:
        f_single, f_prob = shared.single_best_value, shared.prob_value
    else:
        _, f_single = single_best_oracle(mu, objective)
        _, f_prob = prob_oracle(mu, objective)

    true_full = trajectory.true_objectives
    if env.stationary:
        pbar_running = _running_average_pmfs(trajectory.pmfs)
        obj_pbar_full = objective_value_batch(objective, pbar_running @ mu.values.T)
        regret_full = regret_series(trajectory, f_prob)
        denom = f_prob - f_single
        if abs(denom) > _RELATIVE_GAIN_MIN_GAP:
            rel_full = (obj_pbar_full - f_single) / denom
        else:
            rel_full = np.full(horizon, nan)
    else:
        f_star_series = (
            shared.f_star_series if shared is not None and shared.f_star_series is not None
            else _drift_f_star_series(env, objective, horizon)
        )
        obj_pbar_full, regret_full = _drift_series(env, objective, trajectory, f_star_series)
        rel_full = np.full(horizon, nan)

    return _ReplicaOutcome(
        ts=ts,
        true_obj=true_full[idx],
        obj_pbar=obj_pbar_full[idx],
        regret=regret_full[idx],
        rel_gain=rel_full[idx],
        final_pbar=p_bar.probs,
        single_best_value=f_single,
        prob_value=f_prob,
    )


def nearest_rank_percentile(values: np.ndarray, q: float) -> np.ndarray:
    """Nearest-rank percentile along axis 0: sorted[ceil(q/100 * n)] (1-based)."""
    n = values.shape[0]
    rank = max(1, math.ceil(q / 100.0 * n))
    return np.sort(values, axis=0)[rank - 1]


@dataclass(frozen=True, eq=False)
class ResultBundle:
    config: ExperimentConfig
    ts: np.ndarray
    mean_obj: np.ndarray
    p25_obj: np.ndarray
    p75_obj: np.ndarray
    mean_obj_pbar: np.ndarray
    mean_regret: np.ndarray
    mean_relative_gain: np.ndarray
    final_pbar: np.ndarray
    metadata: dict


def worker_count() -> int:
    raw = os.environ.get(WORKER_COUNT_ENV_VAR, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKER_COUNT_ENV_VAR} must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKER_COUNT_ENV_VAR} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _shared_oracle(exp: ExperimentConfig) -> _SharedOracle | None:
    if not exp.report_true_objective or not _instance_invariant(exp.environment):
        return None
    env, objective = build_environment(exp.environment, 0)
    if not objective.differentiable:
        return None
    mu = env.ground_truth(1)
    _, f_single = single_best_oracle(mu, objective)
    _, f_prob = prob_oracle(mu, objective)
    f_star_series = None
    if not env.stationary:
        f_star_series = _drift_f_star_series(env, objective, exp.algorithm.config.horizon)
    return _SharedOracle(single_best_value=f_single, prob_value=f_prob,
                         f_star_series=f_star_series)


def run_experiment(exp: ExperimentConfig) -> ResultBundle:
    """Run all replicas (in parallel when PASTO_THREADS allows), aggregate the
    per-iteration objective statistics, and return the bundle to emit.

    Output is byte-identical for a fixed config and master seed regardless of
    worker count: replica seeds are derived per index and aggregation runs in
    index order.
    """
    workers = worker_count()
    shared = _shared_oracle(exp)
    args = [(exp, r, shared) for r in range(exp.replicas)]
    if workers <= 1 or exp.replicas == 1:
        outcomes = [_replica_outcome(a) for a in args]
    else:
        chunk = max(1, math.ceil(exp.replicas / (workers * 4)))
        with ProcessPoolExecutor(max_workers=min(workers, exp.replicas)) as pool:
            outcomes = list(pool.map(_replica_outcome, args, chunksize=chunk))

    ts = outcomes[0].ts
    true_obj = np.stack([o.true_obj for o in outcomes])
    obj_pbar = np.stack([o.obj_pbar for o in outcomes])
    regret = np.stack([o.regret for o in outcomes])
    rel_gain = np.stack([o.rel_gain for o in outcomes])
    final_pbar = np.stack([o.final_pbar for o in outcomes]).mean(axis=0)

    metadata = {
        "algorithm": exp.algorithm.kind,
        "gamma": exp.algorithm.config.gamma,
        "epsilon": _epsilon_to_dict(exp.algorithm.config.epsilon),
        "parallel_q": exp.algorithm.config.parallel_q,
        "cap": exp.algorithm.config.cap,
        "prior_weight": exp.algorithm.config.prior_weight,
        "replicas": exp.replicas,
    }
    if exp.algorithm.kind == "sscgd":
        metadata["beta_exponent"] = exp.algorithm.beta_exponent
    if shared is not None:
        metadata["oracle"] = {
            "single_best_value": shared.single_best_value,
            "prob_value": shared.prob_value,
        }
    else:
        singles = np.array([o.single_best_value for o in outcomes])
        probs = np.array([o.prob_value for o in outcomes])
        metadata["oracle"] = {
            "single_best_value_mean": float(singles.mean()),
            "prob_value_mean": float(probs.mean()),
        }

    return ResultBundle(
        config=exp,
        ts=ts,
        mean_obj=true_obj.mean(axis=0),
        p25_obj=nearest_rank_percentile(true_obj, 25.0),
        p75_obj=nearest_rank_percentile(true_obj, 75.0),
        mean_obj_pbar=obj_pbar.mean(axis=0),
        mean_regret=regret.mean(axis=0),
        mean_relative_gain=rel_gain.mean(axis=0),
        final_pbar=final_pbar,
        metadata=metadata,
    )


# --------------------------------------------------------------------------
# Emission
# --------------------------------------------------------------------------

def _format_float(value: float) -> str:
    # 17 significant digits round-trip float64 exactly; undefined cells are empty.
    if not math.isfinite(value):
        return ""
    return format(value, ".17g")


def results_csv(bundle: ResultBundle) -> str:
    lines = [CSV_HEADER]
    for i, t in enumerate(bundle.ts):
        lines.append(",".join([
            str(int(t)),
            _format_float(float(bundle.mean_obj[i])),
            _format_float(float(bundle.p25_obj[i])),
            _format_float(float(bundle.p75_obj[i])),
            _format_float(float(bundle.mean_obj_pbar[i])),
            _format_float(float(bundle.mean_regret[i])),
            _format_float(float(bundle.mean_relative_gain[i])),
        ]))
    return "\n".join(lines) + "\n"


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def results_json(bundle: ResultBundle) -> str:
    doc = {
        "config": config_to_dict(bundle.config),
        "metadata": _json_safe(bundle.metadata),
        "columns": {
            "t": [int(t) for t in bundle.ts],
            "mean_obj": _json_safe(bundle.mean_obj.tolist()),
            "p25_obj": _json_safe(bundle.p25_obj.tolist()),
            "p75_obj": _json_safe(bundle.p75_obj.tolist()),
            "mean_obj_pbar": _json_safe(bundle.mean_obj_pbar.tolist()),
            "mean_regret": _json_safe(bundle.mean_regret.tolist()),
            "mean_relative_gain": _json_safe(bundle.mean_relative_gain.tolist()),
        },
        "final_pbar": [float(v) for v in bundle.final_pbar],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit(bundle: ResultBundle, emit_format: str, out_dir: str | Path) -> list[Path]:
    """Write results.csv or results.json under out_dir; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if emit_format == "csv":
        path = out_dir / CSV_FILENAME
        path.write_text(results_csv(bundle))
    elif emit_format == "json":
        path = out_dir / JSON_FILENAME
        path.write_text(results_json(bundle))
    else:
        raise ConfigError(f"format: expected 'csv' or 'json', got {emit_format!r}")
    return [path]
