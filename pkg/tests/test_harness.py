"""Experiment harness: config schema, replica orchestration, aggregation,
regret, and emission."""

import json

import numpy as np
import pytest

from pasto import ConfigError, PastoConfig, pasto_run, setting_a
from pasto.harness import (
    CSV_HEADER,
    build_environment,
    config_to_dict,
    emit,
    nearest_rank_percentile,
    parse_config,
    recorded_iterations,
    regret_series,
    results_csv,
    results_json,
    run_experiment,
    splitmix64,
)
from pasto.objective import objective_value_batch
from helpers import nearest_rank_oracle


def minimal_config(**overrides):
    raw = {
        "environment": {"kind": "setting_a"},
        "algorithm": {"kind": "pasto", "horizon": 50, "gamma": 0.05},
        "replicas": 2,
        "seed": 7,
    }
    raw.update(overrides)
    return raw


class TestSplitmix64:
    def test_deterministic(self):
        assert splitmix64(42, 3) == splitmix64(42, 3)

    def test_distinct_streams(self):
        values = {splitmix64(42, i) for i in range(200)}
        assert len(values) == 200
        assert all(0 <= v < 2**64 for v in values)

    def test_seed_sensitivity(self):
        assert splitmix64(1, 0) != splitmix64(2, 0)


class TestConfigParsing:
    def test_minimal(self):
        exp = parse_config(minimal_config())
        assert exp.replicas == 2
        assert exp.record_every == 1
        assert exp.emit_format == "csv"
        assert exp.report_true_objective is True

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(minimal_config(extra=1))

    def test_unknown_nested_key(self):
        raw = minimal_config()
        raw["algorithm"]["step"] = 0.1
        with pytest.raises(ConfigError, match="algorithm"):
            parse_config(raw)
        raw = minimal_config()
        raw["environment"]["sigma"] = 1.0
        with pytest.raises(ConfigError, match="environment"):
            parse_config(raw)

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing"):
            parse_config({"environment": {"kind": "setting_a"}})

    def test_type_errors_are_config_errors(self):
        raw = minimal_config()
        raw["algorithm"]["gamma"] = "fast"
        with pytest.raises(ConfigError):
            parse_config(raw)
        raw = minimal_config(replicas=0)
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_parallel_q_defaults_per_environment(self):
        assert parse_config(minimal_config()).algorithm.config.parallel_q == 1
        raw = minimal_config(environment={"kind": "setting_b", "arms": 20, "noise_std": 0.3})
        assert parse_config(raw).algorithm.config.parallel_q == 10

    def test_parallel_q_validated_against_arms(self):
        raw = minimal_config()
        raw["algorithm"]["parallel_q"] = 3
        with pytest.raises(ConfigError, match="parallel_q"):
            parse_config(raw)

    def test_beta_exponent_only_for_sscgd(self):
        raw = minimal_config()
        raw["algorithm"]["beta_exponent"] = 0.5
        with pytest.raises(ConfigError, match="beta_exponent"):
            parse_config(raw)
        raw["algorithm"]["kind"] = "sscgd"
        assert parse_config(raw).algorithm.beta_exponent == 0.5

    def test_custom_environment(self):
        raw = minimal_config(environment={
            "kind": "custom",
            "mu": [[1.0, 2.0], [0.0, -1.0]],
            "noise_std": 0.5,
            "objective": {"primary_metric": 0,
                          "guardrails": [{"metric": 1, "threshold": 0.0, "penalty": 2.0}]},
        })
        exp = parse_config(raw)
        env, obj = build_environment(exp.environment, 0)
        assert env.k == 2 and env.m == 2
        assert obj.guardrails[0].penalty == 2.0

    def test_custom_objective_index_validated(self):
        raw = minimal_config(environment={
            "kind": "custom",
            "mu": [[1.0, 2.0]],
            "noise_std": 0.0,
            "objective": {"primary_metric": 0,
                          "guardrails": [{"metric": 3, "threshold": 0.0, "penalty": 1.0}]},
        })
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_drift_cannot_nest(self):
        drift = {"kind": "drift", "base": {"kind": "setting_a"}, "amplitude": 0.1,
                 "period": 32}
        raw = minimal_config(environment={"kind": "drift", "base": drift,
                                          "amplitude": 0.1, "period": 32})
        with pytest.raises(ConfigError, match="nest"):
            parse_config(raw)

    def test_round_trip_through_dict(self):
        raw = minimal_config(environment={"kind": "setting_b", "arms": 6, "noise_std": 0.2})
        raw["algorithm"]["kind"] = "sscgd"
        raw["algorithm"]["epsilon"] = {"kind": "constant", "value": 0.05}
        exp = parse_config(raw)
        echoed = config_to_dict(exp)
        assert config_to_dict(parse_config(echoed)) == echoed


class TestRecordedIterations:
    def test_includes_every_multiple_and_the_horizon(self):
        assert recorded_iterations(10, 3).tolist() == [3, 6, 9, 10]
        assert recorded_iterations(10, 5).tolist() == [5, 10]
        assert recorded_iterations(1, 1).tolist() == [1]
        assert recorded_iterations(4, 100).tolist() == [4]


class TestNearestRankPercentile:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            data = rng.normal(size=(n, 3))
            for q in (25.0, 50.0, 75.0):
                mine = nearest_rank_percentile(data, q)
                for col in range(3):
                    assert mine[col] == nearest_rank_oracle(data[:, col], q)


class TestRunExperiment:
    def test_single_replica_matches_direct_run(self):
        exp = parse_config(minimal_config(replicas=1, record_every=10, seed=99))
        bundle = run_experiment(exp)

        env, objective = setting_a(seed=splitmix64(99, 0))
        config = PastoConfig(horizon=50, gamma=0.05, rng_seed=splitmix64(99, 1))
        _, traj = pasto_run(env, objective, config)
        mu = env.ground_truth().values
        expected = objective_value_batch(objective, traj.pmfs @ mu.T)
        idx = bundle.ts - 1
        assert np.array_equal(bundle.mean_obj, expected[idx])
        assert np.array_equal(bundle.p25_obj, expected[idx])
        assert np.array_equal(bundle.final_pbar, traj.p_bar.probs)

    def test_percentile_band_is_ordered(self, monkeypatch):
        # Nearest-rank percentiles are actual sample values and bracket the
        # median; the mean of a skewed sample may legitimately leave the band.
        monkeypatch.setenv("PASTO_THREADS", "2")
        exp = parse_config(minimal_config(replicas=40, record_every=10, seed=555))
        bundle = run_experiment(exp)
        assert (bundle.p25_obj <= bundle.p75_obj).all()
        assert np.isfinite(bundle.mean_obj).all()
        assert np.isfinite(bundle.p25_obj).all()

    def test_regret_series_nonnegative_on_stationary(self):
        exp = parse_config(minimal_config(replicas=8, record_every=5, seed=31))
        bundle = run_experiment(exp)
        assert (bundle.mean_regret >= -1e-6).all()
        env, objective = setting_a(seed=1)
        from pasto import prob_oracle

        _, f_star = prob_oracle(env.ground_truth(), objective)
        _, traj = pasto_run(env, objective, PastoConfig(horizon=80, gamma=0.05, rng_seed=2))
        series = regret_series(traj, f_star)
        assert series.shape == (80,)
        assert (series >= -1e-6).all()
        assert (np.diff(series) >= -1e-6).all()

    def test_relative_gain_anchored_by_oracles(self):
        exp = parse_config(minimal_config(replicas=4, record_every=25, seed=77))
        bundle = run_experiment(exp)
        assert np.isfinite(bundle.mean_relative_gain).all()
        oracle = bundle.metadata["oracle"]
        assert oracle["single_best_value"] == 0.0
        assert oracle["prob_value"] == pytest.approx(1.0125, abs=1e-6)

    def test_report_true_objective_off_blanks_columns(self):
        exp = parse_config(minimal_config(report_true_objective=False))
        bundle = run_experiment(exp)
        assert np.isnan(bundle.mean_obj).all()
        assert np.isnan(bundle.mean_regret).all()
        assert bundle.final_pbar.shape == (2,)

    def test_sscgd_metadata_discloses_schedule(self):
        raw = minimal_config()
        raw["algorithm"]["kind"] = "sscgd"
        bundle = run_experiment(parse_config(raw))
        assert bundle.metadata["beta_exponent"] == 0.75
        assert bundle.metadata["algorithm"] == "sscgd"

    def test_worker_count_does_not_change_results(self, monkeypatch):
        raw = minimal_config(replicas=6, record_every=10, seed=13)
        monkeypatch.setenv("PASTO_THREADS", "1")
        serial = run_experiment(parse_config(raw))
        monkeypatch.setenv("PASTO_THREADS", "3")
        parallel = run_experiment(parse_config(raw))
        assert results_csv(serial) == results_csv(parallel)
        assert results_json(serial) == results_json(parallel)

    def test_setting_b_uses_per_replica_oracles(self):
        raw = minimal_config(environment={"kind": "setting_b", "arms": 5, "noise_std": 0.1},
                             replicas=3, record_every=25)
        raw["algorithm"]["parallel_q"] = 2
        bundle = run_experiment(parse_config(raw))
        assert "single_best_value_mean" in bundle.metadata["oracle"]

    def test_drift_environment_runs(self):
        raw = minimal_config(environment={"kind": "drift",
                                          "base": {"kind": "setting_a"},
                                          "amplitude": 0.5, "period": 16},
                             replicas=2, record_every=10)
        bundle = run_experiment(parse_config(raw))
        assert np.isfinite(bundle.mean_obj).all()
        assert np.isfinite(bundle.mean_regret).all()
        assert np.isnan(bundle.mean_relative_gain).all()


class TestEmission:
    def test_golden_header(self):
        assert CSV_HEADER == "t,mean_obj,p25_obj,p75_obj,mean_obj_pbar,mean_regret,mean_relative_gain"

    def test_single_iteration_single_row(self):
        raw = minimal_config()
        raw["algorithm"]["horizon"] = 1
        bundle = run_experiment(parse_config(raw))
        text = results_csv(bundle)
        lines = text.strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 2
        assert lines[1].startswith("1,")

    def test_csv_json_round_trip_exact(self):
        bundle = run_experiment(parse_config(minimal_config(record_every=10)))
        csv_lines = results_csv(bundle).strip().split("\n")[1:]
        doc = json.loads(results_json(bundle))
        cols = doc["columns"]
        names = CSV_HEADER.split(",")
        for i, line in enumerate(csv_lines):
            cells = line.split(",")
            assert int(cells[0]) == cols["t"][i]
            for j, name in enumerate(names[1:], start=1):
                json_value = cols[name][i]
                if cells[j] == "":
                    assert json_value is None
                else:
                    assert float(cells[j]) == json_value

    def test_float_formatting_round_trips(self):
        value = 0.1 + 0.2
        from pasto.harness import _format_float

        assert float(_format_float(value)) == value
        assert _format_float(float("nan")) == ""

    def test_rerun_is_byte_identical(self):
        raw = minimal_config(record_every=10)
        a = results_csv(run_experiment(parse_config(raw)))
        b = results_csv(run_experiment(parse_config(raw)))
        assert a == b

    def test_matches_frozen_golden_file(self, monkeypatch):
        from pathlib import Path

        monkeypatch.setenv("PASTO_THREADS", "1")
        raw = {
            "environment": {"kind": "setting_a"},
            "algorithm": {"kind": "pasto", "horizon": 25, "gamma": 0.05},
            "replicas": 4,
            "record_every": 5,
            "seed": 314159,
        }
        text = results_csv(run_experiment(parse_config(raw)))
        golden = Path(__file__).parent / "golden" / "setting_a_small.csv"
        assert text == golden.read_text()

    def test_emit_writes_files(self, tmp_path):
        bundle = run_experiment(parse_config(minimal_config(record_every=25)))
        (csv_path,) = emit(bundle, "csv", tmp_path / "out")
        assert csv_path.read_text().startswith(CSV_HEADER)
        (json_path,) = emit(bundle, "json", tmp_path / "out")
        doc = json.loads(json_path.read_text())
        assert doc["config"]["environment"]["kind"] == "setting_a"
        assert len(doc["final_pbar"]) == 2
        with pytest.raises(ConfigError):
            emit(bundle, "yaml", tmp_path / "out")
