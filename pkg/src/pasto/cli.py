"""Command-line entry point.

Subcommands: run (execute an experiment and write results), oracle (print the
noiseless optima for the configured environment), validate (schema check
only), and sweep (grid over one config field).  Exit codes: 0 success, 1
config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Sequence

from .baselines import dominance_check, single_best_oracle
from .errors import ConfigError, NonDifferentiableObjectiveError, PastoError
from .harness import (
    build_environment,
    emit,
    load_raw_config,
    parse_config,
    run_experiment,
    splitmix64,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pasto", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write results")
    run.add_argument("config", help="path to a JSON experiment config")
    _add_overrides(run)
    run.set_defaults(func=_cmd_run)

    oracle = sub.add_parser("oracle", help="print single-best and probabilistic optima")
    oracle.add_argument("config")
    oracle.set_defaults(func=_cmd_oracle)

    validate = sub.add_parser("validate", help="check a config against the schema")
    validate.add_argument("config")
    validate.set_defaults(func=_cmd_validate)

    sweep = sub.add_parser("sweep", help="run a grid over one config field")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True,
                       help="dotted path of the field to vary, e.g. algorithm.gamma")
    sweep.add_argument("--values", required=True,
                       help="comma-separated values (parsed as JSON scalars)")
    _add_overrides(sweep)
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def _add_overrides(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    sub.add_argument("--replicas", type=int, default=None, help="override the replica count")
    sub.add_argument("--out", default=None, help="override the output directory")
    sub.add_argument("--format", dest="emit_format", choices=("csv", "json"), default=None,
                     help="override the output format")


def _apply_overrides(raw: dict, ns: argparse.Namespace) -> dict:
    raw = copy.deepcopy(raw)
    if ns.seed is not None:
        raw["seed"] = ns.seed
    if ns.replicas is not None:
        raw["replicas"] = ns.replicas
    if ns.out is not None:
        raw["output"] = ns.out
    if ns.emit_format is not None:
        raw["format"] = ns.emit_format
    return raw


def _cmd_run(ns: argparse.Namespace) -> int:
    raw = _apply_overrides(load_raw_config(ns.config), ns)
    exp = parse_config(raw)
    if exp.output is None:
        raise ConfigError("an output directory is required: set 'output' or pass --out")
    bundle = run_experiment(exp)
    for path in emit(bundle, exp.emit_format, exp.output):
        print(path)
    return 0


def _cmd_oracle(ns: argparse.Namespace) -> int:
    exp = parse_config(load_raw_config(ns.config))
    env, objective = build_environment(exp.environment, splitmix64(exp.seed, 0))
    mu = env.ground_truth(1)
    arm, det_value = single_best_oracle(mu, objective)
    print(f"single_best_arm: {arm}")
    print(f"single_best_value: {det_value:.12g}")
    try:
        result = dominance_check(mu, objective)
    except NonDifferentiableObjectiveError:
        print("prob_value: unavailable (hard-barrier objective)")
        return 0
    print(f"prob_value: {result.prob_value:.12g}")
    print(f"dominance_gap: {result.gap:.12g}")
    return 0


def _cmd_validate(ns: argparse.Namespace) -> int:
    parse_config(load_raw_config(ns.config))
    print(f"OK: {ns.config}")
    return 0


def _set_path(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def _parse_sweep_values(text: str) -> list:
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(json.loads(token))
        except json.JSONDecodeError:
            values.append(token)
    if not values:
        raise ConfigError("--values contained no values")
    return values


def _cmd_sweep(ns: argparse.Namespace) -> int:
    raw = _apply_overrides(load_raw_config(ns.config), ns)
    values = _parse_sweep_values(ns.values)
    root = raw.get("output")
    if root is None:
        raise ConfigError("an output directory is required: set 'output' or pass --out")
    leaf = ns.param.split(".")[-1]
    for value in values:
        variant = copy.deepcopy(raw)
        _set_path(variant, ns.param, value)
        out_dir = Path(root) / f"{leaf}={value}"
        variant["output"] = str(out_dir)
        exp = parse_config(variant)
        bundle = run_experiment(exp)
        for path in emit(bundle, exp.emit_format, exp.output):
            print(path)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PastoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
