"""Command line entry point.

Exit codes: 0 success, 1 config error, 2 runtime error, 3 protocol abort
(only with ``--fail-on-abort``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    cross_validate_oracle,
    load_config,
    run_trials,
    sweep,
    sweep_rows,
    validate_config,
    write_results,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ABORT = 0, 1, 2, 3


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse value list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--trials", type=int, help="override the number of trials")
    common.add_argument("--out", help="output path (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    common.add_argument("--fail-on-abort", action="store_true", help="exit 3 if any trial aborted")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="compactcoding", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run one config")
    sw = sub.add_parser("sweep", parents=[common], help="run one config per parameter value")
    sw.add_argument("--param", required=True, help="dotted field, e.g. channel.eta")
    sw.add_argument("--values", required=True, type=_parse_values, help="comma separated list")
    sub.add_parser("oracle-check", parents=[common], help="cross-check pulse engine against the Fock oracle")
    sub.add_parser("validate-config", parents=[common], help="check a config file and print it resolved")
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        validate_config(cfg)
    return cfg


def _emit(rows, args, extra=None):
    write_results(rows, args.format, args.out or sys.stdout, extra)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate-config":
            print(json.dumps(cfg.to_dict(), indent=1))
            return EXIT_OK
        if args.command == "oracle-check":
            report = cross_validate_oracle(seed=cfg.master_seed)
            text = json.dumps(report, indent=1)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
            return EXIT_OK
        if args.command == "simulate":
            rows = run_trials(cfg, args.workers)
            _emit(rows, args)
        else:
            try:
                results = sweep(cfg, args.param, args.values, args.workers)
            except ConfigError as exc:
                for e in exc.errors:
                    print(f"config error: {e}", file=sys.stderr)
                return EXIT_CONFIG
            pairs = sweep_rows(results)
            rows = [r for _, r in pairs]
            _emit(rows, args, {"param_value": [v for v, _ in pairs]})
    except Exception as exc:  # noqa: BLE001 - surfaced as runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.fail_on_abort and any(r.aborted for r in rows):
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
