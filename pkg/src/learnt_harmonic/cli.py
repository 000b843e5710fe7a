"""Command-line entry point.

    learnt-harmonic run CONFIG [-o OUT]
    learnt-harmonic compare CONFIG1 CONFIG2 [-o OUT]
    learnt-harmonic validate CONFIG
    learnt-harmonic report REPORT [--format json|csv] [-o OUT]

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import (
    ConfigError,
    ExperimentConfig,
    dumps_json,
    emit_report,
    load_report,
    report_csv,
    run_experiment,
    compare_models,
    _atomic_write,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _summary(report) -> str:
    agg = report.aggregate()
    parts = [f"{agg['n_success']} ok, {agg['n_failed']} failed"]
    if agg["mean_ln_z"] is not None:
        parts.append(f"mean ln z = {agg['mean_ln_z']:.6f}")
        parts.append(f"estimated std = {agg['mean_estimated_std_ln_z']:.3g}")
    if agg.get("measured_std_ln_z") is not None:
        parts.append(f"measured std = {agg['measured_std_ln_z']:.3g}")
    if report.ground_truth:
        parts.append(f"reference ln z = {report.ground_truth['ln_z']:.6f}")
    return "; ".join(parts)


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.output:
        config.output = args.output
    report = run_experiment(config, write=False)
    if config.output:
        emit_report(report, config.output, "json")
    else:
        sys.stdout.write(dumps_json(report.to_dict()))
    print(_summary(report), file=sys.stderr)
    return EXIT_OK if report.successes else EXIT_RUNTIME


def cmd_compare(args) -> int:
    c1 = ExperimentConfig.from_file(args.config1)
    c2 = ExperimentConfig.from_file(args.config2)
    result = compare_models(c1, c2)
    text = dumps_json(result)
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    agg = result["aggregate"]
    if agg["mean_ln_bf"] is None:
        print("no successful repetition pair", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"ln BF_12 = {agg['mean_ln_bf']:.6f} +/- {agg['mean_ln_bf_std']:.3g}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        data = load_report(args.report)
    except (OSError, ValueError) as e:
        raise ConfigError(str(e)) from e
    text = dumps_json(data) if args.format == "json" else report_csv(data)
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learnt-harmonic", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="report path (overrides the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="Bayes factor between two experiment configs")
    p.add_argument("config1")
    p.add_argument("config2")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="re-emit a JSON report as JSON or CSV")
    p.add_argument("report")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
