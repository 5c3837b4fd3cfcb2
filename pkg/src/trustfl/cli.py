"""Command line entry point: ``trustfl run | validate-config | bootstrap-registry | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import agents as ag
from .errors import ConfigError, TrustFLError
from .harness import RunReport, bootstrap_registry, emit_report, load_scenario, run_scenario, validate_config
from .registry import Registry

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load(args) -> dict:
    try:
        return load_scenario(args.config)
    except FileNotFoundError:
        raise ConfigError(f"no such scenario or file: {args.config}") from None


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config = _load(args)
    if args.transport:
        config["transport"] = args.transport
    registry = Registry.load(args.registry) if args.registry else None
    transport = ag.HttpTransport() if config.get("transport", "mem") == "socket" else ag.MemoryTransport()
    report = run_scenario(config, seed=args.seed, transport=transport, registry=registry)
    _write(emit_report(report, args.format), args.out)
    if not report.passed:
        failed = [a["name"] for a in report.assertions if not a["passed"]]
        print(f"run failed: status={report.status} failed assertions={failed}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_validate(args) -> int:
    config = _load(args)
    problems = validate_config(config)
    for p in problems:
        print(p, file=sys.stderr)
    if not problems:
        print("ok")
    return EXIT_CONFIG if problems else EXIT_OK


def cmd_bootstrap(args) -> int:
    config = _load(args)
    registry = Registry.load(args.registry) if args.registry else None
    registry = bootstrap_registry(config, registry, seed=args.seed)
    _write(json.dumps(registry.snapshot(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    report = RunReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    _write(emit_report(report, args.format), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trustfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario end to end")
    run.add_argument("--config", required=True, help="scenario JSON path or shipped name (baseline, adversarial, revocation)")
    run.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    run.add_argument("--transport", choices=("mem", "socket"), default=None)
    run.add_argument("--registry", help="registry snapshot to start from")
    run.add_argument("--out")
    run.add_argument("--format", choices=("json", "table"), default="json")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate-config", help="check a scenario without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    boot = sub.add_parser("bootstrap-registry", help="write issuer DIDs, schemas and grants as a snapshot")
    boot.add_argument("--config", required=True)
    boot.add_argument("--seed", type=int, default=None)
    boot.add_argument("--registry", help="existing snapshot to extend")
    boot.add_argument("--out")
    boot.set_defaults(func=cmd_bootstrap)

    rep = sub.add_parser("report", help="re-render a saved JSON report")
    rep.add_argument("report")
    rep.add_argument("--format", choices=("json", "table"), default="table")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrustFLError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
