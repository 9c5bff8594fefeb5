"""Command-line entry point: `nlslab <subcommand> --config <path> [--out <dir>] [--seed <u64>]`."""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path

import uvicorn
from dotenv import load_dotenv

from nlslab import __version__
from nlslab.app.api import app
from nlslab.errors import ConfigError, NlslabError
from nlslab.runner import pipeline
from nlslab.runner.config import RunConfig, parse_config, validate_config
from nlslab.runner.config_loader import default_config_path
from nlslab.runner.persistence import read_key_values, read_trace
from nlslab.runner.verify import SUITES, verify

logger = logging.getLogger("nlslab")

SUBCOMMANDS = ("classify", "simulate", "run", "analyze", "ground-state", "verify", "sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlslab", description="Radial focusing log-supercritical NLS lab")
    parser.add_argument("--version", action="version", version=f"nlslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in SUBCOMMANDS:
        command = sub.add_parser(name)
        command.add_argument("--config", type=Path, default=None, help="YAML run config (default: bundled defaults)")
        command.add_argument("--out", default=None, help="Output directory (overrides config and NLSLAB_OUTPUT_ROOT)")
        command.add_argument("--seed", type=int, default=None, help="Seed for randomized data and suites")
        command.add_argument("--log-level", default="INFO")
        if name == "analyze":
            command.add_argument("--trace", type=Path, default=None, help="Trace file (default: the run directory's)")
            command.add_argument("--virial", action="append", default=[], metavar="m=<value>")
            command.add_argument("--concentration", action="store_true")
        if name == "verify":
            command.add_argument("--suite", action="append", choices=sorted(SUITES), default=None)

    serve = sub.add_parser("serve")
    serve.add_argument("--log-level", default="INFO")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(args.config or default_config_path())
    output_dir = args.out or os.getenv("NLSLAB_OUTPUT_ROOT")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
    return config.with_overrides(output_dir=output_dir, seed=args.seed)


def _virial_scales(options: list[str]) -> list[float]:
    scales = []
    for option in options:
        key, _, value = option.partition("=")
        if key != "m" or not value:
            raise ConfigError(f"--virial expects m=<value>, got {option!r}")
        try:
            scales.append(float(value))
        except ValueError as exc:
            raise ConfigError(f"--virial: {value!r} is not a number") from exc
    return scales


def analyze_command(config: RunConfig, args: argparse.Namespace) -> None:
    directory = pipeline.run_directory(config)
    trace_path = args.trace or directory / "trace.csv"
    if args.virial or args.concentration:
        record = config.record()
        analysis = record["analysis"]
        analysis.update(trapping=False, scattering=False, jensen=False, concentration=args.concentration)
        analysis["virial_scales"] = _virial_scales(args.virial)
        config = validate_config(record)
    trace = read_trace(trace_path).to_trace()
    result = pipeline.classify(config, write=False)
    result.directory = directory
    pipeline.analyze(config, trace, result)
    print(f"analyzed {trace_path}: {len(result.files)} files in {result.directory}")


def serve() -> None:
    host = os.getenv("NLSLAB_HOST", "127.0.0.1")
    port = int(os.getenv("NLSLAB_PORT", "8765"))
    config = uvicorn.Config(app, host=host, port=port, log_level="info")
    server = uvicorn.Server(config)
    asyncio.run(server.serve())


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "serve":
        serve()
        return 0

    run_id = "-"
    try:
        config = load_config(args)
        run_id = config.run_id
        if args.command == "classify":
            result = pipeline.classify(config)
            print(f"run {run_id}: admissible={result.admissibility.admissible} -> {result.directory}")
        elif args.command == "simulate":
            result = pipeline.simulate(config)
            print(f"run {run_id}: {result.trace.status.value} at t={result.trace.final_time:g} -> {result.directory}")
        elif args.command == "run":
            result = pipeline.run(config)
            print(f"run {run_id}: {result.trace.status.value}, {len(result.files)} files -> {result.directory}")
        elif args.command == "analyze":
            analyze_command(config, args)
        elif args.command == "ground-state":
            path = pipeline.ground_state_report(config)
            _, values = read_key_values(path)
            for key, value in values.items():
                print(f"{key}={value}")
            print(f"ground-state n={config.grid.dimension} -> {path}")
        elif args.command == "sweep":
            index, results = pipeline.sweep(config)
            print(f"sweep {run_id}: {len(results)} runs -> {index}")
        elif args.command == "verify":
            out = Path(config.output_dir) / f"verify-{run_id}"
            report = verify(config, args.suite, out)
            for check in report.failures:
                print(f"FAILED {check.name}: {check.value:.6g} (threshold {check.threshold:.3g})", file=sys.stderr)
            print(f"verify {run_id}: {len(report.checks) - len(report.failures)}/{len(report.checks)} checks passed")
            return 0 if report.passed else 1
    except NlslabError as exc:
        print(f"nlslab {args.command} [run {run_id}]: error: {exc}", file=sys.stderr)
        return 2
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
