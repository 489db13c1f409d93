"""Command-line entry point: ``expertbounds <command>``.

Exit codes: 0 on success, 1 on a validation error (bad config, bad parameter), 2 on any
other runtime failure.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from expertbounds.__version__ import __version__
from expertbounds.datatypes.config_types import ExperimentConfig
from expertbounds.errors import ConfigError, ExpertBoundsError, ParameterError
from expertbounds.harness.compare import ab_compare
from expertbounds.harness.config import apply_overrides, load_experiment_config, write_experiment_config
from expertbounds.harness.layout import BENCHMARK_FILE, CONFIG_FILE, LOG_FILE, METRICS_FILE
from expertbounds.harness.pipeline import reevaluate_run, run_pipeline
from expertbounds.harness.report import emit_report, load_metrics_report, model_to_json
from expertbounds.harness.selftest import run_selftest
from expertbounds.paths import DEFAULT_CONFIG_PATH
from expertbounds.settings import settings
from expertbounds.synth.benchmark import build_benchmark
from expertbounds.synth.storage import benchmark_hash, write_benchmark

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    values = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        values[key.strip()] = value.strip()
    return values


def _config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment_config(Path(args.config))
    return apply_overrides(config, _overrides(args.set)) if args.set else config


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out) if args.out else Path(settings.RUNS_DIR) / Path(args.config).stem


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate the benchmark only."""
    config = _config(args)
    out = _out_dir(args)
    benchmark = build_benchmark(config.benchmark)
    write_experiment_config(config, out / CONFIG_FILE)
    write_benchmark(benchmark, out / BENCHMARK_FILE)
    logger.info(f"Benchmark {benchmark_hash(benchmark)[:12]} written to {out / BENCHMARK_FILE}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    """Run the full pipeline."""
    config = _config(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    sink = logger.add(out / LOG_FILE, level="DEBUG", mode="w")
    try:
        artifact = run_pipeline(config, out)
    finally:
        logger.remove(sink)
    logger.info(f"Run finished: {artifact.run_dir / METRICS_FILE}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Recompute metrics from a run's decision log."""
    report = reevaluate_run(Path(args.run))
    logger.info(f"Recomputed metrics over {report.metadata.queries} queries")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Emit a run's report as JSON or CSV tables."""
    written = emit_report(Path(args.run), args.format, Path(args.out) if args.out else None)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_ab(args: argparse.Namespace) -> int:
    """Compare two runs metric by metric."""
    comparison = ab_compare(
        load_metrics_report(Path(args.run_a) / METRICS_FILE), load_metrics_report(Path(args.run_b) / METRICS_FILE)
    )
    text = model_to_json(comparison)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    """Run the numeric invariant suite."""
    results = run_selftest(load_experiment_config(Path(args.config)), samples=args.samples, seed=args.seed)
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_serve(args: argparse.Namespace) -> int:
    """Serve a finished run over HTTP."""
    import uvicorn

    from expertbounds.app import create_app_from_dir

    uvicorn.run(create_app_from_dir(Path(args.run)), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(prog="expertbounds", description="Expert-boundary testbed for mixtures of experts")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, handler, help_text in (
        ("synth", cmd_synth, "generate the benchmark"),
        ("run", cmd_run, "run the full pipeline"),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", default=str(DEFAULT_CONFIG_PATH), help="experiment config file")
        sub.add_argument("--out", default=None, help="run directory (default: RUNS_DIR/<config name>)")
        sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sub.set_defaults(handler=handler)

    sub = commands.add_parser("eval", help="recompute metrics from a run's decision log")
    sub.add_argument("--run", required=True, help="run directory")
    sub.set_defaults(handler=cmd_eval)

    sub = commands.add_parser("report", help="emit a run's report")
    sub.add_argument("--run", required=True, help="run directory")
    sub.add_argument("--format", choices=("json", "csv"), default="json")
    sub.add_argument("--out", default=None, help="destination directory (default: <run>/report)")
    sub.set_defaults(handler=cmd_report)

    sub = commands.add_parser("ab", help="compare two runs on the same benchmark")
    sub.add_argument("--run-a", required=True, help="baseline run directory")
    sub.add_argument("--run-b", required=True, help="treatment run directory")
    sub.add_argument("--out", default=None, help="write the comparison here instead of stdout")
    sub.set_defaults(handler=cmd_ab)

    sub = commands.add_parser("selftest", help="run the numeric invariant suite")
    sub.add_argument("--config", default=str(DEFAULT_CONFIG_PATH), help="config whose network shapes are checked")
    sub.add_argument("--samples", type=int, default=10_000, help="random distributions to check")
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(handler=cmd_selftest)

    sub = commands.add_parser("serve", help="serve a finished run over HTTP")
    sub.add_argument("--run", required=True, help="run directory")
    sub.add_argument("--host", default=settings.SERVE_HOST)
    sub.add_argument("--port", type=int, default=settings.SERVE_PORT)
    sub.set_defaults(handler=cmd_serve)
    return parser


def configure_logging() -> None:
    """Send log records to stderr at the configured level."""
    logger.remove()
    logger.add(sys.stderr, level=settings.LOG_LEVEL)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the command and translate errors to exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        return args.handler(args)
    except (ConfigError, ParameterError, ValidationError) as e:
        logger.error(f"Validation error: {e}")
        return EXIT_VALIDATION
    except ExpertBoundsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
