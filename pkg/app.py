import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from lib.config import KINDS, ScenarioConfig, load_config, parse_config
from lib.errors import ConfigError
from services.scenario_service import EXIT_CONFIG, EXIT_OK, RunReport, ScenarioService
from utils.acceptance import AcceptanceManager

LOG_LEVEL_ENV = "LRKIT_LOG_LEVEL"


def configure_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrkit",
        description="Invariant, density-matrix and supersymmetric scenario runner",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"Run a {kind} scenario")
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out", help="Output directory for this run")
        p.add_argument("--check", action="store_true", help="Enforce acceptance thresholds via the exit code")
        p.add_argument("--verbose", action="store_true", help="Debug logging")

    pb = sub.add_parser("batch", help="Run several configs, one output directory each")
    pb.add_argument("--configs", nargs="+", required=True, help="JSON config files")
    pb.add_argument("--workers", type=int, default=1, help="Concurrent scenarios")
    pb.add_argument("--check", action="store_true", help="Enforce acceptance thresholds via the exit code")
    pb.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def resolve_config(kind: str, path: Optional[str], out: Optional[str]) -> ScenarioConfig:
    cfg = load_config(path) if path else parse_config(json.dumps({'kind': kind}))
    if cfg.kind != kind:
        raise ConfigError([f"kind: config declares {cfg.kind!r} but the {kind!r} subcommand was used"])
    return cfg.with_output_dir(out) if out else cfg


def print_report(report: RunReport):
    acceptance = AcceptanceManager()
    print(f"{report.kind}: {report.run_dir}")
    for name, check in report.checks.items():
        print(f"  {acceptance.format_check(name, check)}")
    if report.error:
        print(f"  ❌ {report.error}")
    print(f"  exit {report.exit_code} ({report.duration_seconds:.2f}s)")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    service = ScenarioService()

    try:
        if args.cmd == "batch":
            configs = [load_config(path) for path in args.configs]
        else:
            configs = [resolve_config(args.cmd, args.config, args.out)]
    except ConfigError as e:
        for message in e.errors:
            print(f"❌ {message}", file=sys.stderr)
        return EXIT_CONFIG

    if args.cmd == "batch":
        reports = service.run_batch(configs, check=args.check, workers=max(1, args.workers))
    else:
        reports = [service.run_scenario(configs[0], check=args.check)]

    for report in reports:
        print_report(report)
    return max((r.exit_code for r in reports), default=EXIT_OK)


if __name__ == "__main__":
    sys.exit(main())
