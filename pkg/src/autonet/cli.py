"""Command-line entry point.

Exit statuses: 0 success, 1 acceptance failure or replay mismatch,
2 bad usage, 3 configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .eventlog import LogFormatError
from .harness.config import CONFIG_DIR_ENV, ConfigError, load_run_config
from .harness.runner import MODE_CHOICES, execute, replay, write_outputs
from .harness.report import render_report
from .toolbox import InvocationError, register_defaults

EXIT_OK, EXIT_ACCEPTANCE, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
CASES = ("case-a", "case-b", "all")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", default=None,
                   help=f"config directory, a single scenario file, or 'default' (env {CONFIG_DIR_ENV})")
    p.add_argument("--kb", metavar="PATH", default=None, help="knowledge-base YAML (default: <config>/knowledge.yaml)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--mode", action="append", choices=MODE_CHOICES,
                   help="run only this mode; repeatable (default: all modes)")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit 1 if any acceptance check fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autonet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run scenarios and write traces, MTTR table, report and logs")
    run.add_argument("case", choices=CASES)
    _run_flags(run)
    for case in CASES:
        _run_flags(sub.add_parser(case, help=f"shorthand for 'run {case}'"))
    val = sub.add_parser("validate", help="parse and check configs and the knowledge base")
    val.add_argument("--config", metavar="PATH", default=None)
    val.add_argument("--kb", metavar="PATH", default=None)
    tools = sub.add_parser("tools", help="print the tool registry")
    tools.add_argument("--latency", metavar="TOOL=MS", action="append", default=[],
                       help="latency override, repeatable")
    rep = sub.add_parser("replay", help="re-run the scenario of a stored event log and compare")
    rep.add_argument("log", type=Path)
    return parser


def _cases(name: str) -> list[str]:
    return ["case-a", "case-b"] if name == "all" else [name]


def _cmd_run(args, case: str) -> int:
    cfg = load_run_config(_cases(case), args.config, args.kb, args.out, args.seed)
    out = execute(cfg, args.mode)
    write_outputs(out, cfg.out_dir)
    print(render_report([r.trace for r in out.case_a], [r.record for r in out.case_b], out.checks), end="")
    print(f"outputs written to {cfg.out_dir}")
    if args.check and not out.passed:
        return EXIT_ACCEPTANCE
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_run_config(["case-a", "case-b"], args.config, args.kb, "out")
    print(f"case-a: ok ({cfg.case_a.horizon_s} s horizon, {cfg.case_a.background.flows} background flows)")
    print(f"case-b: ok ({len(cfg.case_b.nodes)} nodes, {len(cfg.case_b.faults)} faults)")
    print(f"knowledge base: ok ({len(cfg.kb.fault_cases)} fault cases, {len(cfg.kb.slas)} SLAs)")
    return EXIT_OK


def _cmd_tools(args) -> int:
    overrides = {}
    for item in args.latency:
        name, sep, ms = item.partition("=")
        if not sep or not ms.isdigit():
            raise ConfigError(f"bad --latency {item!r}; expected TOOL=MS")
        overrides[name] = int(ms)
    try:
        reg = register_defaults(overrides)
    except InvocationError as exc:
        raise ConfigError(str(exc)) from None
    print(reg.dump(), end="")
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        result = replay(args.log)
    except (FileNotFoundError, LogFormatError) as exc:
        print(f"autonet: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(result.message)
    return EXIT_OK if result.ok else EXIT_ACCEPTANCE


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, args.case)
        if args.command in CASES:
            return _cmd_run(args, args.command)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "tools":
            return _cmd_tools(args)
        return _cmd_replay(args)
    except ConfigError as exc:
        print(f"autonet: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
