"""Command line interface: run scenarios, validate configs, diff reports.

Exit codes: 0 success, 1 usage error, 2 config error, 3 run failure.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, parse_config_text
from .errors import (
    ConfigFileError,
    ConfigurationError,
    ReportMismatchError,
    SimulatorError,
)
from .report import build_report, diff_reports, render_text, report_to_json
from .simulation import run_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUN = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for config errors
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_config_text(name: str) -> tuple[str, str]:
    """Config text from a filesystem path or a bundled config name."""
    path = Path(name)
    if path.is_file():
        return path.read_text(), str(path)
    bundled = importlib.resources.files("hfsim").joinpath("configs", name)
    if bundled.is_file():
        return bundled.read_text(), f"builtin:{name}"
    raise ConfigFileError([(name, "config file not found (and no bundled config matches)")])


def bundled_config_names() -> list[str]:
    root = importlib.resources.files("hfsim").joinpath("configs")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def _print_config_problems(exc: ConfigFileError) -> None:
    print("config error:", file=sys.stderr)
    for key, reason in exc.problems:
        print(f"  {key}: {reason}", file=sys.stderr)


def execute_config(config: ScenarioConfig, want_trace: bool = False):
    """Run all (strategy x repeat) combinations of a validated config."""
    attacks = config.expanded_attacks()
    results = {}
    traces = {}
    for name, strategy in config.strategies.items():
        runs = []
        for r in range(config.repeats):
            seed = config.seed + r
            entries: list[dict] = []
            result = run_scenario(
                config.setup(), strategy, config.workload, attacks,
                config.costs, seed,
                trace=entries.append if want_trace else None,
            )
            runs.append(result)
            if want_trace:
                traces[(name, seed)] = entries
        results[name] = runs
    return results, traces


def _cmd_run(args) -> int:
    try:
        text, display = _load_config_text(args.config)
        config = parse_config_text(text)
        if args.repeats is not None:
            if args.repeats < 1:
                raise ConfigFileError([("--repeats", "must be >= 1")])
            config.repeats = args.repeats
        if args.seed is not None:
            config.seed = args.seed
    except ConfigFileError as exc:
        _print_config_problems(exc)
        return EXIT_CONFIG

    out_dir = Path(args.out)
    try:
        results, traces = execute_config(config, want_trace=args.trace)
        report = build_report(config, results)
    except ConfigFileError as exc:
        _print_config_problems(exc)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        # scenario inconsistency surfaced while wiring a run, before t=0
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulatorError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN

    # report is written only after every run has succeeded: no partial output
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report_to_json(report))
    (out_dir / "report.txt").write_text(render_text(report))
    for (name, seed), entries in traces.items():
        trace_path = out_dir / f"trace-{name}-{seed}.jsonl"
        with trace_path.open("w") as fh:
            for entry in entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(f"ran {display}: {sum(len(r) for r in results.values())} run(s)")
    print(render_text(report, include_attacks=False))
    print(f"report written to {out_dir / 'report.json'}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        text, display = _load_config_text(args.config)
        parse_config_text(text)
    except ConfigFileError as exc:
        _print_config_problems(exc)
        return EXIT_CONFIG
    print(f"OK {display}")
    return EXIT_OK


def _cmd_diff(args) -> int:
    try:
        a = json.loads(Path(args.report_a).read_text())
        b = json.loads(Path(args.report_b).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load reports: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        lines, flagged = diff_reports(a, b, tol_pct=args.tol)
    except ReportMismatchError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    for line in lines:
        print(line)
    if flagged:
        print("regressions beyond tolerance detected", file=sys.stderr)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hfsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hfsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config and write reports")
    p_run.add_argument("config", help="config path or bundled config name")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--repeats", type=int, default=None, help="override repeats")
    p_run.add_argument("--seed", type=int, default=None, help="override base seed")
    p_run.add_argument("--trace", action="store_true", help="dump event traces (JSONL)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config", help="config path or bundled config name")
    p_val.set_defaults(func=_cmd_validate)

    p_diff = sub.add_parser("diff", help="diff two report.json files")
    p_diff.add_argument("report_a")
    p_diff.add_argument("report_b")
    p_diff.add_argument("--tol", type=float, default=1.0,
                        help="tolerance in percent (default 1.0)")
    p_diff.set_defaults(func=_cmd_diff)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
