"""Command-line entry point.

    isacsim list-kinds [--json]
    isacsim run --config scenario.toml [--seed N] [--out DIR] [--workers N] [--plot]
    isacsim <kind> [--set key=value ...] [--seed N] [--out DIR] [--workers N] [--plot]

Values given with ``--set`` are TOML literals (``--set rho=[0.3,0.6]``,
``--set window='"hamming"'``); bare words are taken as strings.
Validation errors exit with status 2, pipeline failures with status 1, and
both print a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import __version__
from .runner import OUTPUT_ENV, error_record, resolve_output_dir, run
from .scenario import KINDS, ScenarioError, describe_kinds, load_scenario, parse_scenario, tomllib

__all__ = ["main", "build_parser"]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--out", default=None, help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("--workers", type=int, default=1, help="worker threads for Monte Carlo blocks")
    p.add_argument("--plot", action="store_true", help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isacsim", description="Radar, OFDM and ISAC experiments.")
    parser.add_argument("--version", action="version", version=f"isacsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    lk = sub.add_parser("list-kinds", help="print the parameter schema of every experiment kind")
    lk.add_argument("--json", action="store_true", help="machine-readable output")

    rp = sub.add_parser("run", help="run a scenario file")
    rp.add_argument("--config", required=True, help="TOML scenario file")
    _add_run_options(rp)

    for kind in KINDS:
        kp = sub.add_parser(kind, help=f"run a {kind} experiment from defaults")
        kp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a parameter")
        _add_run_options(kp)
    return parser


def _parse_override(item: str):
    if "=" not in item:
        raise ScenarioError(f"--set {item!r}: expected KEY=VALUE")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _print_kinds(as_json: bool) -> None:
    schema = describe_kinds()
    if as_json:
        print(json.dumps(schema, indent=2))
        return
    for kind, params in schema.items():
        print(f"[{kind}]")
        width = max(len(k) for k in params)
        for key, info in params.items():
            print(f"  {key:<{width}}  {info['type']:<10} default={info['default']!r}  {info['doc']}")
        print()


def _fail(rec: dict, code: int) -> int:
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-kinds":
        _print_kinds(args.json)
        return 0

    try:
        if args.command == "run":
            scenario = load_scenario(args.config)
        else:
            params = dict(_parse_override(s) for s in args.set)
            scenario = parse_scenario({"kind": args.command, "params": params})
        scenario = scenario.with_seed(args.seed)
        if args.workers < 1:
            raise ScenarioError("--workers: must be at least 1", "workers")
    except (ScenarioError, OSError) as exc:
        return _fail(error_record(exc, "validation"), 2)

    out_dir = resolve_output_dir(args.out, scenario)
    result = run(scenario, out_dir, workers=args.workers, plot=args.plot)
    if result.exit_code:
        return _fail(result.error, result.exit_code)
    print(json.dumps({"status": "ok", "kind": scenario.kind, "out": str(out_dir),
                      "files": [f.name for f in result.files]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
