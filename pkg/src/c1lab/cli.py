"""Command line entry point: ``c1lab run|list|validate``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from .errors import C1LabError
from .scenario import list_scenarios, load_config, run_scenario, validate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="c1lab",
                                description="Numerical checks for trapped surfaces and "
                                            "causal structure of low-regularity metrics.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario (built-in name or YAML file)")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: the config's "
                                                 "'out' key, else ./out/<id>)")
    run.add_argument("--seed", type=int, default=None, help="RNG seed (unsigned 64-bit)")
    run.add_argument("--grid", type=int, default=None, help="causal grid cells per axis")
    sub.add_parser("list", help="list built-in scenarios")
    val = sub.add_parser("validate", help="check a config without running numerics")
    val.add_argument("config")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name}\t{desc}")
        return 0
    try:
        data = load_config(args.config)
    except (C1LabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        diags = validate(data)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return 2 if any(d.level == "error" for d in diags) else 0
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.grid is not None and args.grid < 4:
        print("error: --grid must be at least 4", file=sys.stderr)
        return 2
    out = args.out or data.get("out") or f"out/{data.get('id', 'scenario')}"
    res = run_scenario(data, out_dir=out, seed=args.seed, grid=args.grid)
    if res.exit_code == 2:
        print(f"error: {res.summary.get('error')}: {res.summary.get('message')}", file=sys.stderr)
        return 2
    for a in res.summary["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {a['detail']}")
    print(f"verdict: {res.summary['verdict']}")
    print(json.dumps({"out": str(out), "passed": res.summary["passed"]}))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
