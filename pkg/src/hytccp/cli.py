"""Command-line driver: parse, check, run and explore .hyt models.

Exit codes: 0 normal termination (all-stop, suspension, max-time/steps),
1 tool or input error (missing file, parse error, bad flags),
2 model pathology (timelock, instantaneous divergence).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from typing import List, Optional

from .parser import ParseError, parse_program
from .simulator import (
    DEFAULT_DIVERGENCE_BUDGET,
    ReachabilityReport,
    RunOptions,
    Trace,
    explore,
    run,
)
from .syntax import Agent, Call, Change, Choice, Hide, KEEP, Now, Parallel, Program, Tell
from .constraints import LinCmp, TermEq, Num


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from exc


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hytccp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("input", help="path to a .hyt model")
        p.add_argument("--out", help="output path (default: stdout)")

    p_run = sub.add_parser("run", help="simulate one trace")
    add_common(p_run)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--policy", choices=["first", "random"], default="first")
    p_run.add_argument("--max-time", type=_fraction, default=Fraction(3600))
    p_run.add_argument("--max-steps", type=int, default=1_000_000)
    p_run.add_argument("--horizon", type=_fraction, default=None)
    p_run.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")

    p_explore = sub.add_parser("explore", help="bounded exhaustive reachability")
    add_common(p_explore)
    p_explore.add_argument("--depth", type=int, default=5)
    p_explore.add_argument("--time-samples", type=int, default=0)

    p_check = sub.add_parser("check", help="parse and run static checks")
    p_check.add_argument("input", help="path to a .hyt model")

    p_parse = sub.add_parser("parse", help="parse and pretty-print the model")
    add_common(p_parse)
    return parser


def _read_model(path: str) -> Program:
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_program(text, source=text)


def _write(payload: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def static_diagnostics(program: Program) -> List[str]:
    """Continuous-variable sanity: every read/KEEP variable must be initialized."""
    initialized: set = set()
    kept: set = set()
    invariant_reads: set = set()

    def walk(agent: Agent):
        if isinstance(agent, Change):
            if agent.value is KEEP or agent.flow is KEEP:
                kept.add(agent.var)
            else:
                initialized.add(agent.var)
        elif isinstance(agent, Parallel):
            walk(agent.left)
            walk(agent.right)
        elif isinstance(agent, Hide):
            walk(agent.body)
        elif isinstance(agent, Choice):
            for br in agent.ask_branches:
                walk(br.body)
            for inv in agent.cont_branches:
                for a in inv.atoms:
                    if isinstance(a, LinCmp) or (isinstance(a, TermEq) and isinstance(a.term, Num)):
                        invariant_reads.add(a.var)
        elif isinstance(agent, Now):
            walk(agent.then)
            walk(agent.orelse)

    for decl in program.declarations:
        walk(decl.body)
    walk(program.initial)
    issues = []
    for var in sorted((kept | invariant_reads) - initialized):
        issues.append(f"uninitialized continuous variable {var}: read or kept before any change({var}, value, flow)")
    return issues


def cmd_run(args) -> int:
    program = _read_model(args.input)
    options = RunOptions(
        max_time=args.max_time,
        max_discrete_steps=args.max_steps,
        horizon=args.horizon,
        policy=args.policy,
        seed=args.seed,
        divergence_budget=int(os.environ.get("HYTCCP_DIVERGENCE_BUDGET", DEFAULT_DIVERGENCE_BUDGET)),
    )
    trace = run(program, options)
    payload = trace.to_jsonl() if args.format == "jsonl" else trace.to_csv()
    _write(payload, args.out)
    terminal = trace.terminal
    kind = terminal.kind if terminal else "unknown"
    n_events = len(trace.events)
    print(f"hytccp run: {n_events} events, terminal={kind}, clock={terminal.clock if terminal else '?'}", file=sys.stderr)
    return 2 if kind in ("timelock", "instant_divergence") else 0


def cmd_explore(args) -> int:
    program = _read_model(args.input)
    report = explore(program, args.depth, args.time_samples)
    _write(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", args.out)
    print(f"hytccp explore: {len(report.states)} states at depth {args.depth}, complete={report.complete}", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    program = _read_model(args.input)
    issues = static_diagnostics(program)
    for issue in issues:
        print(f"error: {issue}", file=sys.stderr)
    if issues:
        return 1
    print(f"hytccp check: {args.input} OK ({len(program.declarations)} declarations)", file=sys.stderr)
    return 0


def cmd_parse(args) -> int:
    from .syntax import pretty

    program = _read_model(args.input)
    lines = []
    for name, value in program.constants.items():
        from .constraints import format_rational

        lines.append(f"const {name} = {format_rational(value)};")
    for decl in program.declarations:
        params = f"({', '.join(decl.params)})" if decl.params else ""
        lines.append(f"{decl.name}{params} :- {pretty(decl.body)}.")
    lines.append(pretty(program.initial))
    _write("\n".join(lines) + "\n", args.out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "explore": cmd_explore, "check": cmd_check, "parse": cmd_parse}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {args.input}:{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
