"""``csys check``: run rules over XMI models or raw token files.

Exit status: 0 when every file passes, 1 when any file has a violation, 2 on
a processing or usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .automata import ControllingAutomaton, RuleError, compile_rule
from .grammar import DEFAULT_MAX_TRACES, Grammar, GrammarError, compile_grammar
from .report import (
    check_model,
    check_tokens,
    exit_code,
    grammar_system,
    to_json,
    to_text,
)
from .rules import BUILTIN_IDS, RuleConfig, builtin_rule
from .system import CSystemError
from .xmi import uml_grammar

RULE_PATH_ENV = "CSYS_RULE_PATH"


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csys", description="Check models against controlling rules.")
    sub = parser.add_subparsers(dest="command", required=True)
    check = sub.add_parser("check", help="check XMI models (or token files with --grammar)")
    check.add_argument("files", nargs="+", metavar="FILE")
    check.add_argument(
        "--rule",
        action="append",
        default=[],
        metavar="ID_OR_PATH",
        help=f"built-in id ({', '.join(BUILTIN_IDS)}) or rule file; repeatable; default: all built-ins",
    )
    check.add_argument("--max-attrs", type=int, default=None, metavar="N", help="attribute limit for R2 (default 30)")
    check.add_argument("--format", choices=("text", "structured"), default="text")
    check.add_argument("--trace", action="store_true", help="include the production-label sequence")
    check.add_argument("--no-normalize", action="store_true", help="skip fork/join and edge reordering")
    check.add_argument("--grammar", metavar="FILE", help="controlled grammar for whitespace-tokenized inputs")
    check.add_argument("--max-traces", type=int, default=DEFAULT_MAX_TRACES, metavar="N")
    check.add_argument("--no-timing", action="store_true", help="omit elapsed time so reports are reproducible")
    check.add_argument("--jobs", type=int, default=1, metavar="N", help="files checked in parallel")
    return parser


def _search_dirs() -> list[Path]:
    raw = os.environ.get(RULE_PATH_ENV, "")
    return [Path(p) for p in raw.split(os.pathsep) if p]


def resolve_rule_file(ref: str) -> Path:
    direct = Path(ref)
    if direct.is_file():
        return direct
    for d in _search_dirs():
        for name in (ref, f"{ref}.rule"):
            if (d / name).is_file():
                return d / name
    raise UsageError(f"rule {ref!r} is neither a built-in id nor a readable rule file")


def load_rules(refs: Sequence[str], config: RuleConfig, grammar: Grammar | None) -> list[ControllingAutomaton]:
    out: list[ControllingAutomaton] = []
    seen: set[str] = set()
    for ref in refs:
        if ref in BUILTIN_IDS and grammar is None:
            rule = builtin_rule(ref, config)
        else:
            path = resolve_rule_file(ref)
            try:
                rule = compile_rule(path.read_text(encoding="utf-8"), grammar or uml_grammar())
            except RuleError as exc:
                where = f":{exc.line}" if getattr(exc, "line", None) else ""
                raise UsageError(f"{path}{where}: {exc}") from exc
            except OSError as exc:
                raise UsageError(f"cannot read rule file {path}: {exc.strerror or exc}") from exc
        if rule.rule_id in seen:
            raise UsageError(f"rule {rule.rule_id!r} given twice")
        seen.add(rule.rule_id)
        out.append(rule)
    return out


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        return _check(args)
    except UsageError as exc:
        print(f"csys: {exc}", file=sys.stderr)
        return 2


def _check(args: argparse.Namespace) -> int:
    if args.max_attrs is not None and args.max_attrs < 1:
        raise UsageError("--max-attrs must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    config = RuleConfig(max_attributes=args.max_attrs or RuleConfig().max_attributes)
    timing = not args.no_timing

    if args.grammar:
        try:
            grammar = compile_grammar(Path(args.grammar).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read grammar {args.grammar}: {exc.strerror or exc}") from exc
        except GrammarError as exc:
            raise UsageError(f"{args.grammar}: {exc}") from exc
        rules = load_rules(args.rule, config, grammar)
        try:
            system = grammar_system(grammar, rules)
        except CSystemError as exc:
            raise UsageError(str(exc)) from exc

        def one(path: str):
            return check_tokens(path, system, max_traces=args.max_traces, timing=timing, keep_trace=args.trace)

    else:
        rules = load_rules(args.rule or list(BUILTIN_IDS), config, None)

        def one(path: str):
            return check_model(
                path,
                rules,
                config,
                normalize=not args.no_normalize,
                max_traces=args.max_traces,
                timing=timing,
                keep_trace=args.trace,
            )

    if args.jobs > 1 and len(args.files) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, args.files))
    else:
        reports = [one(f) for f in args.files]

    out = to_json(reports) if args.format == "structured" else to_text(reports)
    sys.stdout.write(out)
    return exit_code(reports)


def main() -> None:
    sys.exit(run_cli())
