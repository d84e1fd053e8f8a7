"""Run rules over a model file and collect anchored violations."""

from __future__ import annotations

import json
import re
import time
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .automata import (
    ConfigurationBudgetExceeded,
    ControllingAutomaton,
    FiniteRun,
    UnclassifiableEvent,
    intersect,
    universal_control,
)
from .grammar import (
    DEFAULT_MAX_TRACES,
    DerivationTrace,
    Grammar,
    ParseError,
    ProductionEvent,
    Token,
    TraceBudgetExceeded,
    parse_raw,
)
from .rules import RuleConfig, builtin_rules
from .system import CSystem, Status, check_trace, membership
from .xmi import (
    ModelElement,
    XmiError,
    XmiSyntaxError,
    dangling_references,
    derive_tree,
    index_ids,
    parent_map,
    read_model,
)

PASS, FAIL, ERROR = "pass", "fail", "error"


@dataclass
class Violation:
    rule_id: str
    message: str
    event_index: int
    byte_span: tuple[int, int] | None
    line: int | None
    column: int | None
    element_id: str | None = None
    element_name: str | None = None
    event: str = ""


@dataclass
class ProcessingError:
    message: str
    byte_offset: int | None = None
    line: int | None = None
    column: int | None = None


@dataclass
class Report:
    file: str
    verdict: str
    violations: list[Violation] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: ProcessingError | None = None
    trace: list[str] | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for v in d["violations"]:
            if v["byte_span"] is not None:
                v["byte_span"] = list(v["byte_span"])
        if d["trace"] is None:
            del d["trace"]
        return d


class _Positions:
    """Byte offset -> (line, character column), both 1-based."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.starts = [0] + [m.end() for m in re.finditer(b"\n", data)]

    def __call__(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self.starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        col = len(self.data[self.starts[lo] : offset].decode("utf-8", errors="replace")) + 1
        return lo + 1, col


# -- rule evaluation -------------------------------------------------------------------


def _finite_violations(rule: ControllingAutomaton, trace: Sequence[ProductionEvent]) -> list[int]:
    """Every dead event index; a dead event is skipped and the run continues."""
    run = FiniteRun(rule.finite)
    classify = rule.alphabet.classify
    dead = [i for i, e in enumerate(trace) if not run.advance(classify(e))]
    if not run.accepting():
        dead.append(max(len(trace) - 1, 0))
    return dead


def _first_violation(rule: ControllingAutomaton, trace: Sequence[ProductionEvent]) -> list[int]:
    run = rule.run()
    classify = rule.alphabet.classify
    for i, e in enumerate(trace):
        if not run.advance(classify(e)):
            return [i]
    return [] if run.accepting() else [max(len(trace) - 1, 0)]


def evaluate_rules(
    rules: Sequence[ControllingAutomaton], trace: Sequence[ProductionEvent]
) -> list[tuple[ControllingAutomaton, int]]:
    """``(rule, event_index)`` for each violation, in rule order.

    Two or more finite rules are first checked together through their
    intersection; only on rejection is each one replayed alone to find out
    which rule failed where.
    """
    finite = [r for r in rules if r.kind == "finite"]
    clean: set[str] = set()
    if len(finite) >= 2:
        product = finite[0].finite
        for r in finite[1:]:
            product = intersect(product, r.finite)
        run = FiniteRun(product)
        if all(run.advance(product.alphabet.classify(e)) for e in trace) and run.accepting():
            clean = {r.rule_id for r in finite}
    out = []
    for r in rules:
        if r.rule_id in clean:
            continue
        try:
            hits = _finite_violations(r, trace) if r.kind == "finite" else _first_violation(r, trace)
        except UnclassifiableEvent as exc:
            raise UnclassifiableEvent(f"rule {r.rule_id}: {exc}") from exc
        out.extend((r, i) for i in hits)
    return out


# -- XMI models ------------------------------------------------------------------------


def _anchor(
    element_id: str | None, ids: dict[str, ModelElement], parents: dict[int, ModelElement]
) -> ModelElement | None:
    """Nearest element, from the event's own outward, that has both a name and an id."""
    e = ids.get(element_id) if element_id is not None else None
    start = e
    while e is not None:
        if e.name is not None and e.xmi_id is not None:
            return e
        e = parents.get(id(e))
    return start


def _message(rule: ControllingAutomaton, event: ProductionEvent | None, at_end: bool) -> str:
    what = rule.description or "rule violated"
    if event is None:
        return what
    if at_end:
        return f"{what} (trace ends in a rejecting state after {event})"
    return f"{what} (rejected at {event})"


def check_model(
    path: str | Path,
    rules: Iterable[ControllingAutomaton] | None = None,
    config: RuleConfig | None = None,
    *,
    normalize: bool = True,
    max_traces: int = DEFAULT_MAX_TRACES,
    timing: bool = True,
    keep_trace: bool = False,
) -> Report:
    """Check one XMI file against ``rules`` (all built-ins when omitted)."""
    started = time.perf_counter()
    rules = list(rules) if rules is not None else builtin_rules(config)
    report = Report(file=str(path), verdict=PASS)
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        return _failed(report, ProcessingError(f"cannot read file: {exc.strerror or exc}"), rules, started, timing)
    where = _Positions(data)
    try:
        text = data.decode("utf-8")
        tree = read_model(text, normalize=normalize, warnings=report.warnings)
        for e, attr, value in dangling_references(tree):
            label = e.name or e.xmi_id or e.qname
            report.warnings.append(f"{label}: {attr} refers to unknown id {value!r}")
        derivation = derive_tree(tree, max_traces=max_traces)
    except UnicodeDecodeError as exc:
        return _failed(report, _at(f"not UTF-8: {exc.reason}", exc.start, where), rules, started, timing)
    except XmiSyntaxError as exc:
        return _failed(report, _at(str(exc).split(": ", 1)[-1], exc.offset, where), rules, started, timing)
    except XmiError as exc:
        return _failed(report, _at(str(exc), exc.span[0] if exc.span else None, where), rules, started, timing)
    except ParseError as exc:
        offset = exc.span[0] if exc.span else None
        return _failed(report, _at(f"not derivable with the UML grammar: {exc}", offset, where), rules, started, timing)
    except TraceBudgetExceeded as exc:
        return _failed(report, ProcessingError(str(exc)), rules, started, timing)

    trace = derivation.trace
    if derivation.traces > 1:
        report.warnings.append(f"{derivation.traces} derivations; checking the first")
    if keep_trace:
        report.trace = [str(e) for e in trace]
    try:
        hits = evaluate_rules(rules, trace)
    except (UnclassifiableEvent, ConfigurationBudgetExceeded) as exc:
        return _failed(report, ProcessingError(str(exc)), rules, started, timing, len(trace))

    ids = index_ids(tree)
    parents = parent_map(tree)
    for rule, index in hits:
        event = trace[index] if trace else None
        anchor = _anchor(event.element_id if event else None, ids, parents)
        span = event.span if event and event.span else (anchor.span if anchor else None)
        line, col = where(span[0]) if span else (None, None)
        report.violations.append(
            Violation(
                rule_id=rule.rule_id,
                message=_message(rule, event, at_end=index == len(trace) - 1 and _ends_badly(rule, trace)),
                event_index=index,
                byte_span=anchor.span if anchor else span,
                line=line,
                column=col,
                element_id=anchor.xmi_id if anchor else None,
                element_name=anchor.name if anchor else None,
                event=str(event) if event else "",
            )
        )
    report.violations.sort(key=lambda v: (v.event_index, v.rule_id))
    report.verdict = FAIL if report.violations else PASS
    report.stats = _stats(len(trace), len(rules), started, timing)
    return report


def _ends_badly(rule: ControllingAutomaton, trace: Sequence[ProductionEvent]) -> bool:
    run = rule.run()
    classify = rule.alphabet.classify
    for e in trace:
        if not run.advance(classify(e)):
            return False
    return not run.accepting()


def _at(message: str, offset: int | None, where: _Positions) -> ProcessingError:
    if offset is None:
        return ProcessingError(message)
    line, col = where(offset)
    return ProcessingError(message, offset, line, col)


def _stats(events: int, rules: int, started: float, timing: bool) -> dict:
    elapsed = round((time.perf_counter() - started) * 1000, 3) if timing else None
    return {"events": events, "rules": rules, "elapsed_ms": elapsed}


def _failed(
    report: Report,
    error: ProcessingError,
    rules: Sequence,
    started: float,
    timing: bool,
    events: int = 0,
) -> Report:
    report.verdict = ERROR
    report.error = error
    report.stats = _stats(events, len(rules), started, timing)
    return report


# -- raw token files against a user grammar --------------------------------------------


def read_token_file(data: bytes) -> list[Token]:
    """Whitespace-separated tokens; each token's kind and text is the word itself."""
    out = []
    for m in re.finditer(rb"\S+", data):
        word = m.group().decode("utf-8")
        out.append(Token(word, word, (m.start(), m.end())))
    return out


def check_tokens(
    path: str | Path,
    system: CSystem,
    *,
    max_traces: int = DEFAULT_MAX_TRACES,
    timing: bool = True,
    keep_trace: bool = False,
) -> Report:
    """Membership of a whitespace-tokenized file in a C-System's language."""
    started = time.perf_counter()
    rules = system.controls
    report = Report(file=str(path), verdict=PASS)
    try:
        data = Path(path).read_bytes()
        tokens = read_token_file(data)
    except OSError as exc:
        return _failed(report, ProcessingError(f"cannot read file: {exc.strerror or exc}"), rules, started, timing)
    except UnicodeDecodeError as exc:
        return _failed(report, ProcessingError(f"not UTF-8: {exc.reason}", exc.start), rules, started, timing)
    where = _Positions(data)
    try:
        result = membership(system, tokens, max_traces)
        if result.status is Status.REJECTED_BY_CONTROLLED:
            parse_raw(system.controlled, tokens, max_traces)
            raise ParseError("input is not in the controlled language", len(tokens), None)
    except ParseError as exc:
        offset = exc.span[0] if exc.span else (len(data) if exc.position >= len(tokens) else None)
        return _failed(report, _at(str(exc), offset, where), rules, started, timing)
    except (TraceBudgetExceeded, UnclassifiableEvent, ConfigurationBudgetExceeded) as exc:
        return _failed(report, ProcessingError(str(exc)), rules, started, timing)

    trace = result.accepted_trace or result.traces[0]
    if result.status is Status.REJECTED_BY_CONTROLS:
        trace, hits = _best_rejection(system, result.traces)
        for rule, index, at_end in hits:
            event = trace[index] if index < len(trace) else None
            span = event.span if event else None
            line, col = where(span[0]) if span else (None, None)
            report.violations.append(
                Violation(rule.rule_id, _message(rule, event, at_end), index, span, line, col, event=str(event or ""))
            )
        report.verdict = FAIL
    if keep_trace:
        report.trace = [str(e) for e in trace]
    report.stats = _stats(len(trace), len(rules), started, timing)
    return report


def _best_rejection(system: CSystem, traces: Sequence[DerivationTrace]):
    """The trace that gets furthest before the first control rejects it."""
    best = None
    for t in traces:
        verdicts = check_trace(system, t)
        score = min(v.dead_index for v in verdicts if not v)
        if best is None or score > best[0]:
            best = (score, t, verdicts)
    _, trace, verdicts = best
    hits = []
    for rule, v in zip(system.controls, verdicts):
        if not v:
            at_end = v.dead_index >= len(trace)
            hits.append((rule, min(v.dead_index, max(len(trace) - 1, 0)), at_end))
    return trace, hits


# -- output ----------------------------------------------------------------------------


def to_json(reports: Sequence[Report]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=2, ensure_ascii=False) + "\n"


def to_text(reports: Sequence[Report]) -> str:
    lines = []
    for r in reports:
        if r.verdict == ERROR:
            e = r.error
            pos = f":{e.line}:{e.column}" if e and e.line is not None else ""
            lines.append(f"{r.file}{pos}: error: {e.message if e else 'unknown error'}")
        else:
            n = len(r.violations)
            lines.append(
                f"{r.file}: {r.verdict.upper()} "
                f"({n} violation{'s' if n != 1 else ''}, {r.stats.get('events', 0)} events, "
                f"{r.stats.get('rules', 0)} rules)"
            )
        for v in r.violations:
            pos = f":{v.line}:{v.column}" if v.line is not None else ""
            anchor = " ".join(x for x in (v.element_name, v.element_id) if x)
            who = f" [{anchor}]" if anchor else ""
            lines.append(f"  {r.file}{pos}: {v.rule_id}: {v.message}{who} (event {v.event_index})")
        for w in r.warnings:
            lines.append(f"  warning: {w}")
        if r.trace is not None:
            lines.append("  trace: " + " ".join(r.trace))
    return "\n".join(lines) + "\n"


def exit_code(reports: Sequence[Report]) -> int:
    if any(r.verdict == ERROR for r in reports):
        return 2
    if any(r.verdict == FAIL for r in reports):
        return 1
    return 0


def grammar_system(grammar: Grammar, rules: Sequence[ControllingAutomaton]) -> CSystem:
    """C-System for raw token checks; with no rules, plain grammar membership."""
    return CSystem(grammar, list(rules) or [universal_control()])
