"""Controlled grammar plus controlling automata: membership and family tags."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .automata import ControllingAutomaton, UnclassifiableEvent, Verdict, as_automaton
from .grammar import (
    DEFAULT_MAX_TRACES,
    DerivationTrace,
    Grammar,
    ProductionEvent,
    TokenInput,
    parse_traces,
)

REGULAR = "R"
CONTEXT_FREE = "CF"


class CSystemError(ValueError):
    pass


@dataclass(frozen=True)
class CSystem:
    """A controlled grammar and a non-empty set of controls over its labels.

    A string belongs to the system language when one of its leftmost
    derivations is accepted by every control.
    """

    controlled: Grammar
    controls: tuple[ControllingAutomaton, ...]
    family: tuple[str, str] = field(init=False)

    def __init__(self, controlled: Grammar, controls: Iterable) -> None:
        wrapped = []
        for k, c in enumerate(controls):
            if not isinstance(c, ControllingAutomaton):
                c = as_automaton(c, f"control-{k + 1}")
            wrapped.append(c)
        if not wrapped:
            raise CSystemError("a C-System needs at least one control")
        for c in wrapped:
            missing = [lab for lab in controlled.labels if not c.alphabet.covers_label(lab)]
            if missing:
                raise CSystemError(
                    f"control {c.rule_id} does not classify labels {', '.join(missing)}"
                )
        object.__setattr__(self, "controlled", controlled)
        object.__setattr__(self, "controls", tuple(wrapped))
        kind = REGULAR if controlled.is_right_linear() else CONTEXT_FREE
        ctl = CONTEXT_FREE if any(c.kind == "pushdown" for c in wrapped) else REGULAR
        object.__setattr__(self, "family", (kind, ctl))


def classify(c: CSystem) -> str:
    x, y = c.family
    return f"C_{x}^{y}"


class Status(enum.Enum):
    IN_GLOBAL_LANGUAGE = "in_global_language"
    REJECTED_BY_CONTROLLED = "rejected_by_controlled"
    REJECTED_BY_CONTROLS = "rejected_by_controls"


@dataclass(frozen=True)
class ControlDetail:
    rule_id: str
    first_dead_index: int  # furthest first-dead index over all traces


@dataclass(frozen=True)
class Membership:
    status: Status
    traces: tuple[DerivationTrace, ...] = ()
    accepted_trace: DerivationTrace | None = None
    details: tuple[ControlDetail, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.status is Status.IN_GLOBAL_LANGUAGE

    def __bool__(self) -> bool:
        return self.accepted


def membership(
    c: CSystem, tokens: TokenInput, max_traces: int = DEFAULT_MAX_TRACES
) -> Membership:
    """Decide whether ``tokens`` is in the system language.

    :class:`~csys.grammar.TraceBudgetExceeded` propagates when the input
    has more than ``max_traces`` derivations.
    """
    traces = tuple(parse_traces(c.controlled, tokens, max_traces))
    if not traces:
        return Membership(Status.REJECTED_BY_CONTROLLED)
    best = [-1] * len(c.controls)
    for t in traces:
        verdicts = check_trace(c, t)
        if all(verdicts):
            return Membership(Status.IN_GLOBAL_LANGUAGE, traces, t)
        for k, v in enumerate(verdicts):
            if not v:
                best[k] = max(best[k], v.dead_index)
    details = tuple(
        ControlDetail(ctl.rule_id, b) for ctl, b in zip(c.controls, best) if b >= 0
    )
    return Membership(Status.REJECTED_BY_CONTROLS, traces, None, details)


def check_trace(c: CSystem, trace: Sequence[ProductionEvent]) -> list[Verdict]:
    """Feed ``trace`` to every control in one pass; one verdict per control."""
    controls = c.controls
    runs = [ctl.run() for ctl in controls]
    dead: list[int | None] = [None] * len(controls)
    live = len(controls)
    n = 0
    for n, event in enumerate(trace, 1):
        if not live:
            break
        for k, ctl in enumerate(controls):
            if dead[k] is not None:
                continue
            try:
                symbol = ctl.alphabet.classify(event)
            except UnclassifiableEvent as exc:
                raise UnclassifiableEvent(f"rule {ctl.rule_id}: {exc}") from exc
            if not runs[k].advance(symbol):
                dead[k] = n - 1
                live -= 1
    end = len(trace)
    out = []
    for k, run in enumerate(runs):
        if dead[k] is not None:
            out.append(Verdict(False, dead[k]))
        elif run.accepting():
            out.append(Verdict(True))
        else:
            out.append(Verdict(False, end))
    return out
