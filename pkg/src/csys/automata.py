"""Controlling automata over production events.

A rule file looks like::

    rule "R1-single-generalization"
    description "a class has at most one generalization"
    events
      c = 2k("Class")
      g = 2k("Generalization")
      D = other
    grammar
      S  -> c Qc | g S | D S | ε
      Qc -> c Qc | g Qg | D Qc | ε
      Qg -> c Qc | D Qg | ε

Event classes partition production events.  A class matches a label exactly,
the choice-expanded members of a label family (``2k`` matches ``2k_1`` and
``2k_2``), optionally restricted to one parameter; ``other`` is the
complement of every declared class.  Right-linear grammars compile to a
minimal deterministic :class:`FiniteControl`, anything else to a
:class:`PushdownControl`.
"""

from __future__ import annotations

import re
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .grammar import (
    Grammar,
    GrammarError,
    ProductionEvent,
    _strip_comment,
    compile_grammar,
    label_family,
)

DEFAULT_PDA_BUDGET = 100_000

WILDCARD = "other"


class RuleError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnclassifiableEvent(ValueError):
    """An event matches no class and the alphabet has no wildcard."""


class ConfigurationBudgetExceeded(RuntimeError):
    """A pushdown run produced more configurations than its budget allows."""


@dataclass(frozen=True)
class Atom:
    label: str
    parameter: str | None = None

    def matches(self, event: ProductionEvent) -> bool:
        if event.label != self.label and label_family(event.label) != self.label:
            return False
        return self.parameter is None or event.parameter == self.parameter

    def within(self, other: Atom) -> bool:
        """Every event matched by ``self`` is matched by ``other``."""
        if not (other.label == self.label or other.label == label_family(self.label)):
            return False
        return other.parameter is None or other.parameter == self.parameter

    def overlaps(self, other: Atom) -> bool:
        a, b = self.label, other.label
        if not (a == b or label_family(a) == b or label_family(b) == a):
            return False
        return self.parameter is None or other.parameter is None or self.parameter == other.parameter

    def __str__(self) -> str:
        if self.parameter is None:
            return self.label
        return f'{self.label}("{self.parameter}")'


@dataclass(frozen=True)
class EventClass:
    name: str
    atoms: tuple[Atom, ...] = ()
    wildcard: bool = False
    components: tuple[str, ...] = ()

    def matches(self, event: ProductionEvent) -> bool:
        return any(a.matches(event) for a in self.atoms)

    def overlaps(self, other: EventClass) -> bool:
        return any(a.overlaps(b) for a in self.atoms for b in other.atoms)

    def __str__(self) -> str:
        if self.wildcard:
            return f"{self.name} = {WILDCARD}"
        return f"{self.name} = " + " | ".join(str(a) for a in self.atoms)


class Alphabet:
    """An ordered set of pairwise disjoint event classes, at most one wildcard."""

    def __init__(self, classes: Iterable[EventClass]) -> None:
        self.classes: tuple[EventClass, ...] = tuple(classes)
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise RuleError(f"duplicate event class names: {names}")
        wild = [c for c in self.classes if c.wildcard]
        if len(wild) > 1:
            raise RuleError("at most one wildcard class may be declared")
        self.wildcard: EventClass | None = wild[0] if wild else None
        self._declared = [c for c in self.classes if not c.wildcard]
        for i, a in enumerate(self._declared):
            for b in self._declared[i + 1 :]:
                if a.overlaps(b):
                    raise RuleError(f"event classes {a.name} and {b.name} are not disjoint")
        self._by_name = {c.name: c for c in self.classes}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def __getitem__(self, name: str) -> EventClass:
        return self._by_name[name]

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def classify(self, event: ProductionEvent) -> str:
        for c in self._declared:
            if c.matches(event):
                return c.name
        if self.wildcard is not None:
            return self.wildcard.name
        raise UnclassifiableEvent(f"event {event} matches no class of {list(self.names)}")

    def covers_label(self, label: str) -> bool:
        """Every event with this label (any parameter) is classifiable."""
        if self.wildcard is not None:
            return True
        probe = ProductionEvent(label)
        return any(
            a.parameter is None and a.matches(probe) for c in self._declared for a in c.atoms
        )

    def __repr__(self) -> str:
        return f"Alphabet({list(self.names)})"


class ProductAlphabet(Alphabet):
    """Refinement of two alphabets: an event's class is the pair of its classes."""

    def __init__(self, left: Alphabet, right: Alphabet) -> None:
        self.left = left
        self.right = right
        classes = []
        for a in left.classes:
            for b in right.classes:
                if _disjoint(a, left, b, right):
                    continue
                classes.append(EventClass(_pair(a.name, b.name), components=(a.name, b.name)))
        self.classes = tuple(classes)
        self.wildcard = None
        self._declared = []
        self._by_name = {c.name: c for c in self.classes}

    def classify(self, event: ProductionEvent) -> str:
        return _pair(self.left.classify(event), self.right.classify(event))

    def covers_label(self, label: str) -> bool:
        return self.left.covers_label(label) and self.right.covers_label(label)


def _covered(c: EventClass, alphabet: Alphabet) -> bool:
    """Every event in the declared class ``c`` lands in a declared class of ``alphabet``."""
    return bool(c.atoms) and all(
        any(a.within(b) for d in alphabet._declared for b in d.atoms) for a in c.atoms
    )


def _disjoint(a: EventClass, left: Alphabet, b: EventClass, right: Alphabet) -> bool:
    if a.components or b.components:
        return False
    if a.wildcard and b.wildcard:
        return False
    if a.wildcard:
        return _covered(b, left)
    if b.wildcard:
        return _covered(a, right)
    return not a.overlaps(b)


def _pair(a: str, b: str) -> str:
    return f"{a}&{b}"


def classify_event(alphabet: Alphabet, event: ProductionEvent) -> EventClass:
    return alphabet[alphabet.classify(event)]


# -- finite controls ----------------------------------------------------------------


@dataclass(frozen=True)
class FiniteControl:
    """Deterministic finite control; missing transitions lead to the error sink."""

    states: frozenset[int]
    alphabet: Alphabet
    transitions: Mapping[tuple[int, str], int]
    start: int
    accepting: frozenset[int]

    def __post_init__(self) -> None:
        if self.start not in self.states:
            raise ValueError("start state is not a state")
        if not self.accepting <= self.states:
            raise ValueError("accepting states must be states")

    def step(self, state: int | None, symbol: str) -> int | None:
        if state is None:
            return None
        return self.transitions.get((state, symbol))

    def accepts_classes(self, symbols: Iterable[str]) -> bool:
        state: int | None = self.start
        for s in symbols:
            state = self.step(state, s)
            if state is None:
                return False
        return state in self.accepting

    def run(self) -> FiniteRun:
        return FiniteRun(self)


class FiniteRun:
    def __init__(self, control: FiniteControl) -> None:
        self.control = control
        self.state = control.start

    def advance(self, symbol: str) -> bool:
        """Consume ``symbol``; on a dead move return False and keep the old state."""
        nxt = self.control.transitions.get((self.state, symbol))
        if nxt is None:
            return False
        self.state = nxt
        return True

    def accepting(self) -> bool:
        return self.state in self.control.accepting


def _determinize(
    alphabet: Sequence[str],
    start: Iterable,
    eps: Mapping,
    delta: Mapping,
    final: set,
) -> tuple[dict[frozenset, int], dict[tuple[int, str], int], int, set[int]]:
    def closure(states: Iterable) -> frozenset:
        seen = set(states)
        stack = list(seen)
        while stack:
            s = stack.pop()
            for t in eps.get(s, ()):
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)

    init = closure(start)
    ids = {init: 0}
    queue = deque([init])
    trans: dict[tuple[int, str], int] = {}
    while queue:
        cur = queue.popleft()
        for sym in alphabet:
            nxt = set()
            for s in cur:
                nxt.update(delta.get((s, sym), ()))
            if not nxt:
                continue
            tgt = closure(nxt)
            if tgt not in ids:
                ids[tgt] = len(ids)
                queue.append(tgt)
            trans[(ids[cur], sym)] = ids[tgt]
    accepting = {i for subset, i in ids.items() if subset & final}
    return ids, trans, 0, accepting


def minimize(control: FiniteControl) -> FiniteControl:
    """Minimal trim DFA for the same language (states renumbered in BFS order)."""
    syms = control.alphabet.names
    sink = -1
    states = list(control.states) + [sink]

    def go(s: int, a: str) -> int:
        if s == sink:
            return sink
        return control.transitions.get((s, a), sink)

    block = {s: (s in control.accepting) for s in states}
    while True:
        sig = {s: (block[s], tuple(block[go(s, a)] for a in syms)) for s in states}
        ids: dict = {}
        new = {s: ids.setdefault(sig[s], len(ids)) for s in states}
        if len(set(new.values())) == len(set(block.values())):
            block = new
            break
        block = new

    dead = block[sink]
    start_block = block[control.start]
    if start_block == dead:
        return FiniteControl(frozenset({0}), control.alphabet, {}, 0, frozenset())
    rep = {}
    for s in states:
        rep.setdefault(block[s], s)
    order = {start_block: 0}
    queue = deque([start_block])
    trans: dict[tuple[int, str], int] = {}
    while queue:
        b = queue.popleft()
        for a in syms:
            t = block[go(rep[b], a)]
            if t == dead:
                continue
            if t not in order:
                order[t] = len(order)
                queue.append(t)
            trans[(order[b], a)] = order[t]
    accepting = frozenset(order[b] for b in order if rep[b] in control.accepting)
    return FiniteControl(frozenset(order.values()), control.alphabet, trans, 0, accepting)


def _finite_from_right_linear(g: Grammar, alphabet: Alphabet) -> FiniteControl:
    final = ("final",)
    eps: dict = {}
    delta: dict = {}
    fresh = 0
    for p in g.production_list:
        tail = p.rhs[-1].name if p.rhs and p.rhs[-1].is_nonterminal else None
        terms = [s.name for s in (p.rhs[:-1] if tail else p.rhs)]
        target = tail if tail is not None else final
        cur = p.lhs.name
        if not terms:
            eps.setdefault(cur, []).append(target)
            continue
        for k, t in enumerate(terms):
            if k == len(terms) - 1:
                nxt = target
            else:
                fresh += 1
                nxt = ("chain", fresh)
            delta.setdefault((cur, t), []).append(nxt)
            cur = nxt
    ids, trans, start, accepting = _determinize(
        alphabet.names, [g.start.name], eps, delta, {final}
    )
    dfa = FiniteControl(frozenset(ids.values()), alphabet, trans, start, frozenset(accepting))
    return minimize(dfa)


def intersect(a: FiniteControl, b: FiniteControl) -> FiniteControl:
    """Product automaton: L(result) = L(a) ∩ L(b) over the refined alphabet."""
    a = _as_finite(a)
    b = _as_finite(b)
    alphabet = ProductAlphabet(a.alphabet, b.alphabet)
    pairs = [c.components for c in alphabet.classes]
    ids = {(a.start, b.start): 0}
    queue = deque([(a.start, b.start)])
    trans: dict[tuple[int, str], int] = {}
    while queue:
        p, q = queue.popleft()
        for x, y in pairs:
            np_, nq = a.transitions.get((p, x)), b.transitions.get((q, y))
            if np_ is None or nq is None:
                continue
            if (np_, nq) not in ids:
                ids[(np_, nq)] = len(ids)
                queue.append((np_, nq))
            trans[(ids[(p, q)], _pair(x, y))] = ids[(np_, nq)]
    accepting = frozenset(i for (p, q), i in ids.items() if p in a.accepting and q in b.accepting)
    return minimize(FiniteControl(frozenset(ids.values()), alphabet, trans, 0, accepting))


def universal_control() -> FiniteControl:
    """Accepts every event string."""
    alphabet = Alphabet([EventClass("any", wildcard=True)])
    return FiniteControl(frozenset({0}), alphabet, {(0, "any"): 0}, 0, frozenset({0}))


def _as_finite(x) -> FiniteControl:
    if isinstance(x, ControllingAutomaton):
        if x.finite is None:
            raise TypeError(f"rule {x.rule_id} is not finite")
        return x.finite
    return x


# -- pushdown controls --------------------------------------------------------------

Config = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class PushdownControl:
    """Nondeterministic pushdown control.

    ``transitions`` maps ``(state, class or None, stack top)`` to the moves
    ``(next state, pushed symbols)``; pushed symbols are listed top first.
    """

    states: frozenset[str]
    alphabet: Alphabet
    stack_alphabet: frozenset[str]
    transitions: Mapping[tuple[str, str | None, str], tuple[tuple[str, tuple[str, ...]], ...]]
    start: str
    initial_stack: str
    accepting: frozenset[str]
    accept_by: str = "state"
    budget: int = DEFAULT_PDA_BUDGET

    def __post_init__(self) -> None:
        if self.accept_by not in ("state", "empty-stack"):
            raise ValueError(f"accept_by must be 'state' or 'empty-stack', not {self.accept_by!r}")

    def closure(self, configs: Iterable[Config]) -> frozenset[Config]:
        seen = set(configs)
        stack = list(seen)
        while stack:
            state, st = stack.pop()
            if not st:
                continue
            for nxt, push in self.transitions.get((state, None, st[0]), ()):
                cfg = (nxt, push + st[1:])
                if cfg not in seen:
                    seen.add(cfg)
                    if len(seen) > self.budget:
                        raise ConfigurationBudgetExceeded(
                            f"more than {self.budget} pushdown configurations"
                        )
                    stack.append(cfg)
        return frozenset(seen)

    def step(self, configs: Iterable[Config], symbol: str) -> frozenset[Config]:
        moved = set()
        for state, st in configs:
            if not st:
                continue
            for nxt, push in self.transitions.get((state, symbol, st[0]), ()):
                moved.add((nxt, push + st[1:]))
        return self.closure(moved)

    def is_accepting(self, config: Config) -> bool:
        state, st = config
        if state not in self.accepting:
            return False
        return self.accept_by == "state" or not st

    def initial(self) -> frozenset[Config]:
        return self.closure([(self.start, (self.initial_stack,))])

    def accepts_classes(self, symbols: Iterable[str]) -> bool:
        configs = self.initial()
        for s in symbols:
            configs = self.step(configs, s)
            if not configs:
                return False
        return any(self.is_accepting(c) for c in configs)

    def run(self) -> PushdownRun:
        return PushdownRun(self)


class PushdownRun:
    def __init__(self, control: PushdownControl) -> None:
        self.control = control
        self.configs = control.initial()

    def advance(self, symbol: str) -> bool:
        nxt = self.control.step(self.configs, symbol)
        if not nxt:
            return False
        self.configs = nxt
        return True

    def accepting(self) -> bool:
        return any(self.control.is_accepting(c) for c in self.configs)


_BOTTOM = "⊥"


def _pushdown_from_grammar(
    g: Grammar, alphabet: Alphabet, accept_by: str, budget: int
) -> PushdownControl:
    productive = g.productive
    trans: dict[tuple[str, str | None, str], list[tuple[str, tuple[str, ...]]]] = {}
    trans[("start", None, _BOTTOM)] = [("loop", (g.start.name, _BOTTOM))]
    for p in g.production_list:
        if p.lhs.name not in productive:
            continue
        if any(s.is_nonterminal and s.name not in productive for s in p.rhs):
            continue
        trans.setdefault(("loop", None, p.lhs.name), []).append(
            ("loop", tuple(s.name for s in p.rhs))
        )
    for name in alphabet.names:
        trans[("loop", name, name)] = [("loop", ())]
    final_push: tuple[str, ...] = () if accept_by == "empty-stack" else (_BOTTOM,)
    trans[("loop", None, _BOTTOM)] = [("accept", final_push)]
    stack_alphabet = frozenset(
        {_BOTTOM} | {s.name for s in g.nonterminals} | set(alphabet.names)
    )
    return PushdownControl(
        states=frozenset({"start", "loop", "accept"}),
        alphabet=alphabet,
        stack_alphabet=stack_alphabet,
        transitions={k: tuple(v) for k, v in trans.items()},
        start="start",
        initial_stack=_BOTTOM,
        accepting=frozenset({"accept"}),
        accept_by=accept_by,
        budget=budget,
    )


# -- controlling automata -------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    dead_index: int | None = None

    def __bool__(self) -> bool:
        return self.accepted


@dataclass(frozen=True)
class ControllingAutomaton:
    rule_id: str
    kind: str
    finite: FiniteControl | None = None
    pushdown: PushdownControl | None = None
    description: str = ""
    grammar: Grammar | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind == "finite":
            ok = self.finite is not None and self.pushdown is None
        elif self.kind == "pushdown":
            ok = self.pushdown is not None and self.finite is None
        else:
            ok = False
        if not ok:
            raise ValueError(f"rule {self.rule_id}: kind {self.kind!r} does not match its control")

    @property
    def control(self) -> FiniteControl | PushdownControl:
        return self.finite if self.finite is not None else self.pushdown  # type: ignore[return-value]

    @property
    def alphabet(self) -> Alphabet:
        return self.control.alphabet

    def run(self) -> FiniteRun | PushdownRun:
        return self.control.run()

    def accepts_classes(self, symbols: Iterable[str]) -> bool:
        return self.control.accepts_classes(symbols)


Acceptor = ControllingAutomaton | FiniteControl | PushdownControl


def accepts(a: Acceptor, trace: Iterable[ProductionEvent]) -> Verdict:
    """Decide trace membership; on rejection report the first dead event index.

    A trace that survives to the end in a non-accepting configuration is
    rejected at ``len(trace)``.
    """
    alphabet = a.alphabet
    run = a.run()
    n = 0
    for n, event in enumerate(trace, 1):
        if not run.advance(alphabet.classify(event)):
            return Verdict(False, n - 1)
    if run.accepting():
        return Verdict(True)
    return Verdict(False, n)


# -- rule sources ---------------------------------------------------------------------

_STRING = r'"((?:[^"\\]|\\.)*)"'
_DIRECTIVE_RE = re.compile(rf"^(rule|description)\s+{_STRING}\s*$")
_ACCEPT_RE = re.compile(r"^accept\s*=\s*(state|empty-stack)\s*$")
_CLASS_RE = re.compile(r"^([\w']+)\s*=\s*(.+)$")
_ATOM_RE = re.compile(rf'\s*(?:([\w.]+)\s*(?:\(\s*{_STRING}\s*\))?)\s*(\||$)')


def _unescape(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text)


def _parse_atoms(text: str, lineno: int) -> tuple[list[Atom], bool]:
    atoms: list[Atom] = []
    wildcard = False
    pos = 0
    while pos < len(text):
        m = _ATOM_RE.match(text, pos)
        if not m or m.end() == pos:
            raise RuleError(f"malformed event class matcher {text[pos:]!r}", lineno)
        label, param = m.group(1), m.group(2)
        if label == WILDCARD and param is None:
            wildcard = True
        else:
            atoms.append(Atom(label, None if param is None else _unescape(param)))
        pos = m.end()
        if m.group(3) == "" and pos < len(text):
            raise RuleError(f"trailing text {text[pos:]!r}", lineno)
    if wildcard and atoms:
        raise RuleError("'other' cannot be combined with explicit matchers", lineno)
    return atoms, wildcard


def compile_rule(
    source: str,
    grammar: Grammar | None = None,
    *,
    budget: int = DEFAULT_PDA_BUDGET,
) -> ControllingAutomaton:
    """Compile a rule file into a controlling automaton.

    If the controlled ``grammar`` is given, every class must name labels (or
    label families) that exist in it.
    """
    rule_id = None
    description = ""
    accept_by = None
    classes: list[EventClass] = []
    section = "header"
    grammar_lines: list[str] = []
    grammar_start = 0
    for lineno, raw in enumerate(source.splitlines(), 1):
        if section == "grammar":
            grammar_lines.append(raw)
            continue
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line == "events":
            section = "events"
            continue
        if line == "grammar":
            section = "grammar"
            grammar_start = lineno
            continue
        m = _DIRECTIVE_RE.match(line)
        if m:
            if m.group(1) == "rule":
                rule_id = _unescape(m.group(2))
            else:
                description = _unescape(m.group(2))
            continue
        m = _ACCEPT_RE.match(line)
        if m:
            accept_by = m.group(1)
            continue
        m = _CLASS_RE.match(line)
        if m and section == "events":
            atoms, wildcard = _parse_atoms(m.group(2).strip(), lineno)
            classes.append(EventClass(m.group(1), tuple(atoms), wildcard))
            continue
        raise RuleError(f"unexpected {line!r}", lineno)

    if rule_id is None:
        raise RuleError("missing rule header: rule \"<id>\"")
    if section != "grammar":
        raise RuleError("missing grammar block")

    try:
        g = compile_grammar("\n".join(grammar_lines), terminals=[c.name for c in classes])
    except GrammarError as exc:
        raise RuleError(f"in grammar block starting at line {grammar_start}: {exc}") from exc

    terminal_names = sorted({t.name for t in g.terminals})
    if classes:
        declared = {c.name for c in classes}
        missing = [t for t in terminal_names if t not in declared]
        if missing:
            raise RuleError(f"grammar uses undeclared event classes {missing}")
    else:
        classes = [EventClass(t, (Atom(t),)) for t in terminal_names]

    if grammar is not None:
        known = set(grammar.labels) | {label_family(lb) for lb in grammar.labels}
        for c in classes:
            for atom in c.atoms:
                if atom.label not in known:
                    raise RuleError(
                        f"class {c.name} references undeclared production label {atom.label!r}"
                    )

    alphabet = Alphabet(classes)
    if g.is_right_linear():
        if accept_by == "empty-stack":
            raise RuleError("accept = empty-stack only applies to context-free rules")
        finite = _finite_from_right_linear(g, alphabet)
        return ControllingAutomaton(rule_id, "finite", finite=finite, description=description, grammar=g)
    pda = _pushdown_from_grammar(g, alphabet, accept_by or "state", budget)
    return ControllingAutomaton(rule_id, "pushdown", pushdown=pda, description=description, grammar=g)


def as_automaton(control: FiniteControl | PushdownControl, rule_id: str, description: str = "") -> ControllingAutomaton:
    if isinstance(control, FiniteControl):
        return ControllingAutomaton(rule_id, "finite", finite=control, description=description)
    return ControllingAutomaton(rule_id, "pushdown", pushdown=control, description=description)
