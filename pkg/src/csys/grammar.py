"""Labeled context-free grammars, leftmost derivations and trace extraction.

A grammar is written one production per line::

    start S
    p1: S -> a S
    p2: S -> b S
    p3: S -> ε

Terminals are quoted or start with a lowercase letter (or a digit); nonterminals
start with an uppercase letter.  ``name(param)`` declares a parameterized
terminal: the text of the token it matches is recorded as the parameter of the
production event, so ``2k: QName ::= xmiName(name)`` applied to ``Package``
shows up in a trace as ``2k(Package)``.

Alternatives separated by ``|`` on a labeled line are split into ``label_1``,
``label_2``, ...; a postfix ``X*`` is rewritten into a fresh nonterminal
``X*`` with productions ``X* -> ε | X X*``.  An rhs reference may carry the
label of the production it points at (``2k:QName``); the prefix is ignored.
"""

from __future__ import annotations

import enum
import re
import sys
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

DEFAULT_MAX_TRACES = 64

_FAMILY_RE = re.compile(r"^(.+)_\d+$")


class GrammarError(ValueError):
    """A grammar source is well formed but semantically invalid."""


class GrammarSyntaxError(GrammarError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DerivationError(ValueError):
    """A label sequence cannot be replayed as a leftmost derivation."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"step {index}: {message}")
        self.index = index


class ParseError(ValueError):
    """The input is not in the language of the grammar.

    ``position`` is the index of the first token with no viable continuation
    (``len(tokens)`` when the input ends too early).
    """

    def __init__(self, message: str, position: int, span: tuple[int, int] | None = None) -> None:
        super().__init__(message)
        self.position = position
        self.span = span


class TraceBudgetExceeded(RuntimeError):
    """More leftmost derivations exist than the caller allowed."""


class SymbolKind(enum.Enum):
    NONTERMINAL = "nonterminal"
    TERMINAL = "terminal"
    PARAMETERIZED = "parameterized-terminal"


@dataclass(frozen=True)
class Symbol:
    kind: SymbolKind
    name: str
    parameter: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("symbol name must be non-empty")
        if (self.parameter is not None) != (self.kind is SymbolKind.PARAMETERIZED):
            raise ValueError(f"parameter is only allowed on parameterized terminals: {self!r}")

    @property
    def is_nonterminal(self) -> bool:
        return self.kind is SymbolKind.NONTERMINAL

    @property
    def is_terminal(self) -> bool:
        return self.kind is not SymbolKind.NONTERMINAL

    def matches(self, token: Token) -> bool:
        return self.is_terminal and self.name == token.kind

    def __str__(self) -> str:
        if self.kind is SymbolKind.PARAMETERIZED:
            return f"{self.name}({self.parameter})"
        return self.name


def nonterminal(name: str) -> Symbol:
    return Symbol(SymbolKind.NONTERMINAL, name)


def terminal(name: str) -> Symbol:
    return Symbol(SymbolKind.TERMINAL, name)


@dataclass(frozen=True)
class LabeledProduction:
    label: str
    lhs: Symbol
    rhs: tuple[Symbol, ...]

    def __post_init__(self) -> None:
        if not self.lhs.is_nonterminal:
            raise ValueError(f"production {self.label}: lhs must be a nonterminal")

    @property
    def parameterized(self) -> bool:
        return any(s.kind is SymbolKind.PARAMETERIZED for s in self.rhs)

    def __str__(self) -> str:
        body = " ".join(_show(s) for s in self.rhs) or "ε"
        return f"{self.label}: {self.lhs} -> {body}"


def _show(symbol: Symbol) -> str:
    text = str(symbol)
    if symbol.kind is SymbolKind.TERMINAL and not re.fullmatch(r"[a-z0-9][\w']*", text):
        return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return text


def label_family(label: str) -> str:
    """``2k_1`` -> ``2k``; labels without a choice suffix are their own family."""
    m = _FAMILY_RE.match(label)
    return m.group(1) if m else label


class Token(NamedTuple):
    kind: str
    text: str
    span: tuple[int, int] | None = None


TokenInput = str | Sequence[str] | Sequence[Token]


def as_tokens(data: TokenInput) -> list[Token]:
    """Plain strings tokenize per character; lists of strings per item."""
    out = []
    for item in data:
        if isinstance(item, Token):
            out.append(item)
        else:
            out.append(Token(item, item))
    return out


@dataclass(frozen=True)
class ProductionEvent:
    label: str
    parameter: str | None = None
    span: tuple[int, int] | None = None
    element_id: str | None = None

    def __str__(self) -> str:
        return self.label if self.parameter is None else f"{self.label}({self.parameter})"


@dataclass(frozen=True)
class DerivationTrace(Sequence[ProductionEvent]):
    events: tuple[ProductionEvent, ...] = ()

    def __getitem__(self, index):  # type: ignore[override]
        return self.events[index]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[ProductionEvent]:
        return iter(self.events)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.events)

    def key(self) -> tuple[tuple[str, str], ...]:
        return tuple((e.label, e.parameter or "") for e in self.events)

    def listing(self, width: int = 0) -> str:
        """Comma-separated ``label(param)`` listing, wrapped at ``width`` if given."""
        items = [str(e) for e in self.events]
        if not width:
            return ", ".join(items)
        lines, line = [], ""
        for item in items:
            piece = item if not line else f", {item}"
            if line and len(line) + len(piece) > width:
                lines.append(line + ",")
                line = item
            else:
                line += piece
        if line:
            lines.append(line)
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.listing()


@dataclass(frozen=True)
class Grammar:
    nonterminals: frozenset[Symbol]
    terminals: frozenset[Symbol]
    productions: Mapping[str, LabeledProduction]
    start: Symbol

    def __post_init__(self) -> None:
        nt_names = {s.name for s in self.nonterminals}
        t_names = {s.name for s in self.terminals}
        clash = nt_names & t_names
        if clash:
            raise GrammarError(f"symbols used both as terminal and nonterminal: {sorted(clash)}")
        if self.start not in self.nonterminals:
            raise GrammarError(f"start symbol {self.start} is not a nonterminal of the grammar")
        for p in self.productions.values():
            for s in (p.lhs, *p.rhs):
                if s.is_nonterminal and s.name not in nt_names:
                    raise GrammarError(f"production {p.label}: undeclared nonterminal {s}")
                if s.is_terminal and s.name not in t_names:
                    raise GrammarError(f"production {p.label}: undeclared terminal {s}")

    @cached_property
    def production_list(self) -> tuple[LabeledProduction, ...]:
        return tuple(self.productions.values())

    @cached_property
    def by_lhs(self) -> dict[str, tuple[int, ...]]:
        index: dict[str, list[int]] = {}
        for i, p in enumerate(self.production_list):
            index.setdefault(p.lhs.name, []).append(i)
        return {k: tuple(v) for k, v in index.items()}

    @cached_property
    def nullable(self) -> frozenset[str]:
        found: set[str] = set()
        changed = True
        while changed:
            changed = False
            for p in self.production_list:
                if p.lhs.name not in found and all(
                    s.is_nonterminal and s.name in found for s in p.rhs
                ):
                    found.add(p.lhs.name)
                    changed = True
        return frozenset(found)

    @cached_property
    def productive(self) -> frozenset[str]:
        found: set[str] = set()
        changed = True
        while changed:
            changed = False
            for p in self.production_list:
                if p.lhs.name not in found and all(
                    s.is_terminal or s.name in found for s in p.rhs
                ):
                    found.add(p.lhs.name)
                    changed = True
        return frozenset(found)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.productions)

    def is_right_linear(self) -> bool:
        """Every body is terminals followed by at most one trailing nonterminal."""
        for p in self.production_list:
            if any(s.is_nonterminal for s in p.rhs[:-1]):
                return False
        return True

    def with_start(self, name: str) -> Grammar:
        return Grammar(self.nonterminals, self.terminals, self.productions, nonterminal(name))

    def __str__(self) -> str:
        lines = [f"start {self.start}"]
        lines += [str(p) for p in self.production_list]
        return "\n".join(lines)


# -- grammar source parsing ---------------------------------------------------

_LEX_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<arrow>→|->|::=)
  | (?P<bar>\|)
  | (?P<colon>:)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<star>\*)
  | (?P<ident>[\w'][\w']*)
    """,
    re.VERBOSE,
)

_EPSILON = {"ε", "epsilon", "EPSILON"}


class _Lexeme(NamedTuple):
    kind: str
    text: str
    column: int


def _strip_comment(line: str) -> str:
    in_string = escaped = False
    for i, ch in enumerate(line):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "#":
            return line[:i]
    return line


def _lex_line(line: str, lineno: int) -> list[_Lexeme]:
    out = []
    pos = 0
    while pos < len(line):
        m = _LEX_RE.match(line, pos)
        if not m:
            raise GrammarSyntaxError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            out.append(_Lexeme(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return out


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


def _is_nonterminal_name(name: str) -> bool:
    return name[0].isupper()


def compile_grammar(
    source: str,
    *,
    terminals: Iterable[str] = (),
    start: str | None = None,
) -> Grammar:
    """Compile grammar source text into a :class:`Grammar`.

    ``terminals`` forces the given names to be terminals regardless of case
    (controlling grammars use class names such as ``D`` as terminals).
    """
    forced = set(terminals)
    rules: list[tuple[str | None, str, list, int]] = []
    start_name = start
    for lineno, raw in enumerate(source.splitlines(), 1):
        lexemes = _lex_line(_strip_comment(raw), lineno)
        if not lexemes:
            continue
        if lexemes[0].kind == "ident" and lexemes[0].text == "start" and (
            len(lexemes) == 2 or (len(lexemes) == 3 and lexemes[1].kind == "colon")
        ):
            if lexemes[-1].kind != "ident":
                raise GrammarSyntaxError("start directive needs a symbol", lineno, lexemes[-1].column)
            if start_name is None:
                start_name = lexemes[-1].text
            continue
        label, lhs, alts = _parse_production(lexemes, lineno)
        rules.append((label, lhs, alts, lineno))

    productions: dict[str, LabeledProduction] = {}
    counters: dict[str, int] = {}
    lhs_names = {lhs for _, lhs, _, _ in rules}
    nt_names: set[str] = set(lhs_names)
    star_bases: dict[str, Symbol] = {}

    def make_symbol(name: str, param: str | None, quoted: bool, lineno: int) -> Symbol:
        if quoted:
            return terminal(name)
        if param is not None:
            return Symbol(SymbolKind.PARAMETERIZED, name, param)
        if name in forced:
            return terminal(name)
        if _is_nonterminal_name(name):
            return nonterminal(name)
        return terminal(name)

    def add(label: str, lhs: Symbol, rhs: tuple[Symbol, ...], lineno: int) -> None:
        if label in productions:
            raise GrammarError(f"line {lineno}: duplicate production label {label!r}")
        productions[label] = LabeledProduction(label, lhs, rhs)

    for label, lhs_name, alts, lineno in rules:
        if lhs_name in forced or not _is_nonterminal_name(lhs_name):
            raise GrammarError(f"line {lineno}: lhs {lhs_name!r} is not a nonterminal")
        lhs = nonterminal(lhs_name)
        for k, alt in enumerate(alts, 1):
            body = []
            for name, param, quoted, starred in alt:
                sym = make_symbol(name, param, quoted, lineno)
                if starred:
                    star = nonterminal(f"{sym}*")
                    star_bases[star.name] = sym
                    nt_names.add(star.name)
                    sym = star
                body.append(sym)
            if label is None:
                counters[lhs_name] = counters.get(lhs_name, 0) + 1
                this_label = f"{lhs_name}_{counters[lhs_name]}"
            else:
                this_label = label if len(alts) == 1 else f"{label}_{k}"
            add(this_label, lhs, tuple(body), lineno)

    for name, base in star_bases.items():
        star = nonterminal(name)
        add(f"{name}_1", star, (), 0)
        add(f"{name}_2", star, (base, star), 0)

    for p in productions.values():
        for s in p.rhs:
            if s.is_nonterminal and s.name not in nt_names:
                raise GrammarError(f"production {p.label}: undeclared nonterminal {s.name!r}")

    if start_name is None:
        if not rules:
            raise GrammarError("start symbol missing: no start directive and no productions")
        start_name = rules[0][1]
    if start_name not in lhs_names:
        raise GrammarError(f"start symbol {start_name!r} is underivable: it has no productions")

    nts = frozenset(nonterminal(n) for n in nt_names)
    ts = frozenset(s for p in productions.values() for s in p.rhs if s.is_terminal)
    ts |= frozenset(terminal(n) for n in forced if n not in nt_names)
    g = Grammar(nts, ts, productions, nonterminal(start_name))
    if start_name not in g.productive:
        raise GrammarError(f"start symbol {start_name!r} is underivable: it derives no terminal string")
    return g


def _parse_production(lexemes: list[_Lexeme], lineno: int):
    pos = 0
    label = None
    if len(lexemes) > 2 and lexemes[0].kind == "ident" and lexemes[1].kind == "colon":
        label = lexemes[0].text
        pos = 2
    if pos >= len(lexemes) or lexemes[pos].kind != "ident":
        col = lexemes[pos].column if pos < len(lexemes) else lexemes[-1].column
        raise GrammarSyntaxError("expected a nonterminal", lineno, col)
    lhs = lexemes[pos].text
    pos += 1
    if pos >= len(lexemes) or lexemes[pos].kind != "arrow":
        col = lexemes[pos].column if pos < len(lexemes) else lexemes[-1].column + 1
        raise GrammarSyntaxError("expected '->'", lineno, col)
    pos += 1

    alts: list[list[tuple[str, str | None, bool, bool]]] = [[]]
    while pos < len(lexemes):
        lx = lexemes[pos]
        if lx.kind == "bar":
            alts.append([])
            pos += 1
            continue
        if lx.kind == "string":
            name, param, quoted = _unquote(lx.text), None, True
            if not name:
                raise GrammarSyntaxError("empty terminal", lineno, lx.column)
            pos += 1
        elif lx.kind == "ident":
            if lx.text in _EPSILON:
                pos += 1
                continue
            name, param, quoted = lx.text, None, False
            pos += 1
            # ``2k:QName`` cross-reference prefix
            if (
                pos + 1 < len(lexemes)
                and lexemes[pos].kind == "colon"
                and lexemes[pos + 1].kind == "ident"
            ):
                name = lexemes[pos + 1].text
                pos += 2
            if pos < len(lexemes) and lexemes[pos].kind == "lparen":
                if (
                    pos + 2 >= len(lexemes)
                    or lexemes[pos + 1].kind != "ident"
                    or lexemes[pos + 2].kind != "rparen"
                ):
                    raise GrammarSyntaxError("malformed parameter", lineno, lexemes[pos].column)
                param = lexemes[pos + 1].text
                pos += 3
        else:
            raise GrammarSyntaxError(f"unexpected {lx.text!r}", lineno, lx.column)
        starred = pos < len(lexemes) and lexemes[pos].kind == "star"
        if starred:
            pos += 1
        alts[-1].append((name, param, quoted, starred))
    return label, lhs, alts


# -- leftmost derivation --------------------------------------------------------

LabelInput = str | ProductionEvent | tuple


def _label_param(item: LabelInput) -> tuple[str, str | None]:
    if isinstance(item, ProductionEvent):
        return item.label, item.parameter
    if isinstance(item, tuple):
        label, param = item
        return label, param
    return item, None


def leftmost_derive(g: Grammar, labels: Iterable[LabelInput]) -> list[Symbol]:
    """Apply each production to the leftmost nonterminal, starting from ``g.start``.

    Parameters of parameterized productions are substituted into their
    parameterized terminals.  Returns the final sentential form.
    """
    form: list[Symbol] = [g.start]
    cursor = 0  # no nonterminal lives left of cursor
    for index, item in enumerate(labels):
        label, param = _label_param(item)
        p = g.productions.get(label)
        if p is None:
            raise DerivationError(f"unknown production {label!r}", index)
        while cursor < len(form) and not form[cursor].is_nonterminal:
            cursor += 1
        if cursor == len(form):
            raise DerivationError(f"{label} not applicable: no nonterminal remains", index)
        if form[cursor] != p.lhs:
            raise DerivationError(
                f"{label} rewrites {p.lhs} but the leftmost nonterminal is {form[cursor]}", index
            )
        body = [
            Symbol(SymbolKind.PARAMETERIZED, s.name, param if param is not None else s.parameter)
            if s.kind is SymbolKind.PARAMETERIZED
            else s
            for s in p.rhs
        ]
        form[cursor : cursor + 1] = body
    return form


def derives(form: Sequence[Symbol], tokens: TokenInput) -> bool:
    """True iff an all-terminal sentential form spells exactly ``tokens``."""
    toks = as_tokens(tokens)
    if len(form) != len(toks):
        return False
    for sym, tok in zip(form, toks):
        if not sym.matches(tok):
            return False
        if sym.kind is SymbolKind.PARAMETERIZED and sym.parameter != tok.text:
            return False
    return True


# -- chart parsing ---------------------------------------------------------------


@dataclass
class _Chart:
    grammar: Grammar
    tokens: list[Token]
    sets: list[dict[tuple[int, int, int], None]] = field(default_factory=list)

    def run(self) -> None:
        g = self.grammar
        prods = g.production_list
        by_lhs = g.by_lhs
        nullable = g.nullable
        toks = self.tokens
        n = len(toks)
        self.sets = sets = [{} for _ in range(n + 1)]
        waiting: list[dict[str, list[tuple[int, int, int]]]] = [{} for _ in range(n + 1)]

        def insert(k: int, item: tuple[int, int, int], agenda: list | None) -> None:
            if item in sets[k]:
                return
            sets[k][item] = None
            pi, dot, _ = item
            rhs = prods[pi].rhs
            if dot < len(rhs) and rhs[dot].is_nonterminal:
                waiting[k].setdefault(rhs[dot].name, []).append(item)
            if agenda is not None:
                agenda.append(item)

        for pi in by_lhs.get(g.start.name, ()):
            insert(0, (pi, 0, 0), None)

        for k in range(n + 1):
            agenda = list(sets[k])
            while agenda:
                pi, dot, origin = agenda.pop()
                rhs = prods[pi].rhs
                if dot == len(rhs):
                    lhs = prods[pi].lhs.name
                    for qi, qd, qo in list(waiting[origin].get(lhs, ())):
                        insert(k, (qi, qd + 1, qo), agenda)
                    continue
                sym = rhs[dot]
                if sym.is_nonterminal:
                    for qi in by_lhs.get(sym.name, ()):
                        insert(k, (qi, 0, k), agenda)
                    if sym.name in nullable:
                        insert(k, (pi, dot + 1, origin), agenda)
                elif k < n and sym.name == toks[k].kind:
                    insert(k + 1, (pi, dot + 1, origin), None)

    def completed(self) -> dict[tuple[str, int, int], list[int]]:
        prods = self.grammar.production_list
        out: dict[tuple[str, int, int], list[int]] = {}
        for k, items in enumerate(self.sets):
            for pi, dot, origin in items:
                if dot == len(prods[pi].rhs):
                    out.setdefault((prods[pi].lhs.name, origin, k), []).append(pi)
        return out

    def accepts(self) -> bool:
        n = len(self.tokens)
        prods = self.grammar.production_list
        start = self.grammar.start.name
        return any(
            origin == 0 and dot == len(prods[pi].rhs) and prods[pi].lhs.name == start
            for pi, dot, origin in self.sets[n]
        )

    def failure_position(self) -> int:
        for k in range(len(self.tokens), -1, -1):
            if self.sets[k]:
                return k
        return 0


class _Extractor:
    """Enumerate leftmost derivations (preorder label sequences) from a chart."""

    def __init__(self, chart: _Chart, cap: int) -> None:
        self.prods = chart.grammar.production_list
        self.tokens = chart.tokens
        self.completed = chart.completed()
        self.cap = cap
        self.memo_nt: dict[tuple[str, int, int], list[tuple]] = {}
        self.memo_seq: dict[tuple[int, int, int, int], list[tuple]] = {}
        self.active: set[tuple[str, int, int]] = set()

    def _check(self, results: list) -> None:
        if len(results) > self.cap:
            raise TraceBudgetExceeded(f"more than {self.cap} leftmost derivations")

    def derivs(self, name: str, i: int, j: int) -> list[tuple]:
        key = (name, i, j)
        memo = self.memo_nt.get(key)
        if memo is not None:
            return memo
        if key in self.active:
            raise TraceBudgetExceeded(f"infinitely many derivations: {name} derives itself")
        self.active.add(key)
        out: list[tuple] = []
        for pi in self.completed.get(key, ()):
            for param, tail in self.seq(pi, 0, i, j):
                out.append(((pi, param, i, j),) + tail)
                self._check(out)
        self.active.discard(key)
        self.memo_nt[key] = out
        return out

    def seq(self, pi: int, d: int, i: int, j: int) -> list[tuple]:
        key = (pi, d, i, j)
        memo = self.memo_seq.get(key)
        if memo is not None:
            return memo
        rhs = self.prods[pi].rhs
        out: list[tuple] = []
        if d == len(rhs):
            if i == j:
                out.append((None, ()))
        else:
            sym = rhs[d]
            if sym.is_terminal:
                if i < j and sym.name == self.tokens[i].kind:
                    own = self.tokens[i].text if sym.kind is SymbolKind.PARAMETERIZED else None
                    for param, evs in self.seq(pi, d + 1, i + 1, j):
                        out.append((own if own is not None else param, evs))
            else:
                for m in range(i, j + 1):
                    if (sym.name, i, m) not in self.completed:
                        continue
                    rest = self.seq(pi, d + 1, m, j)
                    if not rest:
                        continue
                    for left in self.derivs(sym.name, i, m):
                        for param, evs in rest:
                            out.append((param, left + evs))
                            self._check(out)
        self.memo_seq[key] = out
        return out


def _merge_spans(tokens: Sequence[Token], i: int, j: int) -> tuple[int, int] | None:
    spans = [t.span for t in tokens[i:j]]
    if not spans or any(s is None for s in spans):
        return None
    return min(s[0] for s in spans), max(s[1] for s in spans)


def parse_traces(
    g: Grammar,
    tokens: TokenInput,
    max_traces: int = DEFAULT_MAX_TRACES,
) -> list[DerivationTrace]:
    """Every leftmost-derivation trace of ``tokens`` under ``g``.

    Traces come back sorted by label sequence.  An empty list means the input
    is not in L(g); :class:`TraceBudgetExceeded` means there are more than
    ``max_traces`` derivations.
    """
    if max_traces < 1:
        raise ValueError("max_traces must be positive")
    return [DerivationTrace(evs) for evs in _raw_traces(g, as_tokens(tokens), max_traces)]


def parse_raw(
    g: Grammar, tokens: list[Token], max_traces: int = DEFAULT_MAX_TRACES
) -> list[tuple[tuple[ProductionEvent, ...], list[tuple[int, int]]]]:
    """Like :func:`parse_traces` but also returns each event's token range.

    Raises :class:`ParseError` instead of returning an empty result.
    """
    chart = _Chart(g, tokens)
    chart.run()
    if not chart.accepts():
        pos = chart.failure_position()
        span = tokens[pos].span if pos < len(tokens) else None
        what = f"token {tokens[pos].kind!r}" if pos < len(tokens) else "end of input"
        raise ParseError(f"unexpected {what} at position {pos}", pos, span)
    return _extract(chart, max_traces)


def _raw_traces(g: Grammar, tokens: list[Token], cap: int) -> list[tuple[ProductionEvent, ...]]:
    chart = _Chart(g, tokens)
    chart.run()
    if not chart.accepts():
        return []
    return [evs for evs, _ in _extract(chart, cap)]


def _extract(chart: _Chart, cap: int):
    g = chart.grammar
    tokens = chart.tokens
    prods = g.production_list
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20000))
    try:
        raw = _Extractor(chart, cap).derivs(g.start.name, 0, len(tokens))
    finally:
        sys.setrecursionlimit(limit)
    out = []
    for items in raw:
        events = tuple(
            ProductionEvent(prods[pi].label, param, _merge_spans(tokens, i, j))
            for pi, param, i, j in items
        )
        out.append((events, [(i, j) for _, _, i, j in items]))
    out.sort(key=lambda r: tuple((e.label, e.parameter or "") for e in r[0]))
    return out


def recognizes(g: Grammar, tokens: TokenInput) -> bool:
    chart = _Chart(g, as_tokens(tokens))
    chart.run()
    return chart.accepts()
