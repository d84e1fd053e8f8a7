"""XMI front end: tokenize XML text, build a model tree, derive it with the UML grammar.

Spans are UTF-8 byte offsets into the source document.
"""

from __future__ import annotations

import dataclasses
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from importlib.resources import files
from typing import NamedTuple
from xml.sax.saxutils import escape

from .grammar import (
    DEFAULT_MAX_TRACES,
    DerivationTrace,
    Grammar,
    ParseError,
    Token,
    compile_grammar,
    parse_raw,
)

UML_PREFIX = "uml:"

# xmi:id values referenced from these attributes are reported when dangling
REFERENCE_ATTRIBUTES = frozenset(
    {"xmi:idref", "general", "source", "target", "type", "incoming", "outgoing", "client", "supplier"}
)


class XmiSyntaxError(ValueError):
    """Malformed XML: bad quoting, unbalanced tags, unsupported constructs."""

    def __init__(self, message: str, offset: int, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.offset = offset
        self.line = line
        self.column = column


class XmiError(ValueError):
    """Well-formed XML that cannot be read as an XMI model."""

    def __init__(self, message: str, span: tuple[int, int] | None = None) -> None:
        super().__init__(message)
        self.span = span


class XmiToken(NamedTuple):
    kind: str  # angle-open | angle-close | slash-close | name | quoted-value | literal
    text: str
    span: tuple[int, int]


@lru_cache(maxsize=1)
def uml_grammar() -> Grammar:
    source = files(__package__).joinpath("data/uml_xmi.grammar").read_text(encoding="utf-8")
    return compile_grammar(source)


# -- tokenizer ------------------------------------------------------------------------

_NAME_RE = re.compile(r"[A-Za-z_:][\w:.\-]*")
_SPACE_RE = re.compile(r"\s*")
_ENTITY_RE = re.compile(r"&(#x[0-9A-Fa-f]+|#[0-9]+|amp|lt|gt|quot|apos);")
_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}


def unescape(text: str) -> str:
    def sub(m: re.Match) -> str:
        ref = m.group(1)
        if ref.startswith("#x"):
            return chr(int(ref[2:], 16))
        if ref.startswith("#"):
            return chr(int(ref[1:]))
        return _ENTITIES[ref]

    return _ENTITY_RE.sub(sub, text)


class _Offsets:
    """Character index -> UTF-8 byte offset."""

    def __init__(self, text: str) -> None:
        self.ascii = text.isascii()
        if not self.ascii:
            self.table = [0]
            total = 0
            for ch in text:
                total += len(ch.encode("utf-8"))
                self.table.append(total)

    def __call__(self, i: int) -> int:
        return i if self.ascii else self.table[i]


def _position(text: str, i: int) -> tuple[int, int]:
    line = text.count("\n", 0, i) + 1
    col = i - (text.rfind("\n", 0, i) + 1) + 1
    return line, col


def tokenize_xmi(document: str) -> list[XmiToken]:
    """Split an XML document into tag-level tokens with byte spans.

    The prolog, comments and processing instructions are skipped, as is
    whitespace between elements.  ``=`` signs are not tokens; a quoted value
    keeps its quotes in its span but not in its text.
    """
    text = document
    off = _Offsets(text)
    out: list[XmiToken] = []
    stack: list[tuple[str, int]] = []
    pos = 0
    n = len(text)

    def fail(message: str, i: int) -> XmiSyntaxError:
        line, col = _position(text, i)
        return XmiSyntaxError(message, off(i), line, col)

    def emit(kind: str, value: str, a: int, b: int) -> None:
        out.append(XmiToken(kind, value, (off(a), off(b))))

    def skip_to(marker: str, start: int, what: str) -> int:
        end = text.find(marker, start)
        if end < 0:
            raise fail(f"unterminated {what}", start)
        return end + len(marker)

    while pos < n:
        if text.startswith("<?", pos):
            pos = skip_to("?>", pos, "processing instruction")
        elif text.startswith("<!--", pos):
            pos = skip_to("-->", pos, "comment")
        elif text.startswith("<![CDATA[", pos):
            raise fail("CDATA sections are not supported", pos)
        elif text.startswith("<!", pos):
            if stack or out:
                raise fail("declaration inside the document element", pos)
            pos = skip_to(">", pos, "declaration")
        elif text.startswith("</", pos):
            start = pos
            emit("angle-open", "</", pos, pos + 2)
            pos += 2
            m = _NAME_RE.match(text, pos)
            if not m:
                raise fail("expected an element name", pos)
            name = m.group()
            emit("name", name, m.start(), m.end())
            pos = _SPACE_RE.match(text, m.end()).end()
            if not text.startswith(">", pos):
                raise fail("expected '>'", pos)
            emit("angle-close", ">", pos, pos + 1)
            pos += 1
            if not stack:
                raise fail(f"closing tag </{name}> without an open element", start)
            opened, at = stack.pop()
            if opened != name:
                raise fail(f"closing tag </{name}> does not match <{opened}>", start)
        elif text.startswith("<", pos):
            start = pos
            emit("angle-open", "<", pos, pos + 1)
            pos += 1
            m = _NAME_RE.match(text, pos)
            if not m:
                raise fail("expected an element name", pos)
            name = m.group()
            emit("name", name, m.start(), m.end())
            pos = m.end()
            seen: set[str] = set()
            while True:
                ws = _SPACE_RE.match(text, pos).end()
                if text.startswith("/>", ws):
                    emit("slash-close", "/>", ws, ws + 2)
                    pos = ws + 2
                    break
                if text.startswith(">", ws):
                    emit("angle-close", ">", ws, ws + 1)
                    pos = ws + 1
                    stack.append((name, start))
                    break
                if ws == pos:
                    raise fail("expected whitespace, '>' or '/>'", ws)
                m = _NAME_RE.match(text, ws)
                if not m:
                    raise fail("expected an attribute name", ws)
                attr = m.group()
                if attr in seen:
                    raise fail(f"duplicate attribute {attr!r}", ws)
                seen.add(attr)
                emit("name", attr, m.start(), m.end())
                pos = _SPACE_RE.match(text, m.end()).end()
                if not text.startswith("=", pos):
                    raise fail(f"expected '=' after attribute {attr!r}", pos)
                pos = _SPACE_RE.match(text, pos + 1).end()
                if pos >= n or text[pos] not in "\"'":
                    raise fail(f"attribute {attr!r} value must be quoted", pos)
                quote = text[pos]
                end = text.find(quote, pos + 1)
                if end < 0:
                    raise fail("unterminated attribute value", pos)
                value = text[pos + 1 : end]
                if "<" in value:
                    raise fail("'<' in attribute value", pos + 1 + value.index("<"))
                emit("quoted-value", value, pos, end + 1)
                pos = end + 1
        else:
            end = text.find("<", pos)
            if end < 0:
                end = n
            chunk = text[pos:end]
            stripped = chunk.strip()
            if stripped:
                if not stack:
                    raise fail("text outside the document element", pos)
                a = pos + (len(chunk) - len(chunk.lstrip()))
                emit("literal", stripped, a, a + len(stripped))
            pos = end
    if stack:
        name, at = stack[-1]
        raise fail(f"element <{name}> is never closed", at)
    return out


# -- model tree -----------------------------------------------------------------------


@dataclass
class Attribute:
    name: str
    value: str
    name_span: tuple[int, int]
    value_span: tuple[int, int]  # includes the quotes


@dataclass
class ModelElement:
    qname: str
    attributes: list[Attribute] = field(default_factory=list)
    children: list[ModelElement] = field(default_factory=list)
    span: tuple[int, int] = (0, 0)
    self_closing: bool = False
    text: str | None = None
    text_span: tuple[int, int] | None = None
    name_span: tuple[int, int] = (0, 0)
    open_span: tuple[int, int] = (0, 0)  # the "<"
    end_span: tuple[int, int] = (0, 0)  # ">" or "/>" of the start tag
    close_span: tuple[int, int] | None = None  # the whole end tag

    def attr(self, name: str) -> str | None:
        for a in self.attributes:
            if a.name == name:
                return a.value
        return None

    @property
    def xmi_id(self) -> str | None:
        return self.attr("xmi:id")

    @property
    def xmi_type(self) -> str | None:
        return self.attr("xmi:type")

    @property
    def name(self) -> str | None:
        return self.attr("name")

    @property
    def local_name(self) -> str:
        return self.qname.rsplit(":", 1)[-1]

    @property
    def type_name(self) -> str | None:
        t = self.xmi_type
        return None if t is None else t.rsplit(":", 1)[-1]

    def iter(self) -> Iterable[ModelElement]:
        yield self
        for c in self.children:
            yield from c.iter()


def build_tree(tokens: Sequence[XmiToken]) -> ModelElement:
    """Assemble the element tree from :func:`tokenize_xmi` output."""
    if not tokens:
        raise XmiError("empty document")
    stack: list[ModelElement] = []
    roots: list[ModelElement] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == "angle-open" and tok.text == "<":
            name_tok = tokens[i + 1]
            elem = ModelElement(qname=name_tok.text, name_span=name_tok.span, open_span=tok.span)
            i += 2
            while tokens[i].kind == "name":
                a, v = tokens[i], tokens[i + 1]
                elem.attributes.append(Attribute(a.text, unescape(v.text), a.span, v.span))
                i += 2
            end = tokens[i]
            elem.end_span = end.span
            elem.self_closing = end.kind == "slash-close"
            (stack[-1].children if stack else roots).append(elem)
            if elem.self_closing:
                elem.span = (tok.span[0], end.span[1])
            else:
                elem.span = (tok.span[0], tok.span[1])
                stack.append(elem)
            i += 1
        elif tok.kind == "angle-open":
            elem = stack.pop()
            close = tokens[i + 2]
            elem.close_span = (tok.span[0], close.span[1])
            elem.span = (elem.span[0], close.span[1])
            i += 3
        elif tok.kind == "literal":
            elem = stack[-1]
            if elem.text is not None:
                raise XmiError(f"<{elem.qname}> has interleaved text", tok.span)
            elem.text = unescape(tok.text)
            elem.text_span = tok.span
            i += 1
        else:
            raise XmiError(f"unexpected token {tok.text!r}", tok.span)
    if len(roots) != 1:
        raise XmiError(f"expected one document element, found {len(roots)}")
    root = roots[0]
    seen: dict[str, ModelElement] = {}
    for e in root.iter():
        if e.text is not None and e.children:
            raise XmiError(f"<{e.qname}> mixes text and child elements", e.span)
        if e.xmi_id is not None:
            if e.xmi_id in seen:
                raise XmiError(f"duplicate xmi:id {e.xmi_id!r}", e.span)
            seen[e.xmi_id] = e
    return root


def index_ids(root: ModelElement) -> dict[str, ModelElement]:
    return {e.xmi_id: e for e in root.iter() if e.xmi_id is not None}


def parent_map(root: ModelElement) -> dict[int, ModelElement]:
    out: dict[int, ModelElement] = {}
    for e in root.iter():
        for c in e.children:
            out[id(c)] = e
    return out


def dangling_references(root: ModelElement) -> list[tuple[ModelElement, str, str]]:
    """``(element, attribute, value)`` for references to unknown xmi:ids."""
    ids = index_ids(root)
    out = []
    for e in root.iter():
        for a in e.attributes:
            if a.name in REFERENCE_ATTRIBUTES:
                for part in a.value.split():
                    if part not in ids and "#" not in part:
                        out.append((e, a.name, part))
    return out


# -- serialization --------------------------------------------------------------------


def serialize(root: ModelElement, indent: str = "  ") -> str:
    lines: list[str] = []

    def attrs(e: ModelElement) -> str:
        return "".join(f' {a.name}="{escape(a.value, {chr(34): "&quot;"})}"' for a in e.attributes)

    def walk(e: ModelElement, depth: int) -> None:
        pad = indent * depth
        if e.self_closing and not e.children and e.text is None:
            lines.append(f"{pad}<{e.qname}{attrs(e)}/>")
        elif e.text is not None:
            lines.append(f"{pad}<{e.qname}{attrs(e)}>{escape(e.text)}</{e.qname}>")
        else:
            lines.append(f"{pad}<{e.qname}{attrs(e)}>")
            for c in e.children:
                walk(c, depth + 1)
            lines.append(f"{pad}</{e.qname}>")

    walk(root, 0)
    return "\n".join(lines) + "\n"


# -- grammar tokens -------------------------------------------------------------------


@dataclass
class _Lexed:
    tokens: list[Token]
    owners: list[ModelElement]
    ranges: dict[int, tuple[int, int]]  # id(element) -> token range


def _lex(root: ModelElement) -> _Lexed:
    """Turn the tree into the terminal string of the UML grammar.

    Attributes are emitted in grammar order: xmi:type, the identity
    attribute, then the rest in document order.  A value whose parts all name
    known xmi:ids (or contain '#') is a reference, otherwise a plain value.
    """
    ids = index_ids(root)
    toks: list[Token] = []
    owners: list[ModelElement] = []
    ranges: dict[int, tuple[int, int]] = {}

    def put(kind: str, text: str, span: tuple[int, int], owner: ModelElement) -> None:
        toks.append(Token(kind, text, span))
        owners.append(owner)

    def qname(name: str, span: tuple[int, int], owner: ModelElement) -> None:
        if name.startswith(UML_PREFIX):
            cut = span[0] + len(UML_PREFIX)
            put("uml:", UML_PREFIX, (span[0], cut), owner)
            put("xmiName", name[len(UML_PREFIX) :], (cut, span[1]), owner)
        else:
            put("xmiName", name, span, owner)

    def opener(a: Attribute) -> tuple[int, int]:
        return (a.name_span[1], a.value_span[0] + 1)

    def closer(a: Attribute) -> tuple[int, int]:
        return (a.value_span[1] - 1, a.value_span[1])

    def inner(a: Attribute) -> tuple[int, int]:
        return (a.value_span[0] + 1, a.value_span[1] - 1)

    def keyword(kind: str, a: Attribute, e: ModelElement) -> None:
        put(kind, kind, (a.name_span[0], a.value_span[0] + 1), e)

    def ref_parts(a: Attribute) -> list[tuple[str, tuple[int, int]]] | None:
        raw = a.value
        parts = raw.split()
        if not parts or not all(p in ids or "#" in p for p in parts):
            return None
        base = inner(a)[0]
        out = []
        for m in re.finditer(r"\S+", raw):
            # values are plain ASCII ids or URIs; byte offsets follow characters
            a0 = base + len(raw[: m.start()].encode("utf-8"))
            out.append((m.group(), (a0, a0 + len(m.group().encode("utf-8")))))
        return out

    def element(e: ModelElement) -> None:
        first = len(toks)
        put("<", "<", e.open_span, e)
        qname(e.qname, e.name_span, e)
        attrs = [a for a in e.attributes if not (a.name == "xmlns" or a.name.startswith("xmlns:"))]
        nil = [a for a in attrs if a.name in ("nil", "xsi:nil") and a.value == "true"]
        if nil and len(attrs) == 1 and e.self_closing:
            put("nil=`true'/>", "nil=`true'/>", (nil[0].name_span[0], e.end_span[1]), e)
            ranges[id(e)] = (first, len(toks))
            return
        typ = [a for a in attrs if a.name == "xmi:type"]
        ident = [a for a in attrs if a.name == "xmi:id"]
        rest = [a for a in attrs if a.name not in ("xmi:type", "xmi:id")]
        for a in typ:
            keyword("xmi:type=`", a, e)
            qname(a.value, inner(a), e)
            put("'", "'", closer(a), e)
        for a in ident:
            put("xmi:id", "xmi:id", a.name_span, e)
            put("=`", "=`", opener(a), e)
            put("id", a.value, inner(a), e)
            put("'", "'", closer(a), e)
        for a in rest:
            if a.name == "xmi:idref":
                keyword("xmi:idref=`", a, e)
                put("refId", a.value, inner(a), e)
            elif a.name == "href":
                keyword("href=`", a, e)
                put("uriReference", a.value, inner(a), e)
            else:
                put("xmiName", a.name, a.name_span, e)
                put("=`", "=`", opener(a), e)
                parts = ref_parts(a)
                if parts is None:
                    put("value", a.value, inner(a), e)
                else:
                    for text, span in parts:
                        put("refId" if text in ids else "uriReference", text, span, e)
            put("'", "'", closer(a), e)
        if e.self_closing:
            put("/>", "/>", e.end_span, e)
        elif attrs and not e.children and e.text is None:
            # <a x="1"></a> is the long form of <a x="1"/>
            put("/>", "/>", (e.end_span[0], (e.close_span or e.end_span)[1]), e)
        else:
            put(">", ">", e.end_span, e)
            if e.text is not None or not e.children:
                put("value", e.text or "", e.text_span or (e.end_span[1], e.end_span[1]), e)
            for c in e.children:
                element(c)
            cs = e.close_span or e.end_span
            put("</", "</", (cs[0], cs[0] + 2), e)
            qname(e.qname, (cs[0] + 2, cs[0] + 2 + len(e.qname.encode("utf-8"))), e)
            put(">", ">", (cs[1] - 1, cs[1]), e)
        ranges[id(e)] = (first, len(toks))

    element(root)
    return _Lexed(toks, owners, ranges)


def grammar_tokens(root: ModelElement) -> list[Token]:
    return _lex(root).tokens


def _document_root(root: ModelElement) -> tuple[list[ModelElement], str]:
    """Elements to derive, and the start nonterminal.

    An ``xmi:XMI`` wrapper is the XMI declaration layer: its children are
    derived on their own.
    """
    if root.qname == "xmi:XMI":
        if len(root.children) == 1:
            return [root.children[0]], "XMIObjectElement"
        return list(root.children), "XMIElements"
    return [root], "XMIObjectElement"


@dataclass
class XmiDerivation:
    tree: ModelElement
    trace: DerivationTrace
    tokens: list[Token]
    ranges: list[tuple[int, int]]  # token range of each event
    traces: int = 1


def derive_tree(
    tree: ModelElement,
    grammar: Grammar | None = None,
    max_traces: int = DEFAULT_MAX_TRACES,
) -> XmiDerivation:
    """Leftmost derivation of ``tree`` under the UML grammar, with xmi:id anchors.

    Every event carries the xmi:id of the innermost element with an id whose
    token range contains the event's token range.
    """
    g = grammar or uml_grammar()
    parts, start = _document_root(tree)
    lexed = _lexed_parts(parts)
    if start != g.start.name:
        g = g.with_start(start)
    results = parse_raw(g, lexed.tokens, max_traces)
    events, ranges = results[0]
    parents = parent_map(tree)

    def anchor(i: int, j: int) -> str | None:
        if not lexed.owners:
            return None
        e: ModelElement | None = lexed.owners[min(i, len(lexed.owners) - 1)]
        while e is not None:
            lo, hi = lexed.ranges.get(id(e), (0, 0))
            if lo <= i and j <= hi and e.xmi_id is not None:
                return e.xmi_id
            e = parents.get(id(e))
        return None

    anchored = tuple(
        dataclasses.replace(ev, element_id=anchor(i, j)) for ev, (i, j) in zip(events, ranges)
    )
    return XmiDerivation(tree, DerivationTrace(anchored), lexed.tokens, ranges, len(results))


def _lexed_parts(parts: list[ModelElement]) -> _Lexed:
    tokens: list[Token] = []
    owners: list[ModelElement] = []
    ranges: dict[int, tuple[int, int]] = {}
    for p in parts:
        lx = _lex(p)
        shift = len(tokens)
        tokens += lx.tokens
        owners += lx.owners
        ranges.update({k: (a + shift, b + shift) for k, (a, b) in lx.ranges.items()})
    return _Lexed(tokens, owners, ranges)


def parse_xmi(
    tokens: Sequence[XmiToken], max_traces: int = DEFAULT_MAX_TRACES
) -> tuple[ModelElement, DerivationTrace]:
    """Build the model tree and its leftmost derivation trace.

    Raises :class:`ParseError` (with the span of the first token that has no
    viable continuation) when the document is not derivable.
    """
    tree = build_tree(tokens)
    result = derive_tree(tree, max_traces=max_traces)
    return tree, result.trace


# -- activity ordering ----------------------------------------------------------------


def _is_edge(e: ModelElement, which: str) -> bool:
    return e.local_name == which


def normalize_activity_order(
    tree: ModelElement, warnings: list[str] | None = None
) -> ModelElement:
    """Reorder activity nodes so fork/join and edge preconditions hold.

    Inside every node, incoming children move before the others.  Inside
    every element with ``node`` children, the i-th ForkNode is paired with
    the i-th JoinNode in document order; a join that precedes its fork moves
    to just before the next fork (or after the last node).  Returns a new
    tree; the input is not modified.
    """

    def walk(e: ModelElement) -> ModelElement:
        children = [walk(c) for c in e.children]
        if e.local_name == "node":
            children = sorted(children, key=lambda c: 0 if _is_edge(c, "incoming") else 1)
        if any(c.local_name == "node" for c in children):
            children = _order_fork_join(e, children, warnings)
        return dataclasses.replace(e, children=children)

    return walk(tree)


def _order_fork_join(
    parent: ModelElement, children: list[ModelElement], warnings: list[str] | None
) -> list[ModelElement]:
    slots = [k for k, c in enumerate(children) if c.local_name == "node"]
    nodes = [children[k] for k in slots]
    forks = [n for n in nodes if n.type_name == "ForkNode"]
    joins = [n for n in nodes if n.type_name == "JoinNode"]
    if len(forks) != len(joins) and warnings is not None:
        where = parent.name or parent.xmi_id or parent.qname
        warnings.append(
            f"{where}: {len(forks)} ForkNode(s) but {len(joins)} JoinNode(s); "
            f"pairing the first {min(len(forks), len(joins))} in document order"
        )
    for k, (fork, join) in enumerate(zip(forks, joins)):
        fi = next(i for i, n in enumerate(nodes) if n is fork)
        ji = next(i for i, n in enumerate(nodes) if n is join)
        if ji > fi:
            continue
        nodes.pop(ji)
        if k + 1 < len(forks):
            nodes.insert(next(i for i, n in enumerate(nodes) if n is forks[k + 1]), join)
        else:
            nodes.append(join)
    out = list(children)
    for k, node in zip(slots, nodes):
        out[k] = node
    return out


def read_model(text: str, normalize: bool = True, warnings: list[str] | None = None) -> ModelElement:
    tree = build_tree(tokenize_xmi(text))
    return normalize_activity_order(tree, warnings) if normalize else tree


__all__ = [
    "ModelElement",
    "ParseError",
    "XmiDerivation",
    "XmiError",
    "XmiSyntaxError",
    "XmiToken",
    "build_tree",
    "dangling_references",
    "derive_tree",
    "grammar_tokens",
    "index_ids",
    "normalize_activity_order",
    "parse_xmi",
    "read_model",
    "serialize",
    "tokenize_xmi",
    "uml_grammar",
]
