"""Independent oracles and event fixtures shared by the test modules."""

from __future__ import annotations

import itertools
import random
import re
from pathlib import Path

from csys.automata import Alphabet, Atom, EventClass, FiniteControl
from csys.grammar import ProductionEvent

FIXTURES = Path(__file__).parent / "fixtures"

# one representative production event per rule letter
EVENTS = {
    "c": ProductionEvent("2k_1", "Class"),
    "g": ProductionEvent("2k_1", "Generalization"),
    "pr": ProductionEvent("2k_1", "Property"),
    "pe": ProductionEvent("2k_2", "packagedElement"),
    "D": ProductionEvent("2e"),
    "n": ProductionEvent("2k_2", "node"),
    "f": ProductionEvent("2k_1", "ForkNode"),
    "j": ProductionEvent("2k_1", "JoinNode"),
    "i": ProductionEvent("2c_1", "incoming"),
    "o": ProductionEvent("2c_1", "outgoing"),
}


def events(letters) -> list[ProductionEvent]:
    if isinstance(letters, str):
        letters = letters.split()
    return [EVENTS[x] for x in letters]


def words(alphabet, max_len: int, min_len: int = 0):
    for n in range(min_len, max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


# -- rule oracles ---------------------------------------------------------------------


def two_generalizations(word) -> bool:
    """A class segment (from a c up to the next c) holds two g."""
    text = "".join(word)
    return re.search(r"c[^c]*g[^c]*g", text) is not None


def too_many_attributes(word, n: int) -> bool:
    """More than n pr between a c and the next c or pe."""
    count = None
    for x in word:
        if x == "c":
            count = 0
        elif x == "pe":
            count = None
        elif x == "pr" and count is not None:
            count += 1
            if count > n:
                return True
    return False


def fork_join_balanced(word) -> bool:
    """Pair forks and joins by nesting and compare fork o-count with join i-count.

    Nodes are delimited by n ... n; inside a node, f or j marks its kind and
    the i / o letters count its edges.
    """
    stack: list[int] = []
    node: list[str] | None = None
    for x in word:
        if x == "n":
            if node is None:
                node = []
                continue
            kind = "f" if "f" in node else "j" if "j" in node else None
            if kind == "f":
                stack.append(node.count("o"))
            elif kind == "j":
                if not stack or stack.pop() != node.count("i"):
                    return False
            node = None
        elif node is not None:
            node.append(x)
    return not stack and node is None


def activity_node(kind: str | None, incoming: int, outgoing: int, noise: bool) -> list[str]:
    out = ["n"]
    if kind:
        out.append(kind)
    if noise:
        out.append("D")
    out += ["i"] * incoming
    out += ["o"] * outgoing
    if noise:
        out.append("D")
    return out + ["n"]


def fork_join_traces(max_count: int = 4):
    """Single, sequential and nested fork/join structures with edge counts up to max_count."""
    r = range(max_count + 1)
    for k, m in itertools.product(r, r):
        for noise in (False, True):
            fork = activity_node("f", 1, k, noise)
            join = activity_node("j", m, 1, noise)
            middle = activity_node(None, 1, 1, noise)
            yield fork + middle + join
            yield ["D"] + fork + join + ["D"]
    for k1, m1, k2, m2 in itertools.product(range(3), repeat=4):
        a = activity_node("f", 1, k1, False), activity_node("j", m1, 1, False)
        b = activity_node("f", 1, k2, False), activity_node("j", m2, 1, False)
        yield a[0] + a[1] + b[0] + b[1]
        yield a[0] + b[0] + b[1] + a[1]
    yield activity_node(None, 2, 3, True)
    yield []


# -- random automata ------------------------------------------------------------------


def random_control(rng: random.Random, alphabet: Alphabet, max_states: int = 5) -> FiniteControl:
    n = rng.randint(1, max_states)
    states = range(n)
    trans = {
        (s, a): rng.randrange(n) for s in states for a in alphabet.names if rng.random() < 0.8
    }
    accepting = frozenset(s for s in states if rng.random() < 0.5)
    return FiniteControl(frozenset(states), alphabet, trans, 0, accepting)


def class_alphabet() -> Alphabet:
    return Alphabet([EventClass("c", (Atom("2k", "Class"),)), EventClass("D", wildcard=True)])


def family_alphabet() -> Alphabet:
    return Alphabet([EventClass("k", (Atom("2k"),)), EventClass("D", wildcard=True)])


# events that tell the two alphabets apart: Class, other 2k, neither
PROBE_EVENTS = [EVENTS["c"], EVENTS["pe"], EVENTS["D"]]


def run_finite(control: FiniteControl, trace) -> bool:
    state = control.start
    for e in trace:
        state = control.transitions.get((state, control.alphabet.classify(e)))
        if state is None:
            return False
    return state in control.accepting


# one "criterion N: PASS|FAIL ..." line per acceptance criterion, printed at session end
ACCEPTANCE_LINES: list[str] = []
