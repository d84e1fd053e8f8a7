"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

from __future__ import annotations

import json
import random
import re
import time
from collections import Counter

import pytest
from helpers import (
    ACCEPTANCE_LINES,
    FIXTURES,
    PROBE_EVENTS,
    class_alphabet,
    events,
    family_alphabet,
    fork_join_balanced,
    fork_join_traces,
    random_control,
    run_finite,
    too_many_attributes,
    two_generalizations,
    words,
)

from csys.automata import accepts, compile_rule, intersect
from csys.grammar import compile_grammar, derives, leftmost_derive
from csys.report import check_model, to_json
from csys.rules import (
    SINGLE_GENERALIZATION,
    rule_fork_join_balance,
    rule_max_attributes,
    rule_single_generalization,
)
from csys.system import CSystem, Status, classify, membership
from csys.xmi import derive_tree, index_ids, read_model, uml_grammar


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def example_system() -> CSystem:
    g = compile_grammar((FIXTURES / "example1.grammar").read_text())
    return CSystem(g, [compile_rule((FIXTURES / "example1.rule").read_text(), g)])


def test_criterion_1_example_reproduction():
    started = time.perf_counter()
    c = example_system()
    aab = membership(c, "aab").status
    abab = membership(c, "abab").status
    elapsed = time.perf_counter() - started
    ok = (
        aab is Status.IN_GLOBAL_LANGUAGE
        and abab is Status.REJECTED_BY_CONTROLS
        and elapsed < 1.0
    )
    record(1, ok, f"aab={aab.value} abab={abab.value} in {elapsed:.3f}s (< 1 s)")


def test_criterion_2_global_language_equivalence():
    started = time.perf_counter()
    c = example_system()
    checked = mismatches = 0
    for w in words("ab", 8, min_len=1):
        w = "".join(w)
        checked += 1
        mismatches += membership(c, w).accepted != bool(re.fullmatch(r"a*b+", w))
    elapsed = time.perf_counter() - started
    ok = checked == 510 and mismatches == 0 and elapsed < 5.0
    record(2, ok, f"{checked} strings, {mismatches} mismatches, {elapsed:.2f}s (< 5 s)")


def test_criterion_3_class_diagram():
    path = FIXTURES / "fig1.xmi"
    r1 = check_model(path, [rule_single_generalization()], timing=False)
    r2 = check_model(path, [rule_max_attributes(30)], timing=False)
    named = [v.element_name for v in r1.violations]
    both = [rule_single_generalization(), rule_max_attributes(30)]
    first = to_json([check_model(path, both, timing=False)])
    second = to_json([check_model(path, both, timing=False)])
    ok = (
        named == ["FaxMachine"]
        and "Scanner" not in named
        and "Printer" not in named
        and r2.verdict == "pass"
        and not r2.violations
        and first == second
    )
    record(
        3,
        ok,
        f"rule 1 violations at {named}, rule 2 violations {len(r2.violations)}, "
        f"report byte-identical={first == second}",
    )


def test_criterion_4_activity_diagram():
    path = FIXTURES / "fig2.xmi"
    report = check_model(path, [rule_fork_join_balance()], timing=False)
    trace = derive_tree(read_model(path.read_text())).trace
    params = [e.parameter for e in trace if e.parameter]

    def edges(kind: str) -> Counter:
        at = params.index(kind)
        return Counter(p for p in params[at : params.index("node", at)] if p in ("incoming", "outgoing"))

    fork, join = edges("ForkNode"), edges("JoinNode")
    ok = len(report.violations) == 1 and fork["outgoing"] == 1 and join["incoming"] == 2
    where = report.violations[0].element_name if report.violations else None
    record(
        4,
        ok,
        f"{len(report.violations)} violation at {where}; fork outgoing={fork['outgoing']}, "
        f"join incoming={join['incoming']}",
    )


def test_criterion_5_rule_characterizations():
    started = time.perf_counter()
    r1 = rule_single_generalization()
    m1 = sum(
        (not accepts(r1, events(w))) != two_generalizations(w) for w in words(("c", "g", "D"), 7)
    )
    r2 = rule_max_attributes(2)
    m2 = sum(
        (not accepts(r2, events(w))) != too_many_attributes(w, 2)
        for w in words(("c", "pr", "pe", "D"), 7)
    )
    r3 = rule_fork_join_balance()
    traces = list(fork_join_traces(4))
    m3 = sum(bool(accepts(r3, events(w))) != fork_join_balanced(w) for w in traces)
    elapsed = time.perf_counter() - started
    ok = m1 == m2 == m3 == 0 and elapsed < 30.0
    record(
        5,
        ok,
        f"mismatches rule1={m1} rule2={m2} rule3={m3} over {len(traces)} fork/join traces, "
        f"{elapsed:.2f}s (< 30 s)",
    )


def test_criterion_6_intersection_soundness():
    rng = random.Random(20240607)
    probes = list(words(PROBE_EVENTS, 6))
    mismatches = 0
    for _ in range(100):
        a = random_control(rng, class_alphabet(), max_states=5)
        b = random_control(rng, family_alphabet(), max_states=5)
        product = intersect(a, b)
        for w in probes:
            mismatches += run_finite(product, w) != (run_finite(a, w) and run_finite(b, w))
    record(6, mismatches == 0, f"100 pairs x {len(probes)} strings, {mismatches} mismatches")


@pytest.mark.parametrize("name", ["fig1.xmi", "fig2.xmi"])
def test_criterion_7_round_trip_and_anchoring(name):
    path = FIXTURES / name
    tree = read_model(path.read_text())
    d = derive_tree(tree)
    replay = derives(leftmost_derive(uml_grammar(), d.trace), d.tokens)
    ids = index_ids(tree)
    report = check_model(path, timing=False)
    unresolved = [v for v in report.violations if v.element_id not in ids]
    ok = replay and bool(report.violations) and not unresolved
    record(
        7,
        ok,
        f"{name}: replay reproduces {len(d.tokens)} tokens={replay}, "
        f"{len(report.violations)} violations, {len(unresolved)} unresolved anchors",
    )


def test_criterion_8_family_classification():
    example = classify(example_system())
    activity = classify(CSystem(uml_grammar(), [rule_fork_join_balance()]))
    ok = example == "C_R^R" and activity == "C_CF^CF"
    record(8, ok, f"example={example} activity={activity}")


def test_structured_report_is_parseable():
    text = to_json([check_model(FIXTURES / "fig1.xmi", timing=False)])
    rules = {v["rule_id"] for v in json.loads(text)["reports"][0]["violations"]}
    assert rules == {SINGLE_GENERALIZATION}
