from __future__ import annotations

import re

import pytest
from helpers import FIXTURES, words

from csys.automata import compile_rule, intersect, universal_control
from csys.grammar import TraceBudgetExceeded, compile_grammar, recognizes
from csys.rules import (
    rule_fork_join_balance,
    rule_max_attributes,
    rule_single_generalization,
)
from csys.system import CSystem, CSystemError, Status, check_trace, classify, membership
from csys.xmi import derive_tree, read_model, uml_grammar


@pytest.fixture(scope="module")
def example():
    g = compile_grammar((FIXTURES / "example1.grammar").read_text())
    control = compile_rule((FIXTURES / "example1.rule").read_text(), g)
    return CSystem(g, [control])


def label_rule(rule_id: str, grammar: str) -> str:
    return f'rule "{rule_id}"\nevents\n  x = p1\n  y = p2\n  z = p3\ngrammar\n{grammar}'


def test_example_members(example):
    assert membership(example, "aab").status is Status.IN_GLOBAL_LANGUAGE
    result = membership(example, "abab")
    assert result.status is Status.REJECTED_BY_CONTROLS
    # p1 p2 p1: the second p1 comes after a p2
    assert result.details[0].first_dead_index == 2
    assert membership(example, "").status is Status.REJECTED_BY_CONTROLS


def test_example_rejected_by_controlled(example):
    assert membership(example, "abc").status is Status.REJECTED_BY_CONTROLLED


def test_example_language_is_a_star_b_plus(example):
    for w in words("ab", 8):
        w = "".join(w)
        assert membership(example, w).accepted == bool(re.fullmatch("a*b+", w)), w


def test_subset_law(example):
    for w in words("abc", 5):
        w = "".join(w)
        if membership(example, w).accepted:
            assert recognizes(example.controlled, w)


def test_universal_control_is_neutral(example):
    c = CSystem(example.controlled, [universal_control()])
    for w in words("ab", 8):
        assert membership(c, w).accepted


def test_conjunction_equals_intersection(example):
    g = example.controlled
    a = compile_rule(label_rule("even-a", "  S -> x x S | y S | z S | ε"), g)
    b = compile_rule(label_rule("no-bb", "  S -> x S | y T | z S | ε\n  T -> x S | z S | ε"), g)
    both = CSystem(g, [a, b])
    product = CSystem(g, [intersect(a, b)])
    for w in words("ab", 6):
        assert membership(both, w).accepted == membership(product, w).accepted


def test_existential_over_traces():
    g = compile_grammar("l: S -> a A\nr: S -> A a\nk: A -> a")
    only_right = compile_rule('rule "right"\nevents\n  l = l\n  r = r\n  k = k\ngrammar\n  S -> r k')
    c = CSystem(g, [only_right])
    assert len(membership(c, "aa").traces) == 2
    assert membership(c, "aa").accepted


def test_budget_overflow_propagates():
    g = compile_grammar("s: S -> S S | a")
    c = CSystem(g, [universal_control()])
    with pytest.raises(TraceBudgetExceeded):
        membership(c, "a" * 8, max_traces=10)


def test_control_must_cover_labels():
    g = compile_grammar("p1: S -> a S\np2: S -> b S\np3: S -> ε")
    partial = compile_rule('rule "partial"\nevents\n  x = p1\ngrammar\n  S -> x S | ε')
    with pytest.raises(CSystemError, match="p2"):
        CSystem(g, [partial])
    with pytest.raises(CSystemError):
        CSystem(g, [])


def test_families(example):
    assert classify(example) == "C_R^R"
    assert classify(CSystem(uml_grammar(), [rule_fork_join_balance()])) == "C_CF^CF"
    assert classify(CSystem(uml_grammar(), [rule_single_generalization()])) == "C_CF^R"
    g = example.controlled
    cf_control = compile_rule(label_rule("cf", "  S -> x S y | z"), g)
    assert classify(CSystem(g, [cf_control])) == "C_R^CF"


def test_check_trace_on_class_diagram():
    trace = derive_tree(read_model((FIXTURES / "fig1.xmi").read_text())).trace
    c = CSystem(uml_grammar(), [rule_single_generalization(), rule_max_attributes(30)])
    r1, r2 = check_trace(c, trace)
    assert not r1 and trace[r1.dead_index].parameter == "Generalization"
    assert r2


def test_check_trace_empty():
    c = CSystem(uml_grammar(), [rule_single_generalization()])
    assert all(check_trace(c, []))
