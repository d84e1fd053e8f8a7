from __future__ import annotations

import dataclasses
import json
import subprocess
import sys

import pytest
from helpers import FIXTURES

from csys.cli import run_cli
from csys.report import check_model, evaluate_rules
from csys.rules import (
    FORK_JOIN_BALANCE,
    MAX_ATTRIBUTES,
    SINGLE_GENERALIZATION,
    builtin_rules,
    rule_fork_join_balance,
    rule_max_attributes,
    rule_single_generalization,
)
from csys.xmi import derive_tree, index_ids, read_model

FIG1 = str(FIXTURES / "fig1.xmi")
FIG2 = str(FIXTURES / "fig2.xmi")


def structured(capsys, argv) -> tuple[int, dict]:
    code = run_cli(argv + ["--format", "structured", "--no-timing"])
    return code, json.loads(capsys.readouterr().out)


# -- check_model ----------------------------------------------------------------------


def test_class_diagram_with_rules_1_and_2():
    report = check_model(FIG1, [rule_single_generalization(), rule_max_attributes(30)])
    assert report.verdict == "fail"
    assert len(report.violations) == 1
    v = report.violations[0]
    assert v.rule_id == SINGLE_GENERALIZATION
    assert v.element_name == "FaxMachine"
    assert report.stats["rules"] == 2


def test_class_diagram_with_rule_2_only():
    report = check_model(FIG1, [rule_max_attributes(30)])
    assert report.verdict == "pass" and report.violations == []


def test_activity_diagram_with_rule_3():
    report = check_model(FIG2, [rule_fork_join_balance()])
    assert report.verdict == "fail"
    (v,) = report.violations
    assert v.rule_id == FORK_JOIN_BALANCE
    assert v.element_name == "JoinNode"
    tree = read_model((FIXTURES / "fig2.xmi").read_text())
    assert index_ids(tree)[v.element_id].xmi_type == "uml:JoinNode"


@pytest.mark.parametrize("name", ["fig1.xmi", "fig2.xmi", "fig2_listing.xmi"])
def test_anchor_validity(name):
    path = FIXTURES / name
    data = path.read_bytes()
    report = check_model(path)
    ids = index_ids(read_model(data.decode()))
    assert report.violations
    for v in report.violations:
        assert v.element_id in ids
        assert 0 <= v.byte_span[0] < v.byte_span[1] <= len(data)
        element = ids[v.element_id]
        assert element.span == tuple(v.byte_span)


def test_violation_span_contains_event():
    report = check_model(FIG1, [rule_single_generalization()], keep_trace=True)
    v = report.violations[0]
    data = (FIXTURES / "fig1.xmi").read_bytes()
    line_start = sum(len(x) + 1 for x in data.split(b"\n")[: v.line - 1])
    offset = line_start + v.column - 1
    assert v.byte_span[0] <= offset < v.byte_span[1]
    assert data[offset:].startswith(b"uml:Generalization")
    assert report.trace[v.event_index] == v.event


def test_deletion_recovery_reports_every_violation(tmp_path):
    gen = '<generalization xmi:type="uml:Generalization" xmi:id="g{}" general="a"/>'
    body = "".join(gen.format(k) for k in range(3))
    doc = (
        '<uml:Package xmi:id="p" name="P">'
        '<packagedElement xmi:type="uml:Class" xmi:id="a" name="A"/>'
        f'<packagedElement xmi:type="uml:Class" xmi:id="b" name="B">{body}</packagedElement>'
        "</uml:Package>"
    )
    path = tmp_path / "three.xmi"
    path.write_text(doc)
    report = check_model(path, [rule_single_generalization()])
    assert [v.element_name for v in report.violations] == ["B", "B"]


def test_intersection_fast_path_matches_separate_runs():
    trace = derive_tree(read_model((FIXTURES / "fig1.xmi").read_text())).trace
    rules = [rule_single_generalization(), rule_max_attributes(1), rule_max_attributes(30)]
    rules[2] = dataclasses.replace(rules[2], rule_id="R2-thirty")
    together = [(r.rule_id, i) for r, i in evaluate_rules(rules, trace)]
    alone = [(r.rule_id, i) for rule in rules for r, i in evaluate_rules([rule], trace)]
    assert together == alone


def test_parse_error_is_reported(tmp_path):
    path = tmp_path / "bad.xmi"
    path.write_text('<uml:Package xmi:id="p">\n  <uml:Class name="x"/>\n</uml:Package>\n')
    report = check_model(path)
    assert report.verdict == "error"
    assert report.error.line == 2
    assert report.violations == []


def test_missing_file():
    report = check_model("/nonexistent/model.xmi")
    assert report.verdict == "error" and "cannot read" in report.error.message


def test_report_determinism():
    a = check_model(FIG1, builtin_rules(), timing=False).to_dict()
    b = check_model(FIG1, builtin_rules(), timing=False).to_dict()
    assert json.dumps(a) == json.dumps(b)
    assert a["stats"]["elapsed_ms"] is None


# -- run_cli --------------------------------------------------------------------------


def test_cli_rule1_exit_1(capsys):
    assert run_cli(["check", FIG1, "--rule", SINGLE_GENERALIZATION]) == 1
    assert "FaxMachine" in capsys.readouterr().out


def test_cli_rule2_exit_0(capsys):
    assert run_cli(["check", FIG1, "--rule", MAX_ATTRIBUTES, "--max-attrs", "30"]) == 0


def test_cli_no_files_exit_2(capsys):
    assert run_cli(["check"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_bad_flag_exit_2(capsys):
    assert run_cli(["check", FIG1, "--bogus"]) == 2
    assert run_cli(["check", FIG1, "--max-attrs", "0"]) == 2


def test_cli_unknown_rule_exit_2(capsys):
    assert run_cli(["check", FIG1, "--rule", "no-such-rule"]) == 2
    assert "no-such-rule" in capsys.readouterr().err


def test_cli_error_beats_failure(capsys, tmp_path):
    bad = tmp_path / "bad.xmi"
    bad.write_text("<a>")
    assert run_cli(["check", FIG1, str(bad)]) == 2


def test_cli_structured_output(capsys):
    code, out = structured(capsys, ["check", FIG1, FIG2])
    assert code == 1
    files = [r["file"] for r in out["reports"]]
    assert files == [FIG1, FIG2]
    fig1 = out["reports"][0]
    assert set(fig1) >= {"file", "verdict", "violations", "stats"}
    assert set(fig1["violations"][0]) >= {
        "rule_id",
        "message",
        "event_index",
        "byte_span",
        "line",
        "column",
        "element_id",
        "element_name",
    }
    assert set(fig1["stats"]) == {"events", "rules", "elapsed_ms"}


def test_cli_structured_is_byte_identical(capsys):
    run_cli(["check", FIG1, FIG2, "--format", "structured", "--no-timing"])
    first = capsys.readouterr().out
    run_cli(["check", FIG1, FIG2, "--format", "structured", "--no-timing", "--jobs", "2"])
    assert capsys.readouterr().out == first


def test_cli_trace_listing(capsys):
    _, out = structured(capsys, ["check", FIG1, "--trace"])
    assert out["reports"][0]["trace"][:2] == ["2a_2", "2k_1(Package)"]


def test_cli_no_normalize(capsys, tmp_path):
    doc = (
        '<packagedElement xmi:type="uml:Activity" xmi:id="act" name="A">'
        '<node xmi:type="uml:ForkNode" xmi:id="f" name="F">'
        '<outgoing xmi:idref="e2"/><incoming xmi:idref="e1"/></node>'
        '<node xmi:type="uml:JoinNode" xmi:id="j" name="J"><incoming xmi:idref="e2"/></node>'
        "</packagedElement>"
    )
    path = tmp_path / "act.xmi"
    path.write_text(doc)
    args = ["check", str(path), "--rule", FORK_JOIN_BALANCE]
    assert run_cli(args) == 0
    assert run_cli(args + ["--no-normalize"]) == 1


def test_cli_rule_file_and_search_path(capsys, tmp_path, monkeypatch):
    rule = tmp_path / "no-generalization.rule"
    rule.write_text(
        'rule "no-generalization"\ndescription "generalization is forbidden"\n'
        'events\n  g = 2k("Generalization")\n  D = other\ngrammar\n  S -> D S | ε\n'
    )
    assert run_cli(["check", FIG1, "--rule", str(rule)]) == 1
    capsys.readouterr()
    monkeypatch.setenv("CSYS_RULE_PATH", str(tmp_path))
    code, out = structured(capsys, ["check", FIG1, "--rule", "no-generalization"])
    assert code == 1
    # deletion recovery: both generalizations of FaxMachine are reported
    assert len(out["reports"][0]["violations"]) == 2


def test_cli_bad_rule_file(capsys, tmp_path):
    rule = tmp_path / "broken.rule"
    rule.write_text('rule "x"\nevents\n  g = 9z\ngrammar\n  S -> g')
    assert run_cli(["check", FIG1, "--rule", str(rule)]) == 2
    assert "broken.rule" in capsys.readouterr().err


def test_cli_grammar_mode(capsys, tmp_path):
    words = {"good": "a a b", "bad": "a b a b", "alien": "a c"}
    paths = []
    for name, text in words.items():
        p = tmp_path / f"{name}.txt"
        p.write_text(text + "\n")
        paths.append(str(p))
    grammar = str(FIXTURES / "example1.grammar")
    rule = str(FIXTURES / "example1.rule")
    code, out = structured(capsys, ["check", "--grammar", grammar, "--rule", rule, *paths])
    assert code == 2
    verdicts = [r["verdict"] for r in out["reports"]]
    assert verdicts == ["pass", "fail", "error"]
    bad = out["reports"][1]["violations"][0]
    # the event spans the yield of its subtree: "a b" at bytes 4..7
    assert bad["event_index"] == 2 and bad["byte_span"] == [4, 7]
    assert out["reports"][2]["error"]["column"] == 3
    assert run_cli(["check", "--grammar", grammar, "--rule", rule, paths[0]]) == 0


def test_python_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "csys", "check", FIG1, "--rule", SINGLE_GENERALIZATION],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 1
    assert "FaxMachine" in proc.stdout
