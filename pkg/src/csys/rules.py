"""Built-in guideline and consistency rules for UML models in XMI."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib.resources import files

from .automata import ControllingAutomaton, compile_rule

SINGLE_GENERALIZATION = "R1-single-generalization"
MAX_ATTRIBUTES = "R2-max-attributes"
FORK_JOIN_BALANCE = "R3-fork-join-balance"

BUILTIN_IDS = (SINGLE_GENERALIZATION, MAX_ATTRIBUTES, FORK_JOIN_BALANCE)

DEFAULT_MAX_ATTRIBUTES = 30


@dataclass
class RuleConfig:
    max_attributes: int = DEFAULT_MAX_ATTRIBUTES
    enabled: set[str] = field(default_factory=lambda: set(BUILTIN_IDS))

    def __post_init__(self) -> None:
        if self.max_attributes < 1:
            raise ValueError("max_attributes must be at least 1")


def rule_source(rule_id: str) -> str:
    return files(__package__).joinpath(f"rules/{rule_id}.rule").read_text(encoding="utf-8")


def max_attributes_source(n: int) -> str:
    """Rule source for "each class has at most ``n`` attributes".

    State Qi means i attributes seen since the last Class; Qn has no
    Property transition.  A packagedElement ends the class segment.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    lines = [
        f"# Each class can have at most {n} attributes.",
        "#",
        "# Generated by csys.rules.max_attributes_source; edit the generator, not",
        "# this file.",
        f'rule "{MAX_ATTRIBUTES}"',
        f'description "class has more than {n} attributes"',
        "",
        "events",
        '  c  = 2k("Class")',
        '  pr = 2k("Property")',
        '  pe = 2k("packagedElement")',
        "  D  = other",
        "",
        "grammar",
        "  S  -> pe S | c Qc | pr S | D S | ε",
        "  Qc -> pe S | c Qc | pr Q1 | D Qc | ε",
    ]
    for i in range(1, n):
        lines.append(f"  Q{i} -> pe S | c Qc | pr Q{i + 1} | D Q{i} | ε")
    lines.append(f"  Q{n} -> pe S | c Qc | D Q{n} | ε")
    return "\n".join(lines) + "\n"


def rule_single_generalization() -> ControllingAutomaton:
    return compile_rule(rule_source(SINGLE_GENERALIZATION))


def rule_max_attributes(n: int = DEFAULT_MAX_ATTRIBUTES) -> ControllingAutomaton:
    return compile_rule(max_attributes_source(n))


def rule_fork_join_balance() -> ControllingAutomaton:
    return compile_rule(rule_source(FORK_JOIN_BALANCE))


def builtin_rule(rule_id: str, config: RuleConfig | None = None) -> ControllingAutomaton:
    config = config or RuleConfig()
    if rule_id == SINGLE_GENERALIZATION:
        return rule_single_generalization()
    if rule_id == MAX_ATTRIBUTES:
        return rule_max_attributes(config.max_attributes)
    if rule_id == FORK_JOIN_BALANCE:
        return rule_fork_join_balance()
    raise KeyError(f"unknown built-in rule {rule_id!r}")


def builtin_rules(config: RuleConfig | None = None) -> list[ControllingAutomaton]:
    config = config or RuleConfig()
    return [builtin_rule(r, config) for r in BUILTIN_IDS if r in config.enabled]
