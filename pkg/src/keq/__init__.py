"""Knowledge-equation toolchain.

Parse KE problem text, check it against the math ontology, render Lean 4 /
Coq / Isabelle theorem statements, synthesize problems from templates, and
validate corpora (compiler checks plus graded semantic judging).
"""

from importlib import resources
from pathlib import Path

from .elaborate import ElabError, ElaborationFailure, TypedProblem, elaborate, explicit_ascriptions
from .ontology import ConceptDef, LoadError, OntologySpec, OperatorDef, load_ontology
from .parser import ParseError, PlaceholderMisuse, parse_assertion, parse_problem
from .syntax import Assertion, Declaration, Problem, Term, pretty
from .transpile import (
    BadHoleIndex,
    MissingRule,
    RenderedTheorem,
    RuleTable,
    TranspileError,
    UnrenderablePlaceholder,
    load_rules,
    normalize_tokens,
    transpile,
    transpile_all,
)

__all__ = [
    "Assertion",
    "BadHoleIndex",
    "ConceptDef",
    "Declaration",
    "ElabError",
    "ElaborationFailure",
    "LoadError",
    "MissingRule",
    "OntologySpec",
    "OperatorDef",
    "ParseError",
    "PlaceholderMisuse",
    "Problem",
    "RenderedTheorem",
    "RuleTable",
    "Term",
    "TranspileError",
    "TypedProblem",
    "UnrenderablePlaceholder",
    "data_path",
    "default_ontology",
    "default_rules",
    "elaborate",
    "explicit_ascriptions",
    "load_ontology",
    "load_rules",
    "normalize_tokens",
    "parse_assertion",
    "parse_problem",
    "pretty",
    "transpile",
    "transpile_all",
]


def data_path(*parts: str) -> Path:
    """Path to a shipped data file (ontology, rule tables, templates)."""
    return Path(resources.files("keq") / "data").joinpath(*parts)


def default_ontology() -> OntologySpec:
    return load_ontology(data_path("ontology", "core.ont"))


def default_rules(spec: OntologySpec, targets: tuple[str, ...] = ("lean4", "coq", "isabelle")):
    """Load the shipped rule tables for the given targets, in order."""
    return [load_rules(data_path("rules", f"{name}.rules"), spec) for name in targets]
