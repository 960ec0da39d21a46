"""Core syntax tree for knowledge-equation problems.

A problem is three blocks: variable declarations (``var : ConceptType``),
a list of facts, and a query.  Every fact and the query is an equation
``lhs = rhs``; a bare proposition ``P`` is stored as ``P = True``.  Terms
are immutable trees; structural equality ignores source spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional


@dataclass(frozen=True)
class SourceSpan:
    """Byte offsets plus the 1-based line/column of the start position."""

    start: int
    end: int
    line: int
    col: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("span start must not exceed end")


def _span_field():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ConceptRef:
    """Reference to a concept, possibly instantiated: ``Set(Real)``."""

    name: str
    params: tuple["ConceptRef", ...] = ()
    span: Optional[SourceSpan] = _span_field()

    def __str__(self) -> str:
        if self.params:
            return f"{self.name}({', '.join(str(p) for p in self.params)})"
        return self.name


class Term:
    """Base class for expression nodes."""

    span: Optional[SourceSpan]


@dataclass(frozen=True)
class IntLit(Term):
    value: int
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class RatLit(Term):
    """Exact rational literal, stored reduced with a positive denominator.

    Produced by decimal source literals (``2.5``), so the reduced
    denominator is always of the form 2^a * 5^b and the value prints back
    as a finite decimal.
    """

    num: int
    den: int
    span: Optional[SourceSpan] = _span_field()

    def __post_init__(self) -> None:
        if self.den == 0:
            raise ValueError("rational literal denominator must be nonzero")
        if self.den < 0 or math.gcd(self.num, self.den) != 1:
            raise ValueError("rational literal must be reduced with den > 0")


@dataclass(frozen=True)
class Var(Term):
    name: str
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class Apply(Term):
    """Operator or declared-function application: ``Factorial(k)``, ``A(5)``."""

    op: str
    args: tuple[Term, ...]
    span: Optional[SourceSpan] = _span_field()


INFIX_OPS = ("+", "-", "*", "/", "^", "<", "<=", ">", ">=", "!=", "=", "mod")


@dataclass(frozen=True)
class Infix(Term):
    op: str
    lhs: Term
    rhs: Term
    span: Optional[SourceSpan] = _span_field()

    def __post_init__(self) -> None:
        if self.op not in INFIX_OPS:
            raise ValueError(f"unknown infix operator {self.op!r}")


@dataclass(frozen=True)
class Neg(Term):
    inner: Term
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class TupleTerm(Term):
    items: tuple[Term, ...]
    span: Optional[SourceSpan] = _span_field()

    def __post_init__(self) -> None:
        if len(self.items) < 2:
            raise ValueError("tuples need at least two components")


@dataclass(frozen=True)
class SetLit(Term):
    items: tuple[Term, ...]
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class SetBuilder(Term):
    """``{binder : Concept | predicate}``; the binder shadows any outer
    declaration of the same name within the predicate only."""

    binder: str
    binder_type: ConceptRef
    predicate: Term
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class BoolLit(Term):
    value: bool
    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class Placeholder(Term):
    """The ``?`` unknown; allowed at most once, and only inside a query."""

    span: Optional[SourceSpan] = _span_field()


@dataclass(frozen=True)
class Assertion:
    """``lhs = rhs``; both sides are claimed to denote the same thing."""

    lhs: Term
    rhs: Term
    span: Optional[SourceSpan] = _span_field()

    @staticmethod
    def of_proposition(term: Term) -> "Assertion":
        """Wrap a bare proposition ``P`` as ``P = True``."""
        return Assertion(term, BoolLit(True), span=getattr(term, "span", None))


@dataclass(frozen=True)
class Declaration:
    vars: tuple[str, ...]
    concept: ConceptRef
    span: Optional[SourceSpan] = _span_field()

    def __post_init__(self) -> None:
        if not self.vars:
            raise ValueError("declaration needs at least one variable")


@dataclass(frozen=True)
class Problem:
    name: str
    declarations: tuple[Declaration, ...]
    facts: tuple[Assertion, ...]
    query: Assertion
    span: Optional[SourceSpan] = _span_field()

    def declared_names(self) -> tuple[str, ...]:
        return tuple(v for d in self.declarations for v in d.vars)


def child_terms(term: Term) -> tuple[Term, ...]:
    """Direct sub-terms of a node, in canonical (source) order."""
    if isinstance(term, Apply):
        return term.args
    if isinstance(term, Infix):
        return (term.lhs, term.rhs)
    if isinstance(term, Neg):
        return (term.inner,)
    if isinstance(term, (TupleTerm, SetLit)):
        return term.items
    if isinstance(term, SetBuilder):
        return (term.predicate,)
    return ()


def iter_terms(term: Term) -> Iterator[Term]:
    """Preorder walk of a term tree."""
    yield term
    for child in child_terms(term):
        yield from iter_terms(child)


def problem_terms(problem: Problem) -> Iterator[Term]:
    """Preorder walk over every term in facts (in order) then the query."""
    for assertion in (*problem.facts, problem.query):
        yield from iter_terms(assertion.lhs)
        yield from iter_terms(assertion.rhs)


def count_placeholders(term: Term) -> int:
    return sum(1 for t in iter_terms(term) if isinstance(t, Placeholder))


def make_int(value: int) -> Term:
    """Canonical integer term: negatives are built as negated positives so
    they round-trip through the surface syntax."""
    if value < 0:
        return Neg(IntLit(-value))
    return IntLit(value)


def make_rat(num: int, den: int) -> Term:
    """Reduced rational term; collapses to an integer when the reduced
    denominator is 1 and pulls the sign out front."""
    if den == 0:
        raise ValueError("denominator must be nonzero")
    if den < 0:
        num, den = -num, -den
    g = math.gcd(num, den)
    num, den = num // g, den // g
    if den == 1:
        return make_int(num)
    if num < 0:
        return Neg(RatLit(-num, den))
    return RatLit(num, den)


# --- pretty printing ------------------------------------------------------
#
# Precedence levels shared with the parser.  `=` is admitted inside terms
# (set-builder predicates, operator arguments) at the loosest level;
# comparisons and `=` are non-associative.

PREC_EQ = 10
PREC_CMP = 20
PREC_ADD = 30
PREC_MUL = 40
PREC_UNARY = 50
PREC_POW = 60
PREC_ATOM = 100

_INFIX_PREC = {
    "=": PREC_EQ,
    "<": PREC_CMP,
    "<=": PREC_CMP,
    ">": PREC_CMP,
    ">=": PREC_CMP,
    "!=": PREC_CMP,
    "+": PREC_ADD,
    "-": PREC_ADD,
    "*": PREC_MUL,
    "/": PREC_MUL,
    "mod": PREC_MUL,
    "^": PREC_POW,
}


def term_precedence(term: Term) -> int:
    if isinstance(term, Infix):
        return _INFIX_PREC[term.op]
    if isinstance(term, Neg):
        return PREC_UNARY
    return PREC_ATOM


def _rat_to_decimal(num: int, den: int) -> str:
    # den is 2^a * 5^b for parser-produced literals; scale to a power of 10.
    a = b = 0
    d = den
    while d % 2 == 0:
        d //= 2
        a += 1
    while d % 5 == 0:
        d //= 5
        b += 1
    if d != 1:
        return None  # not a finite decimal
    k = max(a, b)
    sign = "-" if num < 0 else ""
    scaled = abs(num) * (10**k // den)
    digits = str(scaled).rjust(k + 1, "0")
    body = f"{digits[:-k]}.{digits[-k:]}" if k else digits
    return sign + body


def pretty_term(term: Term, parent_prec: int = 0) -> str:
    """Render a term with minimal parentheses under the grammar."""
    text, prec = _render(term)
    if prec < parent_prec:
        return f"({text})"
    return text


def _render(term: Term) -> tuple[str, int]:
    if isinstance(term, IntLit):
        return str(term.value), PREC_ATOM
    if isinstance(term, RatLit):
        dec = _rat_to_decimal(term.num, term.den)
        if dec is not None:
            return dec, PREC_ATOM
        # Falls outside the decimal-literal surface; prints as exact division.
        return f"{term.num} / {term.den}", PREC_MUL
    if isinstance(term, Var):
        return term.name, PREC_ATOM
    if isinstance(term, BoolLit):
        return ("True" if term.value else "False"), PREC_ATOM
    if isinstance(term, Placeholder):
        return "?", PREC_ATOM
    if isinstance(term, Apply):
        args = ", ".join(pretty_term(a) for a in term.args)
        return f"{term.op}({args})", PREC_ATOM
    if isinstance(term, TupleTerm):
        return "(" + ", ".join(pretty_term(i) for i in term.items) + ")", PREC_ATOM
    if isinstance(term, SetLit):
        return "{" + ", ".join(pretty_term(i) for i in term.items) + "}", PREC_ATOM
    if isinstance(term, SetBuilder):
        pred = pretty_term(term.predicate)
        return f"{{{term.binder} : {term.binder_type} | {pred}}}", PREC_ATOM
    if isinstance(term, Neg):
        inner = pretty_term(term.inner, PREC_UNARY)
        return f"-{inner}", PREC_UNARY
    if isinstance(term, Infix):
        prec = _INFIX_PREC[term.op]
        if term.op == "^":
            # Right-associative; the base must be an atom.
            lhs = pretty_term(term.lhs, PREC_ATOM)
            rhs = pretty_term(term.rhs, PREC_UNARY)
        elif term.op in ("=", "<", "<=", ">", ">=", "!="):
            # Non-associative: operands one level up on both sides.
            lhs = pretty_term(term.lhs, prec + 1)
            rhs = pretty_term(term.rhs, prec + 1)
        else:
            lhs = pretty_term(term.lhs, prec)
            rhs = pretty_term(term.rhs, prec + 1)
        return f"{lhs} {term.op} {rhs}", prec
    raise TypeError(f"unknown term node {term!r}")


def pretty_assertion(assertion: Assertion) -> str:
    if assertion.rhs == BoolLit(True):
        # Canonical sugar: `P = True` prints as the bare proposition.  A
        # proposition that is itself an equation keeps disambiguating parens.
        if isinstance(assertion.lhs, Infix) and assertion.lhs.op == "=":
            return f"({pretty_term(assertion.lhs)})"
        return pretty_term(assertion.lhs)
    return f"{pretty_term(assertion.lhs, PREC_EQ + 1)} = {pretty_term(assertion.rhs, PREC_EQ + 1)}"


def pretty(problem: Problem) -> str:
    """Canonical surface form; re-parses to a structurally equal problem."""
    header = f"Problem {problem.name}:" if problem.name else "Problem:"
    decls = "; ".join(
        f"{', '.join(d.vars)}: {d.concept}" for d in problem.declarations
    )
    decl_line = f"Declarations: {decls}" if decls else "Declarations:"
    facts = "; ".join(pretty_assertion(a) for a in problem.facts)
    fact_line = f"Facts: [{facts}]"
    query_line = f"Query: {pretty_assertion(problem.query)}"
    return "\n".join([header, decl_line, fact_line, query_line]) + "\n"


# --- JSON-friendly dumps (CLI output) --------------------------------------


def term_to_dict(term: Term) -> dict:
    if isinstance(term, IntLit):
        return {"kind": "int", "value": str(term.value)}
    if isinstance(term, RatLit):
        return {"kind": "rat", "num": str(term.num), "den": str(term.den)}
    if isinstance(term, Var):
        return {"kind": "var", "name": term.name}
    if isinstance(term, BoolLit):
        return {"kind": "bool", "value": term.value}
    if isinstance(term, Placeholder):
        return {"kind": "placeholder"}
    if isinstance(term, Apply):
        return {"kind": "apply", "op": term.op, "args": [term_to_dict(a) for a in term.args]}
    if isinstance(term, Infix):
        return {
            "kind": "infix",
            "op": term.op,
            "lhs": term_to_dict(term.lhs),
            "rhs": term_to_dict(term.rhs),
        }
    if isinstance(term, Neg):
        return {"kind": "neg", "inner": term_to_dict(term.inner)}
    if isinstance(term, TupleTerm):
        return {"kind": "tuple", "items": [term_to_dict(i) for i in term.items]}
    if isinstance(term, SetLit):
        return {"kind": "set", "items": [term_to_dict(i) for i in term.items]}
    if isinstance(term, SetBuilder):
        return {
            "kind": "set_builder",
            "binder": term.binder,
            "binder_type": str(term.binder_type),
            "predicate": term_to_dict(term.predicate),
        }
    raise TypeError(f"unknown term node {term!r}")


def problem_to_dict(problem: Problem) -> dict:
    return {
        "name": problem.name,
        "declarations": [
            {"vars": list(d.vars), "concept": str(d.concept)} for d in problem.declarations
        ],
        "facts": [
            {"lhs": term_to_dict(a.lhs), "rhs": term_to_dict(a.rhs)} for a in problem.facts
        ],
        "query": {
            "lhs": term_to_dict(problem.query.lhs),
            "rhs": term_to_dict(problem.query.rhs),
        },
    }
