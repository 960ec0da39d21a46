"""Type checking of parsed problems against an ontology.

Produces a TypedProblem mapping every term node to a concept, recording
implicit numeric upcasts as coercions.  Errors are accumulated (never
first-error-only) and reported in source order.  A second pass,
explicit_ascriptions, marks the numeric literals inside power expressions
that target backends must pin to an explicit Real/Rational type: a bare
literal base under a negative exponent, and a negative literal exponent
over a non-literal real base.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .ontology import OntologySpec
from .syntax import (
    Apply,
    Assertion,
    BoolLit,
    ConceptRef,
    IntLit,
    Infix,
    Neg,
    Placeholder,
    Problem,
    RatLit,
    SetBuilder,
    SetLit,
    SourceSpan,
    Term,
    TupleTerm,
    Var,
    iter_terms,
    problem_terms,
)

UNDECLARED_VARIABLE = "UndeclaredVariable"
UNKNOWN_OPERATOR = "UnknownOperator"
ARITY_MISMATCH = "ArityMismatch"
TYPE_MISMATCH = "TypeMismatch"
PLACEHOLDER_OUTSIDE_QUERY = "PlaceholderOutsideQuery"

_TUPLE = "Tuple"
_UNKNOWN = "?"

BOOLEAN = ConceptRef("Boolean")
UNKNOWN_TYPE = ConceptRef(_UNKNOWN)


@dataclass(frozen=True)
class ElabError:
    kind: str
    detail: str
    span: SourceSpan | None = None

    def __str__(self) -> str:
        loc = f"{self.span.line}:{self.span.col}: " if self.span else ""
        return f"{loc}{self.kind}: {self.detail}"


class ElaborationFailure(Exception):
    """Carries every error found in one elaboration run."""

    def __init__(self, errors: list[ElabError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors

    def kinds(self) -> set[str]:
        return {e.kind for e in self.errors}


class NodeIndex:
    """Stable preorder ids for every term node of a problem.

    Both the elaborator and the transpiler index nodes through this walk,
    so type and ascription lookups agree by construction.
    """

    def __init__(self, problem: Problem):
        self._ids: dict[int, int] = {}
        for node_id, term in enumerate(problem_terms(problem)):
            self._ids.setdefault(id(term), node_id)

    def id_of(self, term: Term) -> int:
        return self._ids[id(term)]


@dataclass(frozen=True)
class TypedProblem:
    problem: Problem
    term_types: dict[int, str]
    coercions: list[tuple[int, str, str]]
    ascriptions: dict[int, str] = field(default_factory=dict)

    def type_of(self, index: NodeIndex, term: Term) -> str:
        return self.term_types[index.id_of(term)]


_COMPARISONS = ("<", "<=", ">", ">=", "!=")


class _Elaborator:
    def __init__(self, problem: Problem, spec: OntologySpec):
        self.problem = problem
        self.spec = spec
        self.index = NodeIndex(problem)
        self.errors: list[ElabError] = []
        self.types: dict[int, ConceptRef] = {}
        self.coercions: list[tuple[int, str, str]] = []
        self.env: dict[str, ConceptRef] = {}

    # -- reporting helpers ---------------------------------------------------

    def error(self, kind: str, detail: str, span: SourceSpan | None) -> ConceptRef:
        self.errors.append(ElabError(kind, detail, span))
        return UNKNOWN_TYPE

    def assign(self, term: Term, ref: ConceptRef) -> ConceptRef:
        self.types[self.index.id_of(term)] = ref
        return ref

    # -- subtype lattice over concept refs ------------------------------------

    def is_subtype(self, a: ConceptRef, b: ConceptRef) -> bool:
        if a.name == _UNKNOWN or b.name == _UNKNOWN:
            return True
        if a.name == _TUPLE or b.name == _TUPLE:
            return (
                a.name == b.name
                and len(a.params) == len(b.params)
                and all(self.is_subtype(x, y) for x, y in zip(a.params, b.params))
            )
        if a.name not in self.spec.concepts or b.name not in self.spec.concepts:
            return False
        if not self.spec.subtype(a.name, b.name):
            return False
        if a.params and b.params:
            return len(a.params) == len(b.params) and all(
                self.is_subtype(x, y) for x, y in zip(a.params, b.params)
            )
        return True  # a bare side is treated as the unconstrained generic

    def compatible(self, a: ConceptRef, b: ConceptRef) -> bool:
        return self.is_subtype(a, b) or self.is_subtype(b, a)

    def lub(self, a: ConceptRef, b: ConceptRef) -> ConceptRef | None:
        if a.name == _UNKNOWN:
            return b
        if b.name == _UNKNOWN:
            return a
        if a == b:
            return a
        if a.name not in self.spec.concepts or b.name not in self.spec.concepts:
            return None
        chain: list[str] = []
        cursor: str | None = a.name
        while cursor is not None:
            chain.append(cursor)
            cursor = self.spec.concepts[cursor].supertype
        ancestors_b = set()
        cursor = b.name
        while cursor is not None:
            ancestors_b.add(cursor)
            cursor = self.spec.concepts[cursor].supertype
        for name in chain:
            if name in ancestors_b:
                return ConceptRef(name)
        return None

    def is_numeric(self, ref: ConceptRef) -> bool:
        if ref.name == _UNKNOWN:
            return True
        return ref.name in self.spec.concepts and self.spec.subtype(ref.name, "Real")

    # -- declarations ----------------------------------------------------------

    def check_concept_ref(self, ref: ConceptRef, span: SourceSpan | None) -> bool:
        definition = self.spec.concepts.get(ref.name)
        if definition is None:
            self.error(TYPE_MISMATCH, f"unknown concept {ref.name!r}", ref.span or span)
            return False
        if ref.params and len(ref.params) != definition.type_params:
            self.error(
                TYPE_MISMATCH,
                f"concept {ref.name!r} takes {definition.type_params} type parameters, got {len(ref.params)}",
                ref.span or span,
            )
            return False
        return all(self.check_concept_ref(p, span) for p in ref.params)

    def load_declarations(self) -> None:
        for decl in self.problem.declarations:
            ok = self.check_concept_ref(decl.concept, decl.span)
            for name in decl.vars:
                self.env[name] = decl.concept if ok else UNKNOWN_TYPE

    # -- function application ---------------------------------------------------

    def apply_signature(self, ref: ConceptRef) -> tuple[tuple[ConceptRef, ...], ConceptRef] | None:
        """Argument/return types when a value of this concept is applied."""
        if ref.name == "Function" and len(ref.params) >= 2:
            return ref.params[:-1], ref.params[-1]
        definition = self.spec.concepts.get(ref.name)
        if definition is not None and definition.apply_returns is not None:
            return (
                tuple(ConceptRef(a) for a in definition.apply_args),
                ConceptRef(definition.apply_returns),
            )
        return None

    # -- terms -----------------------------------------------------------------

    def infer(self, term: Term, env: dict[str, ConceptRef]) -> ConceptRef:
        if isinstance(term, IntLit):
            name = "NaturalNumbers" if term.value >= 0 else "Integers"
            return self.assign(term, ConceptRef(name))
        if isinstance(term, RatLit):
            return self.assign(term, ConceptRef("Rational"))
        if isinstance(term, BoolLit):
            return self.assign(term, BOOLEAN)
        if isinstance(term, Placeholder):
            return self.assign(term, UNKNOWN_TYPE)
        if isinstance(term, Var):
            ref = env.get(term.name)
            if ref is None:
                return self.assign(
                    term, self.error(UNDECLARED_VARIABLE, f"variable {term.name!r} is not declared", term.span)
                )
            return self.assign(term, ref)
        if isinstance(term, Neg):
            inner = self.infer(term.inner, env)
            if not self.is_numeric(inner):
                return self.assign(
                    term, self.error(TYPE_MISMATCH, f"cannot negate a value of type {inner}", term.span)
                )
            result = inner if inner.name not in ("NaturalNumbers", "PositiveIntegers") else ConceptRef("Integers")
            return self.assign(term, result)
        if isinstance(term, TupleTerm):
            items = tuple(self.infer(item, env) for item in term.items)
            return self.assign(term, ConceptRef(_TUPLE, items))
        if isinstance(term, SetLit):
            element: ConceptRef = UNKNOWN_TYPE
            for item in term.items:
                item_type = self.infer(item, env)
                joined = self.lub(element, item_type)
                if joined is None:
                    self.error(
                        TYPE_MISMATCH,
                        f"set literal mixes incompatible element types {element} and {item_type}",
                        term.span,
                    )
                    joined = UNKNOWN_TYPE
                element = joined
            params = () if element.name == _UNKNOWN else (element,)
            return self.assign(term, ConceptRef("Set", params))
        if isinstance(term, SetBuilder):
            ok = self.check_concept_ref(term.binder_type, term.span)
            inner_env = dict(env)
            inner_env[term.binder] = term.binder_type if ok else UNKNOWN_TYPE
            predicate = self.infer(term.predicate, inner_env)
            if not self.is_subtype(predicate, BOOLEAN):
                self.error(
                    TYPE_MISMATCH,
                    f"set-builder predicate must be Boolean, got {predicate}",
                    term.predicate.span or term.span,
                )
            return self.assign(term, ConceptRef("Set", (term.binder_type,)))
        if isinstance(term, Infix):
            return self.assign(term, self.infer_infix(term, env))
        if isinstance(term, Apply):
            return self.assign(term, self.infer_apply(term, env))
        raise TypeError(f"unknown term node {term!r}")

    def infer_infix(self, term: Infix, env: dict[str, ConceptRef]) -> ConceptRef:
        lhs = self.infer(term.lhs, env)
        rhs = self.infer(term.rhs, env)
        op = term.op
        if op == "=":
            self.check_sides(term.lhs, lhs, term.rhs, rhs, term.span)
            return BOOLEAN
        if op in _COMPARISONS:
            for side, ref in ((term.lhs, lhs), (term.rhs, rhs)):
                if not self.is_numeric(ref):
                    self.error(TYPE_MISMATCH, f"operand of {op!r} must be numeric, got {ref}", side.span or term.span)
            return BOOLEAN
        for side, ref in ((term.lhs, lhs), (term.rhs, rhs)):
            if not self.is_numeric(ref):
                return self.error(TYPE_MISMATCH, f"operand of {op!r} must be numeric, got {ref}", side.span or term.span)
        if op == "/":
            both_rational = all(
                ref.name != _UNKNOWN and self.spec.subtype(ref.name, "Rational") for ref in (lhs, rhs)
            )
            return ConceptRef("Rational") if both_rational else ConceptRef("Real")
        if op == "mod":
            for side, ref in ((term.lhs, lhs), (term.rhs, rhs)):
                if ref.name != _UNKNOWN and not self.spec.subtype(ref.name, "Integers"):
                    self.error(TYPE_MISMATCH, f"operand of 'mod' must be an integer, got {ref}", side.span or term.span)
            return self.lub(lhs, rhs) or ConceptRef("Integers")
        if op == "^":
            if _is_negative_literal(term.rhs):
                return self.lub(lhs, ConceptRef("Rational")) or ConceptRef("Rational")
            if rhs.name != _UNKNOWN and self.spec.subtype(rhs.name, "Integers"):
                return lhs
            return self.lub(lhs, ConceptRef("Real")) or ConceptRef("Real")
        joined = self.lub(lhs, rhs)
        if joined is None:
            return self.error(TYPE_MISMATCH, f"operands of {op!r} have incompatible types {lhs} and {rhs}", term.span)
        return joined

    def infer_apply(self, term: Apply, env: dict[str, ConceptRef]) -> ConceptRef:
        if term.op in env:
            signature = self.apply_signature(env[term.op])
            if signature is None:
                args = [self.infer(a, env) for a in term.args]
                return self.error(
                    TYPE_MISMATCH,
                    f"{term.op!r} of type {env[term.op]} is not a function and cannot be applied",
                    term.span,
                )
            expected, returns = signature
            if len(term.args) != len(expected):
                for arg in term.args:
                    self.infer(arg, env)
                self.error(
                    ARITY_MISMATCH,
                    f"{term.op!r} takes {len(expected)} arguments, got {len(term.args)}",
                    term.span,
                )
                return returns
            for arg, want in zip(term.args, expected):
                self.check_arg(term.op, arg, want, env)
            return returns
        operator = self.spec.operators.get(term.op)
        if operator is None:
            for arg in term.args:
                self.infer(arg, env)
            return self.error(
                UNKNOWN_OPERATOR,
                f"operator {term.op!r} is not defined in the ontology",
                term.span,
            )
        if len(term.args) != operator.arity:
            for arg in term.args:
                self.infer(arg, env)
            self.error(
                ARITY_MISMATCH,
                f"operator {term.op!r} takes {operator.arity} arguments, got {len(term.args)}",
                term.span,
            )
            return ConceptRef(operator.return_type)
        for arg, want in zip(term.args, operator.arg_types):
            self.check_arg(term.op, arg, ConceptRef(want), env)
        return ConceptRef(operator.return_type)

    def check_arg(self, op: str, arg: Term, want: ConceptRef, env: dict[str, ConceptRef]) -> None:
        got = self.infer(arg, env)
        if got.name == _UNKNOWN or want.name == _UNKNOWN:
            return
        if not self.is_subtype(got, want):
            self.error(
                TYPE_MISMATCH,
                f"argument of {op!r} expects {want}, got {got}",
                arg.span,
            )
        elif got.name != want.name:
            self.coercions.append((self.index.id_of(arg), str(got), str(want)))

    def check_sides(self, lhs: Term, lhs_type: ConceptRef, rhs: Term, rhs_type: ConceptRef, span) -> None:
        """Equation compatibility: either side may upcast to the other."""
        if isinstance(lhs, Placeholder):
            self.types[self.index.id_of(lhs)] = rhs_type
            return
        if isinstance(rhs, Placeholder):
            self.types[self.index.id_of(rhs)] = lhs_type
            return
        if self.is_subtype(lhs_type, rhs_type):
            if lhs_type.name not in (_UNKNOWN, _TUPLE) and lhs_type.name != rhs_type.name:
                self.coercions.append((self.index.id_of(lhs), str(lhs_type), str(rhs_type)))
            return
        if self.is_subtype(rhs_type, lhs_type):
            if rhs_type.name not in (_UNKNOWN, _TUPLE) and rhs_type.name != lhs_type.name:
                self.coercions.append((self.index.id_of(rhs), str(rhs_type), str(lhs_type)))
            return
        self.error(
            TYPE_MISMATCH,
            f"equation sides have incompatible types {lhs_type} and {rhs_type}",
            span,
        )

    # -- assertions and the whole problem ---------------------------------------

    def check_assertion(self, assertion: Assertion, in_query: bool) -> None:
        if not in_query:
            for side in (assertion.lhs, assertion.rhs):
                for node in _placeholders(side):
                    self.error(
                        PLACEHOLDER_OUTSIDE_QUERY, "'?' may only appear in the query", node.span
                    )
        lhs = self.infer(assertion.lhs, self.env)
        rhs = self.infer(assertion.rhs, self.env)
        self.check_sides(assertion.lhs, lhs, assertion.rhs, rhs, assertion.span)

    def run(self) -> TypedProblem:
        self.load_declarations()
        for fact in self.problem.facts:
            self.check_assertion(fact, in_query=False)
        self.check_assertion(self.problem.query, in_query=True)
        if self.errors:
            raise ElaborationFailure(self.errors)
        term_types = {node_id: str(ref) for node_id, ref in self.types.items()}
        return TypedProblem(self.problem, term_types, self.coercions)


def _placeholders(term: Term) -> list[Placeholder]:
    return [t for t in iter_terms(term) if isinstance(t, Placeholder)]


def _is_bare_literal(term: Term) -> bool:
    return isinstance(term, (IntLit, RatLit))


def _is_negative_literal(term: Term) -> bool:
    if isinstance(term, Neg) and _is_bare_literal(term.inner):
        return True
    return isinstance(term, IntLit) and term.value < 0


def elaborate(problem: Problem, spec: OntologySpec) -> TypedProblem:
    """Type-check a problem; raises ElaborationFailure listing every error."""
    return _Elaborator(problem, spec).run()


def explicit_ascriptions(tp: TypedProblem, spec: OntologySpec) -> TypedProblem:
    """Mark literals in power expressions that need an explicit numeric type.

    Within any equation or comparison whose joined operand type is Real or
    Rational, a power with a negative literal exponent is a documented
    backend hazard: the bare literal defaults to the wrong type.  The pass
    marks the base when it is itself a bare literal, otherwise the exponent
    (when the base is real-valued).  Idempotent by construction: marks are
    recomputed from the problem each call.
    """
    index = NodeIndex(tp.problem)
    marks: dict[int, str] = {}

    def type_name(term: Term) -> str:
        full = tp.term_types.get(index.id_of(term), _UNKNOWN)
        return full.split("(", 1)[0]

    def numeric_join(a: str, b: str) -> str | None:
        for name in (a, b):
            if name not in spec.concepts or not spec.subtype(name, "Real"):
                return None
        walk: str | None = a
        while walk is not None:
            if spec.subtype(b, walk):
                return walk
            walk = spec.concepts[walk].supertype
        return None

    def context_of(lhs: Term, rhs: Term) -> str | None:
        joined = numeric_join(type_name(lhs), type_name(rhs))
        return joined if joined in ("Real", "Rational") else None

    def mark(term: Term, ctx: str | None) -> None:
        if isinstance(term, Infix):
            if term.op == "=" or term.op in _COMPARISONS:
                local = context_of(term.lhs, term.rhs)
                mark(term.lhs, local)
                mark(term.rhs, local)
                return
            if term.op == "^":
                if ctx is not None and _is_negative_literal(term.rhs):
                    base_type = type_name(term.lhs)
                    base_real = base_type in spec.concepts and spec.subtype(base_type, "Real")
                    if _is_bare_literal(term.lhs):
                        marks[index.id_of(term.lhs)] = ctx
                    elif base_real:
                        marks[index.id_of(term.rhs)] = ctx
                mark(term.lhs, ctx)
                mark(term.rhs, None)
                return
            mark(term.lhs, ctx)
            mark(term.rhs, ctx)
            return
        if isinstance(term, Neg):
            mark(term.inner, ctx)
            return
        if isinstance(term, (TupleTerm, SetLit)):
            for item in term.items:
                mark(item, ctx)
            return
        if isinstance(term, SetBuilder):
            mark(term.predicate, None)
            return
        if isinstance(term, Apply):
            spec_op = spec.operators.get(term.op)
            for position, arg in enumerate(term.args):
                arg_ctx = None
                if spec_op is not None and position < len(spec_op.arg_types):
                    if spec_op.arg_types[position] in ("Real", "Rational"):
                        arg_ctx = spec_op.arg_types[position]
                mark(arg, arg_ctx)
            return

    for assertion in (*tp.problem.facts, tp.problem.query):
        ctx = context_of(assertion.lhs, assertion.rhs)
        mark(assertion.lhs, ctx)
        mark(assertion.rhs, ctx)

    return replace(tp, ascriptions=marks)
