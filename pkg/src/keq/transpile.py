"""Rule-driven rendering of typed problems into Lean 4, Coq, and Isabelle.

Each target ships a rule table: one rendering rule per concept, one
template per operator (positional holes ``{0}``, ``{1}``, ...), a theorem
skeleton with named holes ``{name}/{binders}/{hyps}/{goal}``, and a
preamble.  Tables are checked for totality against the ontology at load
time, so rendering any elaborated problem cannot hit a missing rule.

Output shape per target:

* Lean:     ``theorem n (v : T) (h1 : fact) : goal := by sorry``
* Coq:      ``Theorem n (v : T) (h1 : fact) : goal. Proof. Admitted.``
* Isabelle: ``theorem n : fixes v :: "T" assumes h1: "fact" shows "goal" sorry``

Facts become hypotheses h1..hn in source order; adjacent declarations of
the same concept share one binder group; open queries render their
placeholder as the target's proof stub (``sorry``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .elaborate import NodeIndex, TypedProblem
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
    RatLit,
    SetBuilder,
    SetLit,
    Term,
    TupleTerm,
    Var,
    PREC_ADD,
    PREC_ATOM,
    PREC_CMP,
    PREC_EQ,
    PREC_MUL,
    PREC_POW,
    PREC_UNARY,
)

TARGET_NAMES = ("lean4", "coq", "isabelle")

# Filled operator templates embed like function applications unless the
# rule is marked `loose`, in which case they take parentheses anywhere
# tighter than a hypothesis/goal root.
PREC_APP = 70
PREC_LOOSE = 5

_ORDER_CMP = ("<", "<=", ">", ">=", "!=")


class TranspileError(Exception):
    pass


class MissingRule(TranspileError):
    def __init__(self, target: str, names: list[str]):
        super().__init__(f"{target}: missing rules for {', '.join(sorted(names))}")
        self.names = sorted(names)


class BadHoleIndex(TranspileError):
    pass


class UnrenderablePlaceholder(TranspileError):
    pass


@dataclass(frozen=True)
class OperatorRule:
    template: str
    loose: bool = False


@dataclass(frozen=True)
class RuleTable:
    target: str
    concept_rules: dict[str, str]
    operator_rules: dict[str, OperatorRule]
    skeleton: str
    preamble: str


@dataclass(frozen=True)
class RenderedTheorem:
    target: str
    name: str
    text: str
    used_sorry: bool = True
    preamble: str = ""


@dataclass(frozen=True)
class _TargetStyle:
    infix: dict[str, str]
    ascription: str                  # format with {0}=term, {1}=type
    set_open: str
    set_close: str
    set_sep: str
    set_builder: str                 # format with {binder}, {type}, {pred}
    placeholder: str
    order_cmp_operand_prec: int      # min precedence an order-comparison operand
    pin_literal_equations: bool      # ascribe lhs of all-literal equations


_STYLES = {
    "lean4": _TargetStyle(
        infix={"+": "+", "-": "-", "*": "*", "/": "/", "^": "^", "mod": "%",
               "<": "<", "<=": "≤", ">": ">", ">=": "≥", "!=": "≠", "=": "="},
        ascription="({0} : {1})",
        set_open="{", set_close="}", set_sep=", ",
        set_builder="{{{binder} : {type} | {pred}}}",
        placeholder="sorry",
        order_cmp_operand_prec=PREC_CMP + 1,
        pin_literal_equations=True,
    ),
    "coq": _TargetStyle(
        infix={"+": "+", "-": "-", "*": "*", "/": "/", "^": "^", "mod": "mod",
               "<": "<", "<=": "<=", ">": ">", ">=": ">=", "!=": "<>", "=": "="},
        ascription="({0} : {1})",
        set_open="[", set_close="]", set_sep="; ",
        set_builder="{{{binder} : {type} | {pred}}}",
        placeholder="sorry",
        # Matches the reference corpus: additive operands of order
        # comparisons are parenthesized, multiplicative ones are not.
        order_cmp_operand_prec=PREC_MUL,
        pin_literal_equations=False,
    ),
    "isabelle": _TargetStyle(
        infix={"+": "+", "-": "-", "*": "*", "/": "/", "^": "^", "mod": "mod",
               "<": "<", "<=": "≤", ">": ">", ">=": "≥", "!=": "≠", "=": "="},
        ascription="({0} :: {1})",
        set_open="{", set_close="}", set_sep=", ",
        set_builder="{{{binder} :: {type}. {pred}}}",
        placeholder="sorry",
        order_cmp_operand_prec=PREC_CMP + 1,
        pin_literal_equations=False,
    ),
}

_HOLE_RE = re.compile(r"\{(\d+)(?:\.(binder|type|pred))?(?::(raw))?\}")
_SKELETON_RE = re.compile(r"\{(name|binders|hyps|goal)\}")


# --------------------------------------------------------------- rule files


def load_rules(path: str | Path, spec: OntologySpec) -> RuleTable:
    """Load a rule table and verify totality against the ontology."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_rules(text, spec)


def parse_rules(text: str, spec: OntologySpec) -> RuleTable:
    target = ""
    sections: dict[str, list[str]] = {"preamble": [], "skeleton": []}
    concept_rules: dict[str, str] = {}
    operator_rules: dict[str, OperatorRule] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if section not in ("preamble", "skeleton") and (not stripped or stripped.startswith("#")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1]
            if section not in ("preamble", "skeleton", "concepts", "operators"):
                raise TranspileError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            if stripped.startswith("target"):
                target = stripped.split("=", 1)[1].strip()
                continue
            raise TranspileError(f"line {lineno}: content before any section")
        if section in ("preamble", "skeleton"):
            sections[section].append(raw)
            continue
        m = re.match(r'^(\w+)\s*=\s*"(.*)"\s*(loose)?\s*$', stripped)
        if m is None:
            raise TranspileError(f"line {lineno}: expected `Name = \"template\"`")
        name, template, loose = m.group(1), m.group(2).replace("\\n", "\n"), bool(m.group(3))
        if section == "concepts":
            concept_rules[name] = template
        else:
            operator_rules[name] = OperatorRule(template, loose)

    if target not in TARGET_NAMES:
        raise TranspileError(f"rule table needs `target = lean4|coq|isabelle`, got {target!r}")
    skeleton = "\n".join(sections["skeleton"]).strip("\n")
    preamble = "\n".join(sections["preamble"]).strip("\n")
    for hole in ("{name}", "{goal}"):
        if hole not in skeleton:
            raise TranspileError(f"{target}: skeleton must contain {hole}")

    table = RuleTable(target, concept_rules, operator_rules, skeleton, preamble)
    _check_totality(table, spec)
    return table


def _check_totality(table: RuleTable, spec: OntologySpec) -> None:
    missing = [name for name in spec.concepts if name not in table.concept_rules]
    missing += [name for name in spec.operators if name not in table.operator_rules]
    if missing:
        raise MissingRule(table.target, missing)
    for name, concept in spec.concepts.items():
        _check_holes(table.target, f"concept {name}", table.concept_rules[name], concept.type_params)
    for name, op in spec.operators.items():
        _check_holes(table.target, f"operator {name}", table.operator_rules[name].template, op.arity)


def _check_holes(target: str, what: str, template: str, arity: int) -> None:
    seen = {int(m.group(1)) for m in _HOLE_RE.finditer(template)}
    if seen != set(range(arity)):
        raise BadHoleIndex(
            f"{target}: {what} template must use holes 0..{arity - 1} exactly, found {sorted(seen)}"
        )


# ----------------------------------------------------------------- renderer


class _Renderer:
    def __init__(self, tp: TypedProblem, table: RuleTable):
        self.tp = tp
        self.table = table
        self.style = _STYLES[table.target]
        self.index = NodeIndex(tp.problem)
        self.declared = {v: d.concept for d in tp.problem.declarations for v in d.vars}

    # -- types ---------------------------------------------------------------

    def concept_text(self, ref: ConceptRef) -> str:
        rule = self.table.concept_rules.get(ref.name)
        if rule is None:
            raise MissingRule(self.table.target, [ref.name])
        params = [self.concept_text(p) for p in ref.params]
        return _HOLE_RE.sub(lambda m: params[int(m.group(1))], rule)

    def type_text_of_name(self, concept_name: str) -> str:
        rule = self.table.concept_rules.get(concept_name)
        if rule is None:
            raise MissingRule(self.table.target, [concept_name])
        return rule

    # -- terms -----------------------------------------------------------------

    def term(self, node: Term, min_prec: int = 0) -> str:
        text, prec = self._term(node)
        if prec < min_prec:
            return f"({text})"
        return text

    def _ascription_of(self, node: Term) -> str | None:
        node_id = self.index.id_of(node)
        return self.tp.ascriptions.get(node_id)

    def _term(self, node: Term) -> tuple[str, int]:
        concept = self._ascription_of(node)
        if concept is not None:
            inner, _ = self._term_core(node)
            text = self.style.ascription.format(inner, self.type_text_of_name(concept))
            return text, PREC_ATOM
        return self._term_core(node)

    def _term_core(self, node: Term) -> tuple[str, int]:
        style = self.style
        if isinstance(node, IntLit):
            return str(node.value), PREC_ATOM if node.value >= 0 else PREC_UNARY
        if isinstance(node, RatLit):
            return f"{node.num} / {node.den}", PREC_MUL
        if isinstance(node, Var):
            return node.name, PREC_ATOM
        if isinstance(node, BoolLit):
            return ("True" if node.value else "False"), PREC_ATOM
        if isinstance(node, Placeholder):
            return style.placeholder, PREC_ATOM
        if isinstance(node, Neg):
            return f"-{self.term(node.inner, PREC_UNARY)}", PREC_UNARY
        if isinstance(node, TupleTerm):
            return "(" + ", ".join(self.term(i) for i in node.items) + ")", PREC_ATOM
        if isinstance(node, SetLit):
            items = style.set_sep.join(self.term(i) for i in node.items)
            return f"{style.set_open}{items}{style.set_close}", PREC_ATOM
        if isinstance(node, SetBuilder):
            text = style.set_builder.format(
                binder=node.binder,
                type=self.concept_text(node.binder_type),
                pred=self.term(node.predicate),
            )
            return text, PREC_ATOM
        if isinstance(node, Infix):
            return self._infix(node)
        if isinstance(node, Apply):
            return self._apply(node)
        raise TypeError(f"unknown term node {node!r}")

    def _infix(self, node: Infix) -> tuple[str, int]:
        style = self.style
        spelling = style.infix[node.op]
        if node.op == "^":
            lhs = self.term(node.lhs, PREC_ATOM)
            rhs = self.term(node.rhs, PREC_UNARY + 1)
            return f"{lhs} {spelling} {rhs}", PREC_POW
        if node.op == "=":
            lhs = self.term(node.lhs, PREC_EQ + 1)
            rhs = self.term(node.rhs, PREC_EQ + 1)
            return f"{lhs} {spelling} {rhs}", PREC_EQ
        if node.op in _ORDER_CMP:
            lhs = self.term(node.lhs, style.order_cmp_operand_prec)
            rhs = self.term(node.rhs, style.order_cmp_operand_prec)
            return f"{lhs} {spelling} {rhs}", PREC_CMP
        prec = PREC_MUL if node.op in ("*", "/", "mod") else PREC_ADD
        lhs = self.term(node.lhs, prec)
        rhs = self.term(node.rhs, prec + 1)
        return f"{lhs} {spelling} {rhs}", prec

    def _app_arg(self, node: Term) -> str:
        if self._ascription_of(node) is not None:
            return self.term(node)  # ascriptions already come parenthesized
        atomic = (
            isinstance(node, (Var, BoolLit, Placeholder, TupleTerm, SetLit, SetBuilder))
            or (isinstance(node, IntLit) and node.value >= 0)
        )
        if atomic:
            return self.term(node)
        return f"({self.term(node)})"

    def _apply(self, node: Apply) -> tuple[str, int]:
        if node.op in self.declared:
            parts = [node.op] + [self._app_arg(a) for a in node.args]
            return " ".join(parts), PREC_APP
        rule = self.table.operator_rules.get(node.op)
        if rule is None:
            raise MissingRule(self.table.target, [node.op])

        def fill(m: re.Match) -> str:
            arg = node.args[int(m.group(1))]
            field = m.group(2)
            if field is None:
                if m.group(3) == "raw":
                    return self.term(arg)
                return self._app_arg(arg)
            if isinstance(arg, Placeholder):
                raise UnrenderablePlaceholder(
                    f"{self.table.target}: '?' cannot fill the {field} position of {node.op!r}"
                )
            if not isinstance(arg, SetBuilder):
                raise TranspileError(
                    f"{self.table.target}: {node.op!r} needs a set-builder argument to render"
                )
            if field == "binder":
                return arg.binder
            if field == "type":
                return self.concept_text(arg.binder_type)
            return self.term(arg.predicate)

        text = _HOLE_RE.sub(fill, rule.template)
        return text, (PREC_LOOSE if rule.loose else PREC_APP)

    # -- assertions --------------------------------------------------------------

    def assertion(self, node: Assertion) -> str:
        if node.rhs == BoolLit(True):
            return self.term(node.lhs)
        if self.style.pin_literal_equations and _is_literal(node.lhs) and _is_literal(node.rhs):
            node_id = self.index.id_of(node.lhs)
            lhs_type = self.tp.term_types.get(node_id)
            if lhs_type in self.table.concept_rules and self._ascription_of(node.lhs) is None:
                lhs = self.style.ascription.format(
                    self.term(node.lhs), self.type_text_of_name(lhs_type)
                )
                return f"{lhs} {self.style.infix['=']} {self.term(node.rhs, PREC_EQ + 1)}"
        lhs = self.term(node.lhs, PREC_EQ + 1)
        rhs = self.term(node.rhs, PREC_EQ + 1)
        return f"{lhs} {self.style.infix['=']} {rhs}"

    # -- theorem assembly -----------------------------------------------------------

    def binder_groups(self) -> list[tuple[list[str], str]]:
        groups: list[tuple[list[str], ConceptRef]] = []
        for decl in self.tp.problem.declarations:
            if groups and groups[-1][1] == decl.concept:
                groups[-1][0].extend(decl.vars)
            else:
                groups.append(([*decl.vars], decl.concept))
        return [(names, self.concept_text(concept)) for names, concept in groups]

    def render(self) -> RenderedTheorem:
        name = self.tp.problem.name or "thm"
        groups = self.binder_groups()
        hyps = [self.assertion(fact) for fact in self.tp.problem.facts]
        goal = self.assertion(self.tp.problem.query)

        if self.table.target == "isabelle":
            binders_text = self._isabelle_fixes(groups)
            hyps_text = self._isabelle_assumes(hyps)
            goal_text = goal
        else:
            binders_text = "".join(f" ({' '.join(names)} : {ty})" for names, ty in groups)
            hyps_text = "".join(f"\n    (h{i} : {h})" for i, h in enumerate(hyps, start=1))
            goal_text = goal

        fills = {"name": name, "binders": binders_text, "hyps": hyps_text, "goal": goal_text}
        text = _SKELETON_RE.sub(lambda m: fills[m.group(1)], self.table.skeleton)
        return RenderedTheorem(
            target=self.table.target,
            name=name,
            text=text,
            used_sorry=True,
            preamble=self.table.preamble,
        )

    def _isabelle_fixes(self, groups: list[tuple[list[str], str]]) -> str:
        if not groups:
            return ""
        rendered = []
        for names, ty in groups:
            quoted = f'"{ty}"' if " " in ty else ty
            rendered.append(f"{' '.join(names)} :: {quoted}")
        return "\n    fixes " + "\n        and ".join(rendered)

    def _isabelle_assumes(self, hyps: list[str]) -> str:
        if not hyps:
            return ""
        lines = [f'assumes h1: "{hyps[0]}"']
        lines += [f'and h{i}: "{h}"' for i, h in enumerate(hyps[1:], start=2)]
        return "\n    " + "\n        ".join(lines)


def _is_literal(node: Term) -> bool:
    if isinstance(node, (IntLit, RatLit)):
        return True
    return isinstance(node, Neg) and isinstance(node.inner, (IntLit, RatLit))


def transpile(tp: TypedProblem, rules: RuleTable) -> RenderedTheorem:
    """Render one typed problem as a theorem statement for one target."""
    return _Renderer(tp, rules).render()


def transpile_all(tp: TypedProblem, tables: list[RuleTable]) -> list[RenderedTheorem]:
    """Render the same problem for several targets; outputs share the name."""
    return [transpile(tp, table) for table in tables]


# ------------------------------------------------------- output normalization


def load_spelling_map(path: str | Path) -> dict[str, str]:
    """Operator-spelling unification table: lines of `printed -> emitted`."""
    mapping: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        src, dst = (part.strip() for part in line.split("->", 1))
        mapping[src] = dst
    return mapping


def normalize_tokens(text: str, spelling: dict[str, str] | None = None) -> str:
    """Whitespace-collapse plus operator-spelling unification.

    Splits symbol characters into individual tokens so that layout
    decisions (``x^3`` vs ``x ^ 3``, line breaks, indentation) do not
    affect comparison, then rejoins with single spaces.
    """
    for src, dst in (spelling or {}).items():
        text = text.replace(src, dst)
    text = re.sub(r"([^\w\s])", r" \1 ", text)
    return " ".join(text.split())
