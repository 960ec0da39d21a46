"""Recursive-descent parser for the knowledge-equation surface syntax.

Grammar (normative for this repo)::

    problem      := "Problem" ident? ":" declBlock factBlock queryBlock
    declBlock    := "Declarations" ":" [ decl { ";" decl } ]
    decl         := ident { "," ident } ":" conceptRef
    conceptRef   := ident [ "(" conceptRef { "," conceptRef } ")" ]
    factBlock    := "Facts" ":" "[" [ assertion { ";" assertion } ] "]"
    queryBlock   := "Query" ":" assertion
    assertion    := term [ "=" term ]            (bare term => = True)
    term         := cmp [ "=" cmp ]              (inside atoms only)
    cmp          := addsub [ ("<"|"<="|">"|">="|"!=") addsub ]
    addsub       := muldiv { ("+"|"-") muldiv }
    muldiv       := unary { ("*"|"/"|"mod") unary }
    unary        := "-" unary | power
    power        := atom [ "^" unary ]           (right-associative)
    atom         := number | ident [ "(" args ")" ] | "(" term { "," term } ")"
                    | "{" term { "," term } "}" | "{" ident ":" conceptRef "|" term "}"
                    | "?" | "True" | "False"

Comparisons and `=` are non-associative; chains like ``a < b < c`` are
rejected.  Keywords are case-sensitive.  Parsing is pure: identical input
yields an identical tree, and malformed input always raises ParseError.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    Apply,
    Assertion,
    BoolLit,
    ConceptRef,
    Declaration,
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
    count_placeholders,
    make_rat,
)

KEYWORDS = frozenset({"Problem", "Declarations", "Facts", "Query", "True", "False", "mod"})

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<decimal>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|[+\-*/^<>=])
  | (?P<punct>[():;,{}\[\]|?])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "decimal" | "ident" | "kw" | the literal symbol
    text: str
    span: SourceSpan


class ParseError(Exception):
    """Syntax error with the failure position and what was expected there."""

    def __init__(self, message: str, span: SourceSpan, expected=(), found: str = ""):
        super().__init__(f"{span.line}:{span.col}: {message}")
        self.message = message
        self.span = span
        self.expected = tuple(expected)
        self.found = found


class PlaceholderMisuse(ParseError):
    """More than one `?`, or a `?` outside the query."""


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            span = SourceSpan(pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {source[pos]!r}", span, found=source[pos])
        start, end = m.span()
        col = start - line_start + 1
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = start + text.rindex("\n") + 1
        else:
            span = SourceSpan(start, end, line, col)
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            elif kind in ("op", "punct"):
                kind = text
            tokens.append(Token(kind, text, span))
        pos = end
    tokens.append(Token("eof", "", SourceSpan(pos, pos, line, pos - line_start + 1)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        if self.at(kind, text):
            return self.advance()
        tok = self.peek()
        wanted = what or (text or kind)
        raise ParseError(
            f"expected {wanted}, found {tok.text!r}" if tok.text else f"expected {wanted}, found end of input",
            tok.span,
            expected=(wanted,),
            found=tok.text,
        )

    def fail(self, message: str, expected=()) -> ParseError:
        tok = self.peek()
        found = tok.text or "end of input"
        return ParseError(f"{message}, found {found!r}", tok.span, expected=expected, found=tok.text)

    # -- grammar -------------------------------------------------------------

    def parse_problem(self) -> Problem:
        start = self.peek().span
        self.expect("kw", "Problem")
        name = ""
        if self.at("ident"):
            name = self.advance().text
        self.expect(":")
        decls = self.parse_decl_block()
        facts = self.parse_fact_block()
        query = self.parse_query_block()
        self.expect("eof", what="end of input")
        problem = Problem(name, decls, facts, query, span=start)
        self._check_declarations(problem)
        self._check_placeholders(problem)
        return problem

    def parse_decl_block(self) -> tuple[Declaration, ...]:
        self.expect("kw", "Declarations")
        self.expect(":")
        decls: list[Declaration] = []
        if self.at("ident"):
            decls.append(self.parse_decl())
            while self.at(";"):
                self.advance()
                decls.append(self.parse_decl())
        return tuple(decls)

    def parse_decl(self) -> Declaration:
        start = self.peek().span
        names = [self.expect("ident", what="variable name").text]
        while self.at(","):
            self.advance()
            names.append(self.expect("ident", what="variable name").text)
        self.expect(":")
        concept = self.parse_concept_ref()
        return Declaration(tuple(names), concept, span=start)

    def parse_concept_ref(self) -> ConceptRef:
        tok = self.expect("ident", what="concept name")
        params: list[ConceptRef] = []
        if self.at("("):
            self.advance()
            params.append(self.parse_concept_ref())
            while self.at(","):
                self.advance()
                params.append(self.parse_concept_ref())
            self.expect(")")
        return ConceptRef(tok.text, tuple(params), span=tok.span)

    def parse_fact_block(self) -> tuple[Assertion, ...]:
        self.expect("kw", "Facts")
        self.expect(":")
        self.expect("[")
        facts: list[Assertion] = []
        if not self.at("]"):
            facts.append(self.parse_assertion())
            while self.at(";"):
                self.advance()
                facts.append(self.parse_assertion())
        self.expect("]")
        return tuple(facts)

    def parse_query_block(self) -> Assertion:
        self.expect("kw", "Query")
        self.expect(":")
        return self.parse_assertion()

    def parse_assertion(self) -> Assertion:
        lhs = self.parse_cmp()
        if self.at("="):
            self.advance()
            rhs = self.parse_cmp()
            if self.at("="):
                raise self.fail("'=' does not chain; parenthesize one equation")
            assertion = Assertion(lhs, rhs, span=lhs.span)
        else:
            assertion = Assertion.of_proposition(lhs)
        if count_placeholders(assertion.lhs) + count_placeholders(assertion.rhs) > 1:
            raise PlaceholderMisuse(
                "at most one '?' is allowed per assertion", assertion.lhs.span or self.peek().span
            )
        return assertion

    def parse_term(self) -> Term:
        # The term entry used inside atoms; admits one non-associative `=`.
        lhs = self.parse_cmp()
        if self.at("="):
            op = self.advance()
            rhs = self.parse_cmp()
            if self.at("="):
                raise self.fail("'=' does not chain; parenthesize one equation")
            return Infix("=", lhs, rhs, span=op.span)
        return lhs

    _CMP_OPS = ("<", "<=", ">", ">=", "!=")

    def parse_cmp(self) -> Term:
        lhs = self.parse_addsub()
        if self.peek().kind in self._CMP_OPS:
            op = self.advance()
            rhs = self.parse_addsub()
            if self.peek().kind in self._CMP_OPS:
                raise self.fail("comparison operators do not chain")
            return Infix(op.text, lhs, rhs, span=op.span)
        return lhs

    def parse_addsub(self) -> Term:
        term = self.parse_muldiv()
        while self.peek().kind in ("+", "-"):
            op = self.advance()
            term = Infix(op.text, term, self.parse_muldiv(), span=op.span)
        return term

    def parse_muldiv(self) -> Term:
        term = self.parse_unary()
        while self.peek().kind in ("*", "/") or self.at("kw", "mod"):
            op = self.advance()
            term = Infix(op.text, term, self.parse_unary(), span=op.span)
        return term

    def parse_unary(self) -> Term:
        if self.at("-"):
            tok = self.advance()
            return Neg(self.parse_unary(), span=tok.span)
        return self.parse_power()

    def parse_power(self) -> Term:
        base = self.parse_atom()
        if self.at("^"):
            tok = self.advance()
            return Infix("^", base, self.parse_unary(), span=tok.span)
        return base

    def parse_atom(self) -> Term:
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return IntLit(int(tok.text), span=tok.span)
        if tok.kind == "decimal":
            self.advance()
            whole, frac = tok.text.split(".")
            value = make_rat(int(whole + frac), 10 ** len(frac))
            return _respan(value, tok.span)
        if tok.kind == "kw" and tok.text in ("True", "False"):
            self.advance()
            return BoolLit(tok.text == "True", span=tok.span)
        if tok.kind == "?":
            self.advance()
            return Placeholder(span=tok.span)
        if tok.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args = [self.parse_term()]
                while self.at(","):
                    self.advance()
                    args.append(self.parse_term())
                self.expect(")")
                return Apply(tok.text, tuple(args), span=tok.span)
            return Var(tok.text, span=tok.span)
        if tok.kind == "(":
            self.advance()
            items = [self.parse_term()]
            while self.at(","):
                self.advance()
                items.append(self.parse_term())
            self.expect(")")
            if len(items) == 1:
                return items[0]
            return TupleTerm(tuple(items), span=tok.span)
        if tok.kind == "{":
            self.advance()
            if self.at("ident") and self.peek(1).kind == ":":
                binder = self.advance().text
                self.advance()  # ":"
                concept = self.parse_concept_ref()
                self.expect("|")
                predicate = self.parse_term()
                self.expect("}")
                return SetBuilder(binder, concept, predicate, span=tok.span)
            items = [self.parse_term()]
            while self.at(","):
                self.advance()
                items.append(self.parse_term())
            self.expect("}")
            return SetLit(tuple(items), span=tok.span)
        raise self.fail("expected a term", expected=("term",))

    # -- whole-problem checks the parser owns --------------------------------

    def _check_declarations(self, problem: Problem) -> None:
        seen: dict[str, SourceSpan] = {}
        for decl in problem.declarations:
            for name in decl.vars:
                if name in seen:
                    raise ParseError(
                        f"variable {name!r} declared more than once",
                        decl.span or self.peek().span,
                        found=name,
                    )
                seen[name] = decl.span

    def _check_placeholders(self, problem: Problem) -> None:
        for fact in problem.facts:
            for side in (fact.lhs, fact.rhs):
                if count_placeholders(side):
                    raise PlaceholderMisuse(
                        "'?' may only appear in the query", side.span or self.peek().span
                    )
        total = count_placeholders(problem.query.lhs) + count_placeholders(problem.query.rhs)
        if total > 1:
            raise PlaceholderMisuse(
                "at most one '?' is allowed", problem.query.lhs.span or self.peek().span
            )


def _respan(term: Term, span: SourceSpan) -> Term:
    object.__setattr__(term, "span", span)
    return term


def parse_problem(source: str) -> Problem:
    """Parse a whole problem; raises ParseError on malformed input."""
    return _Parser(source).parse_problem()


def parse_assertion(source: str) -> Assertion:
    """Parse a single assertion (the facts/query production)."""
    parser = _Parser(source)
    assertion = parser.parse_assertion()
    parser.expect("eof", what="end of input")
    return assertion
