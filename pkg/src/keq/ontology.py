"""Concept/operator library: load, index, and query the math ontology.

The ontology is a line-oriented text file with ``[concept]`` and
``[operator]`` sections.  Concepts form a tree via ``super`` edges
(acyclic); operators carry typed signatures over concept names.  Loading
is order-independent: a supertype may be declared after its first use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

TOPICS = ("Numbers", "Polynomial", "Function", "Set", "Sequence", "Special")


class LoadError(Exception):
    """Raised for malformed or inconsistent ontology files."""

    def __init__(self, kind: str, message: str, line: int | None = None):
        loc = f" (line {line})" if line else ""
        super().__init__(f"{kind}: {message}{loc}")
        self.kind = kind
        self.line = line


@dataclass(frozen=True)
class ConceptDef:
    name: str
    topic: str
    supertype: str | None = None
    type_params: int = 0
    # Signature for function-like concepts without explicit parameters,
    # e.g. Sequence applies as NaturalNumbers -> Real.
    apply_args: tuple[str, ...] = ()
    apply_returns: str | None = None


@dataclass(frozen=True)
class OperatorDef:
    name: str
    topic: str
    arg_types: tuple[str, ...]
    return_type: str
    infix: str | None = None

    @property
    def arity(self) -> int:
        return len(self.arg_types)


@dataclass(frozen=True)
class OntologySpec:
    concepts: dict[str, ConceptDef]
    operators: dict[str, OperatorDef]
    version: str = ""
    _closure: dict[str, frozenset[str]] = field(default_factory=dict, compare=False, repr=False)

    def subtype(self, sub: str, sup: str) -> bool:
        """Reflexive-transitive reachability along supertype edges."""
        if sub not in self.concepts:
            raise KeyError(f"unknown concept {sub!r}")
        if sup not in self.concepts:
            raise KeyError(f"unknown concept {sup!r}")
        return sup in self._ancestors(sub)

    def _ancestors(self, name: str) -> frozenset[str]:
        cached = self._closure.get(name)
        if cached is None:
            chain = []
            cursor: str | None = name
            while cursor is not None:
                chain.append(cursor)
                cursor = self.concepts[cursor].supertype
            cached = frozenset(chain)
            self._closure[name] = cached
        return cached

    def topics(self) -> frozenset[str]:
        return frozenset(c.topic for c in self.concepts.values())


def _parse_sections(text: str):
    """Yield (kind, {key: (value, line)}) for each [concept]/[operator] block."""
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise LoadError("Malformed", f"unterminated section header {raw.strip()!r}", lineno)
            current = (line[1:-1].strip(), {}, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise LoadError("Malformed", f"expected key = value, got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key == "version":
                sections.append(("version", {"version": (value, lineno)}, lineno))
                continue
            raise LoadError("Malformed", f"{key!r} outside any section", lineno)
        if key in current[1]:
            raise LoadError("Malformed", f"duplicate key {key!r} in section", lineno)
        current[1][key] = (value, lineno)
    return sections


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in value.split(",") if part.strip())


def load_ontology(path: str | Path) -> OntologySpec:
    """Load and validate an ontology file.

    Raises LoadError with kind DanglingReference, CycleInSupertypes,
    DuplicateName, or Malformed.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_ontology(text)


def parse_ontology(text: str) -> OntologySpec:
    concepts: dict[str, ConceptDef] = {}
    operators: dict[str, OperatorDef] = {}
    version = ""
    for kind, fields, header_line in _parse_sections(text):
        if kind == "version":
            version = fields["version"][0]
            continue
        if kind not in ("concept", "operator"):
            raise LoadError("Malformed", f"unknown section [{kind}]", header_line)
        if "name" not in fields:
            raise LoadError("Malformed", f"[{kind}] section missing name", header_line)
        name, name_line = fields["name"]
        if name in concepts or name in operators:
            raise LoadError("DuplicateName", f"{name!r} defined twice", name_line)
        topic, topic_line = fields.get("topic", ("", header_line))
        if topic not in TOPICS:
            raise LoadError(
                "Malformed", f"topic {topic!r} for {name!r} not one of {', '.join(TOPICS)}", topic_line
            )
        if kind == "concept":
            applies = fields.get("applies")
            apply_args: tuple[str, ...] = ()
            apply_returns = None
            if applies is not None:
                sig = applies[0]
                if "->" not in sig:
                    raise LoadError("Malformed", f"applies must look like 'A -> B'", applies[1])
                args_text, ret = sig.rsplit("->", 1)
                apply_args = _split_list(args_text)
                apply_returns = ret.strip()
            concepts[name] = ConceptDef(
                name=name,
                topic=topic,
                supertype=fields.get("super", (None, 0))[0],
                type_params=int(fields.get("params", ("0", 0))[0]),
                apply_args=apply_args,
                apply_returns=apply_returns,
            )
        else:
            if "args" not in fields or "returns" not in fields:
                raise LoadError("Malformed", f"operator {name!r} needs args and returns", header_line)
            arg_types = _split_list(fields["args"][0])
            if not arg_types:
                raise LoadError("Malformed", f"operator {name!r} must take at least one argument",
                                fields["args"][1])
            operators[name] = OperatorDef(
                name=name,
                topic=topic,
                arg_types=arg_types,
                return_type=fields["returns"][0],
                infix=fields.get("infix", (None, 0))[0],
            )

    _check_references(concepts, operators)
    _check_acyclic(concepts)
    return OntologySpec(concepts=concepts, operators=operators, version=version)


def _check_references(concepts: dict[str, ConceptDef], operators: dict[str, OperatorDef]) -> None:
    def require(name: str, context: str) -> None:
        if name not in concepts:
            raise LoadError("DanglingReference", f"{context} references unknown concept {name!r}")

    for concept in concepts.values():
        if concept.supertype is not None:
            require(concept.supertype, f"concept {concept.name!r}")
        for arg in concept.apply_args:
            require(arg, f"concept {concept.name!r}")
        if concept.apply_returns is not None:
            require(concept.apply_returns, f"concept {concept.name!r}")
    for op in operators.values():
        for arg in op.arg_types:
            require(arg, f"operator {op.name!r}")
        require(op.return_type, f"operator {op.name!r}")


def _check_acyclic(concepts: dict[str, ConceptDef]) -> None:
    for start in concepts:
        slow = concepts[start].supertype
        seen = {start}
        while slow is not None:
            if slow in seen:
                raise LoadError("CycleInSupertypes", f"supertype cycle through {slow!r}")
            seen.add(slow)
            slow = concepts[slow].supertype
