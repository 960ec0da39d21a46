"""Template-based problem synthesis over the ontology.

Templates pair a natural-language pattern with a KE skeleton; both carry
the same named holes (``⟨a⟩``).  A hole is declared as one of:

* ``value:<Concept>``  — a number drawn from the configured range
* ``set:<Concept>``    — a small set literal of such numbers
* ``op:<A>|<B>``       — an operator drawn from the listed candidates
* ``prop:<var>:<Concept>`` — a generated property of a bound variable

Instantiation fills holes, then rejection-samples until the resulting
problem parses, elaborates, and (when rule tables are supplied) renders
for every target.  Generation is reproducible: record ``i`` of a run is a
pure function of ``(seed, i)``, so sharding by index cannot change output.
Composition merges several templates into one, renaming variables and
holes apart; variables listed in a template's ``share`` line unify with a
same-named variable of an earlier component instead.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .elaborate import ElaborationFailure, elaborate, explicit_ascriptions
from .ontology import OntologySpec
from .parser import ParseError, parse_problem
from .syntax import Problem, pretty
from .transpile import RuleTable, TranspileError, transpile_all

_HOLE_RE = re.compile(r"⟨([A-Za-z_][A-Za-z0-9_]*)⟩")

DEFAULT_VALUE_RANGES = {
    "Integers": (-20, 20),
    "NaturalNumbers": (0, 20),
    "PositiveIntegers": (1, 20),
    "Real": (-20, 20),
    "Rational": (-10, 10),
}

MAX_FILL_ATTEMPTS = 100


class TemplateError(Exception):
    pass


class ExhaustedRetries(Exception):
    def __init__(self, template_id: str):
        super().__init__(f"no valid filling found for template {template_id!r} "
                         f"within {MAX_FILL_ATTEMPTS} attempts")
        self.template_id = template_id


class IncompatibleConcepts(Exception):
    pass


@dataclass(frozen=True)
class HoleSpec:
    kind: str                       # "value" | "set" | "op" | "prop"
    concept: str | None = None
    candidates: tuple[str, ...] = ()
    var: str | None = None


@dataclass(frozen=True)
class Template:
    id: str
    nl_pattern: str
    ke_skeleton: str
    holes: dict[str, HoleSpec]
    required_operators: frozenset[str]
    difficulty: int
    share: tuple[str, ...] = ()


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    count: int
    template_ids: tuple[str, ...] | None = None
    topic: str | None = None
    max_composition_depth: int = 1
    value_ranges: dict[str, tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_VALUE_RANGES))

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.max_composition_depth < 1:
            raise ValueError("maxCompositionDepth must be at least 1")


@dataclass(frozen=True)
class SynthRecord:
    nl: str
    ke: Problem
    template_trace: tuple[str, ...]
    seed_path: str
    renderings: dict[str, str] = field(default_factory=dict)


# ------------------------------------------------------------ template files


def _parse_hole(value: str) -> HoleSpec:
    kind, _, rest = value.partition(":")
    if kind == "value" or kind == "set":
        if not rest:
            raise TemplateError(f"{kind} hole needs a concept, got {value!r}")
        return HoleSpec(kind, concept=rest.strip())
    if kind == "op":
        candidates = tuple(c.strip() for c in rest.split("|") if c.strip())
        if not candidates:
            raise TemplateError(f"op hole needs candidates, got {value!r}")
        return HoleSpec("op", candidates=candidates)
    if kind == "prop":
        var, _, concept = rest.partition(":")
        if not var or not concept:
            raise TemplateError(f"prop hole needs var and concept, got {value!r}")
        return HoleSpec("prop", concept=concept.strip(), var=var.strip())
    raise TemplateError(f"unknown hole kind in {value!r}")


def parse_templates(text: str, spec: OntologySpec | None = None) -> list[Template]:
    templates: list[Template] = []
    fields: dict[str, str] = {}
    holes: dict[str, HoleSpec] = {}

    def flush() -> None:
        if not fields and not holes:
            return
        for key in ("id", "nl", "ke"):
            if key not in fields:
                raise TemplateError(f"template missing {key!r} line")
        operators = frozenset(
            op.strip() for op in fields.get("operators", "").split(",") if op.strip()
        )
        template = Template(
            id=fields["id"],
            nl_pattern=fields["nl"],
            ke_skeleton=fields["ke"],
            holes=dict(holes),
            required_operators=operators,
            difficulty=int(fields.get("difficulty", "1")),
            share=tuple(s.strip() for s in fields.get("share", "").split(",") if s.strip()),
        )
        validate_template(template, spec)
        templates.append(template)
        fields.clear()
        holes.clear()

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[template]":
            flush()
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not _:
            raise TemplateError(f"expected key = value, got {raw!r}")
        if key.startswith("hole "):
            holes[key[5:].strip()] = _parse_hole(value)
        else:
            fields[key] = value
    flush()
    return templates


def validate_template(template: Template, spec: OntologySpec | None) -> None:
    nl_holes = set(_HOLE_RE.findall(template.nl_pattern))
    ke_holes = set(_HOLE_RE.findall(template.ke_skeleton))
    declared = set(template.holes)
    if nl_holes != declared or ke_holes != declared:
        raise TemplateError(
            f"template {template.id!r}: holes must correspond one-to-one "
            f"(declared {sorted(declared)}, nl {sorted(nl_holes)}, ke {sorted(ke_holes)})"
        )
    if spec is None:
        return
    unknown = template.required_operators - set(spec.operators)
    if unknown:
        raise TemplateError(f"template {template.id!r}: unknown operators {sorted(unknown)}")
    for name, hole in template.holes.items():
        if hole.kind in ("value", "set") and hole.concept not in spec.concepts:
            raise TemplateError(f"template {template.id!r}: hole {name!r} uses unknown concept")
        if hole.kind == "op":
            bad = set(hole.candidates) - set(spec.operators)
            if bad:
                raise TemplateError(f"template {template.id!r}: hole {name!r} candidates {sorted(bad)} unknown")
        if hole.kind == "prop" and hole.concept not in spec.concepts:
            raise TemplateError(f"template {template.id!r}: hole {name!r} uses unknown concept")


def load_templates(directory: str | Path, spec: OntologySpec | None = None) -> list[Template]:
    """Load every `*.tpl` file in a directory, sorted by file name."""
    templates: list[Template] = []
    for path in sorted(Path(directory).glob("*.tpl")):
        templates.extend(parse_templates(path.read_text(encoding="utf-8"), spec))
    ids = [t.id for t in templates]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise TemplateError(f"duplicate template ids {sorted(dupes)}")
    return templates


# ------------------------------------------------------------- hole filling

OP_PHRASES = {
    "Get_GCD": "the greatest common divisor",
    "Get_LCM": "the least common multiple",
    "Get_DigitSum": "the digit sum",
    "Get_DigitProduct": "the digit product",
    "Get_DigitCount": "the number of digits",
    "Floor": "the floor",
    "Ceil": "the ceiling",
    "Get_Number_Round": "the nearest integer",
    "Set_Union": "the union",
    "Set_Intersection": "the intersection",
    "Set_Difference": "the difference",
    "Get_Set_Maximum": "the maximum",
    "Get_Set_Minimum": "the minimum",
    "Get_Function_Minimum": "the minimum value",
    "Get_Function_Maximum": "the maximum value",
    "Is_Monotonic_Increasing": "strictly increasing",
    "Is_Monotonic_Decreasing": "strictly decreasing",
    "Get_Sum": "the sum",
    "Get_Prod": "the product",
}

_PROP_ATOMS = (
    # (operator, argument concept it needs, NL phrase with {v})
    ("Is_Prime", "NaturalNumbers", "{v} is a prime"),
    ("Is_OddNumber", "Integers", "{v} is odd"),
    ("Is_EvenNumber", "Integers", "{v} is even"),
)


def _op_phrase(name: str) -> str:
    if name in OP_PHRASES:
        return OP_PHRASES[name]
    words = name.removeprefix("Get_").removeprefix("Is_").replace("_", " ").lower()
    return f"the {words}"


def _value_range(spec: OntologySpec, concept: str, ranges: dict[str, tuple[int, int]]) -> tuple[int, int]:
    cursor: str | None = concept
    while cursor is not None:
        if cursor in ranges:
            return ranges[cursor]
        cursor = spec.concepts[cursor].supertype
    return (-20, 20)


def _draw_value(rng: random.Random, spec: OntologySpec, concept: str,
                ranges: dict[str, tuple[int, int]]) -> str:
    lo, hi = _value_range(spec, concept, ranges)
    value = rng.randint(lo, hi)
    real_like = spec.subtype(concept, "Real") and not spec.subtype(concept, "Integers")
    if real_like and rng.random() < 0.25:
        return f"{value}.5"
    return str(value)


def _draw_set(rng: random.Random, spec: OntologySpec, concept: str,
              ranges: dict[str, tuple[int, int]]) -> str:
    lo, hi = _value_range(spec, concept, ranges)
    size = rng.randint(2, 4)
    pool = list(range(lo, hi + 1))
    items = sorted(rng.sample(pool, min(size, len(pool))))
    return "{" + ", ".join(str(v) for v in items) + "}"


def _draw_prop(rng: random.Random, spec: OntologySpec, hole: HoleSpec,
               ranges: dict[str, tuple[int, int]]) -> tuple[str, str]:
    """Returns (ke_text, nl_text) for a property of the hole's variable."""
    var, concept = hole.var, hole.concept
    atoms: list[tuple[str, str]] = []
    for op, needs, phrase in _PROP_ATOMS:
        if op in spec.operators and spec.subtype(concept, needs):
            atoms.append((f"{op}({var})", phrase.format(v=var)))
    lo, hi = _value_range(spec, concept, ranges)
    bound = rng.randint(max(lo, 2), hi)
    atoms.append((f"{var} < {bound}", f"{var} < {bound}"))
    atoms.append((f"{var} > {rng.randint(lo, min(hi, bound))}", None))
    # The second comparison's NL mirrors its KE text.
    atoms = [(ke, nl if nl is not None else ke) for ke, nl in atoms]
    count = rng.choice((1, 2))
    picked = rng.sample(atoms, min(count, len(atoms)))
    if len(picked) == 1:
        return picked[0]
    (ke1, nl1), (ke2, nl2) = picked
    return f"And({ke1}, {ke2})", f"{nl1} and {nl2}"


def fill_holes(template: Template, spec: OntologySpec, rng: random.Random,
               ranges: dict[str, tuple[int, int]]) -> tuple[str, str]:
    """Draw one filling; returns (nl_text, ke_text)."""
    ke_fill: dict[str, str] = {}
    nl_fill: dict[str, str] = {}
    for name, hole in template.holes.items():
        if hole.kind == "value":
            text = _draw_value(rng, spec, hole.concept, ranges)
            ke_fill[name] = nl_fill[name] = text
        elif hole.kind == "set":
            text = _draw_set(rng, spec, hole.concept, ranges)
            ke_fill[name] = nl_fill[name] = text
        elif hole.kind == "op":
            op = rng.choice(hole.candidates)
            ke_fill[name] = op
            nl_fill[name] = _op_phrase(op)
        else:
            ke_text, nl_text = _draw_prop(rng, spec, hole, ranges)
            ke_fill[name] = ke_text
            nl_fill[name] = nl_text
    nl = _HOLE_RE.sub(lambda m: nl_fill[m.group(1)], template.nl_pattern)
    ke = _HOLE_RE.sub(lambda m: ke_fill[m.group(1)], template.ke_skeleton)
    return nl, ke


def instantiate(template: Template, spec: OntologySpec, rng: random.Random,
                tables: list[RuleTable] | None = None,
                name: str | None = None,
                value_ranges: dict[str, tuple[int, int]] | None = None,
                seed_path: str = "") -> SynthRecord:
    """Fill a template until the result passes the validity gate."""
    ranges = value_ranges if value_ranges is not None else dict(DEFAULT_VALUE_RANGES)
    last_error: Exception | None = None
    for _ in range(MAX_FILL_ATTEMPTS):
        nl, ke_text = fill_holes(template, spec, rng, ranges)
        try:
            problem = parse_problem(ke_text)
            if name:
                problem = replace(problem, name=name)
            tp = explicit_ascriptions(elaborate(problem, spec), spec)
            renderings = {}
            if tables:
                renderings = {rt.target: rt.text for rt in transpile_all(tp, tables)}
            return SynthRecord(
                nl=nl,
                ke=problem,
                template_trace=(template.id,),
                seed_path=seed_path,
                renderings=renderings,
            )
        except (ParseError, ElaborationFailure, TranspileError) as exc:
            last_error = exc
    raise ExhaustedRetries(template.id) from last_error


# -------------------------------------------------------------- composition

_SKELETON_RE = re.compile(
    r"Problem\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)?\s*:\s*"
    r"Declarations:(?P<decls>.*?)"
    r"Facts:\s*\[(?P<facts>.*?)\]\s*"
    r"Query:(?P<query>.*)$",
    re.DOTALL,
)


def _skeleton_parts(template: Template) -> tuple[str, str, str]:
    m = _SKELETON_RE.match(template.ke_skeleton.strip())
    if m is None:
        raise TemplateError(f"template {template.id!r}: skeleton does not match the problem shape")
    return m.group("decls").strip(), m.group("facts").strip(), m.group("query").strip()


def _declared_vars(decls: str) -> dict[str, str]:
    """Variable name -> concept text, from a declarations segment."""
    out: dict[str, str] = {}
    for part in decls.split(";"):
        part = part.strip()
        if not part:
            continue
        names, _, concept = part.partition(":")
        for n in names.split(","):
            out[n.strip()] = concept.strip()
    return out


def _rename_word(text: str, old: str, new: str) -> str:
    return re.sub(rf"(?<![\w⟨]){re.escape(old)}(?![\w⟩])", new, text)


def _concept_base(concept_text: str) -> str:
    return concept_text.split("(", 1)[0].strip()


def _merge_concepts(spec: OntologySpec, a: str, b: str, var: str) -> str:
    if a == b:
        return a
    base_a, base_b = _concept_base(a), _concept_base(b)
    if base_a in spec.concepts and base_b in spec.concepts:
        if spec.subtype(base_a, base_b):
            return a
        if spec.subtype(base_b, base_a):
            return b
    raise IncompatibleConcepts(
        f"shared variable {var!r} would need both {a!r} and {b!r}"
    )


def compose(templates: list[Template], depth: int,
            spec: OntologySpec | None = None) -> Template:
    """Merge templates: declarations α-renamed apart (shared variables
    unify), facts concatenated, the last query kept."""
    if not templates:
        raise ValueError("compose needs at least one template")
    if len(templates) > depth:
        raise ValueError(f"composition of {len(templates)} templates exceeds depth {depth}")
    if len(templates) == 1:
        return templates[0]

    merged_decls: dict[str, str] = {}
    merged_facts: list[str] = []
    merged_holes: dict[str, HoleSpec] = {}
    nl_parts: list[str] = []
    query = ""
    trace: list[str] = []

    for position, template in enumerate(templates):
        decls, facts, q = _skeleton_parts(template)
        nl = template.nl_pattern
        holes = dict(template.holes)

        # Rename holes apart.
        for hole_name in list(holes):
            if hole_name in merged_holes:
                fresh = f"{hole_name}_{position}"
                while fresh in merged_holes or fresh in holes:
                    fresh += "x"
                decls = decls.replace(f"⟨{hole_name}⟩", f"⟨{fresh}⟩")
                facts = facts.replace(f"⟨{hole_name}⟩", f"⟨{fresh}⟩")
                q = q.replace(f"⟨{hole_name}⟩", f"⟨{fresh}⟩")
                nl = nl.replace(f"⟨{hole_name}⟩", f"⟨{fresh}⟩")
                holes[fresh] = holes.pop(hole_name)

        # Rename variables apart, except shared ones.
        local_vars = _declared_vars(decls)
        for var, concept in list(local_vars.items()):
            if var in merged_decls:
                if var in template.share:
                    if spec is not None:
                        merged_decls[var] = _merge_concepts(spec, merged_decls[var], concept, var)
                    elif merged_decls[var] != concept:
                        raise IncompatibleConcepts(
                            f"shared variable {var!r} would need both {merged_decls[var]!r} and {concept!r}"
                        )
                    local_vars.pop(var)
                    continue
                fresh = f"{var}_{position}"
                while fresh in merged_decls or fresh in local_vars:
                    fresh += "x"
                decls = _rename_word(decls, var, fresh)
                facts = _rename_word(facts, var, fresh)
                q = _rename_word(q, var, fresh)
                nl = _rename_word(nl, var, fresh)
                local_vars[fresh] = local_vars.pop(var)
                for hole_name, hole in holes.items():
                    if hole.var == var:
                        holes[hole_name] = replace(hole, var=fresh)

        merged_decls.update(_declared_vars(decls))
        if facts:
            merged_facts.append(facts)
        query = q
        merged_holes.update(holes)
        nl_parts.append(nl)
        trace.append(template.id)

    decl_text = "; ".join(f"{v}: {c}" for v, c in merged_decls.items())
    skeleton = (
        f"Problem: Declarations: {decl_text} "
        f"Facts: [{'; '.join(merged_facts)}] Query: {query}"
    )
    return Template(
        id="+".join(trace),
        nl_pattern=" ".join(nl_parts),
        ke_skeleton=skeleton,
        holes=merged_holes,
        required_operators=frozenset().union(*(t.required_operators for t in templates)),
        difficulty=3,
        share=(),
    )


# --------------------------------------------------------------- generation


def template_topics(template: Template, spec: OntologySpec) -> frozenset[str]:
    return frozenset(
        spec.operators[op].topic for op in template.required_operators if op in spec.operators
    )


def select_templates(templates: list[Template], config: SynthConfig,
                     spec: OntologySpec) -> list[Template]:
    pool = templates
    if config.template_ids is not None:
        wanted = set(config.template_ids)
        pool = [t for t in pool if t.id in wanted]
    if config.topic is not None:
        pool = [t for t in pool if config.topic in template_topics(t, spec)]
    if not pool:
        raise TemplateError("no templates match the requested filter")
    return pool


def generate(config: SynthConfig, templates: list[Template], spec: OntologySpec,
             tables: list[RuleTable] | None = None) -> list[SynthRecord]:
    """Synthesize `config.count` records, reproducibly from the seed.

    Every record is guaranteed to parse, elaborate, and (when tables are
    given) transpile for each target; failures inside a draw are rejected
    and redrawn rather than emitted.
    """
    pool = select_templates(templates, config, spec)
    records: list[SynthRecord] = []
    for index in range(config.count):
        rng = random.Random(f"{config.seed}:{index}")
        depth = config.max_composition_depth
        k = rng.randint(1, depth) if depth > 1 else 1
        if k > 1 and len(pool) > 1:
            chosen = rng.sample(pool, min(k, len(pool)))
            try:
                template = compose(chosen, depth, spec)
            except IncompatibleConcepts:
                template = chosen[0]
        else:
            template = rng.choice(pool)
        record = instantiate(
            template,
            spec,
            rng,
            tables=tables,
            name=f"synth_{index}",
            value_ranges=config.value_ranges,
            seed_path=f"{config.seed}:{index}",
        )
        records.append(replace(record, template_trace=tuple(template.id.split("+"))))
    return records


def record_to_json(record: SynthRecord, seed: int) -> dict:
    row = {
        "id": record.ke.name,
        "nl": record.nl,
        "ke": pretty(record.ke),
        "lean4": record.renderings.get("lean4", ""),
        "coq": record.renderings.get("coq", ""),
        "isabelle": record.renderings.get("isabelle", ""),
        "template_trace": list(record.template_trace),
        "seed": record.seed_path or str(seed),
    }
    return row


def write_corpus(records: list[SynthRecord], path: str | Path, seed: int) -> None:
    """Write records as JSONL with stable field order."""
    with open(path, "w", encoding="utf-8") as fp:
        for record in records:
            fp.write(json.dumps(record_to_json(record, seed), ensure_ascii=False) + "\n")
