"""Command-line interface: parse, check, transpile, synth, validate, score.

Exit codes: 0 on success, 1 when a domain failure was found (parse or
elaboration errors, failed validation), 2 for usage or configuration
errors.  With ``--format json`` every subcommand, including error cases,
prints a single JSON document.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data_path, default_ontology
from .elaborate import ElaborationFailure, elaborate, explicit_ascriptions
from .judge import HttpJudgeClient, MockJudgeClient, judge_semantics
from .ontology import LoadError, load_ontology
from .parser import ParseError, parse_problem
from .synth import SynthConfig, generate, load_templates, write_corpus
from .syntax import pretty, problem_to_dict
from .transpile import TranspileError, load_rules, transpile_all
from .validate import (
    PipelineConfig,
    ToolConfig,
    load_tool_config,
    read_corpus,
    run_pipeline,
    summary_table,
)

_EXTENSIONS = {"lean4": "lean", "coq": "v", "isabelle": "thy"}

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, ensure_ascii=False, indent=2))
    elif args.format == "jsonl":
        print(json.dumps(payload, ensure_ascii=False))
    else:
        print(text)


def _read_source(path_text: str) -> str:
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path.read_text(encoding="utf-8")


def _load_context(args):
    ontology_path = args.ontology or data_path("ontology", "core.ont")
    if not Path(ontology_path).is_file():
        raise UsageError(f"ontology file not found: {ontology_path}")
    spec = load_ontology(ontology_path)
    rules_dir = Path(args.rules_dir) if args.rules_dir else data_path("rules")
    if not rules_dir.is_dir():
        raise UsageError(f"rules directory not found: {rules_dir}")
    return spec, rules_dir


def _load_tables(spec, rules_dir: Path, targets):
    tables = []
    for target in targets:
        path = rules_dir / f"{target}.rules"
        if not path.is_file():
            raise UsageError(f"rule table not found: {path}")
        tables.append(load_rules(path, spec))
    return tables


def cmd_parse(args) -> int:
    source = _read_source(args.file)
    try:
        problem = parse_problem(source)
    except ParseError as exc:
        _emit(args, {"ok": False, "error": str(exc),
                     "line": exc.span.line, "col": exc.span.col}, f"parse error: {exc}")
        return EXIT_DOMAIN
    ast = problem_to_dict(problem)
    _emit(args, {"ok": True, "ast": ast}, json.dumps(ast, ensure_ascii=False, indent=2))
    return EXIT_OK


def cmd_check(args) -> int:
    spec, _ = _load_context(args)
    source = _read_source(args.file)
    try:
        problem = parse_problem(source)
    except ParseError as exc:
        _emit(args, {"ok": False, "stage": "parse", "errors": [str(exc)]}, f"parse error: {exc}")
        return EXIT_DOMAIN
    try:
        elaborate(problem, spec)
    except ElaborationFailure as exc:
        text = "\n".join(str(e) for e in exc.errors)
        _emit(args, {"ok": False, "stage": "elaborate",
                     "errors": [str(e) for e in exc.errors]}, text)
        return EXIT_DOMAIN
    _emit(args, {"ok": True}, "ok")
    return EXIT_OK


def cmd_transpile(args) -> int:
    spec, rules_dir = _load_context(args)
    targets = ("lean4", "coq", "isabelle") if args.target == "all" else (args.target,)
    tables = _load_tables(spec, rules_dir, targets)
    source = _read_source(args.file)
    try:
        problem = parse_problem(source)
        tp = explicit_ascriptions(elaborate(problem, spec), spec)
        rendered = transpile_all(tp, tables)
    except (ParseError, ElaborationFailure, TranspileError) as exc:
        errors = [str(e) for e in exc.errors] if isinstance(exc, ElaborationFailure) else [str(exc)]
        _emit(args, {"ok": False, "errors": errors}, "\n".join(errors))
        return EXIT_DOMAIN

    out_dir = Path(args.output) if args.output else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.file).stem
    written = []
    for rt in rendered:
        path = out_dir / f"{stem}.{_EXTENSIONS[rt.target]}"
        path.write_text(rt.text + "\n", encoding="utf-8")
        written.append(str(path))
    _emit(args, {"ok": True, "written": written}, "\n".join(written))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec, rules_dir = _load_context(args)
    tables = _load_tables(spec, rules_dir, ("lean4", "coq", "isabelle"))
    templates_dir = Path(args.templates_dir) if args.templates_dir else data_path("templates")
    if not templates_dir.is_dir():
        raise UsageError(f"templates directory not found: {templates_dir}")
    templates = load_templates(templates_dir, spec)
    config = SynthConfig(
        seed=args.seed,
        count=args.count,
        topic=args.topic,
        template_ids=tuple(args.template_ids) if args.template_ids else None,
        max_composition_depth=args.compose_depth,
    )
    records = generate(config, templates, spec, tables)
    if args.output:
        write_corpus(records, args.output, args.seed)
        _emit(args, {"ok": True, "count": len(records), "output": args.output},
              f"wrote {len(records)} records to {args.output}")
    else:
        from .synth import record_to_json

        for record in records:
            print(json.dumps(record_to_json(record, args.seed), ensure_ascii=False))
    return EXIT_OK


def _judge_client(args):
    if getattr(args, "mock_judge", None) is not None:
        return MockJudgeClient(default_score=args.mock_judge)
    if getattr(args, "judge_endpoint", None):
        return HttpJudgeClient(endpoint=args.judge_endpoint, model=args.judge_model or "")
    return None


def cmd_validate(args) -> int:
    spec, rules_dir = _load_context(args)
    tables = _load_tables(spec, rules_dir, ("lean4", "coq", "isabelle"))
    if not Path(args.corpus).is_file():
        raise UsageError(f"no such corpus: {args.corpus}")
    tools = load_tool_config(args.config) if args.config else ToolConfig()
    config = PipelineConfig(
        spec=spec,
        tables=tables,
        tools=tools,
        judge_client=_judge_client(args),
        judge_samples=args.samples,
        workers=args.workers,
    )
    reports, summary = run_pipeline(args.corpus, config)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fp:
            for report in reports:
                fp.write(json.dumps(report.to_dict(), ensure_ascii=False) + "\n")
    payload = {"ok": True, "summary": summary,
               "reports": [r.to_dict() for r in reports]}
    _emit(args, payload, summary_table(summary))
    failures = summary["total"] - summary["elab_ok"]
    for bucket in summary["targets"].values():
        failures += bucket["fail"]
    return EXIT_DOMAIN if failures else EXIT_OK


def cmd_score(args) -> int:
    if not Path(args.corpus).is_file():
        raise UsageError(f"no such corpus: {args.corpus}")
    client = _judge_client(args)
    if client is None:
        raise UsageError("score needs --mock-judge N or --judge-endpoint URL")
    rows = read_corpus(args.corpus)
    results = []
    for row in rows:
        fl = row.get("lean4", "")
        score = judge_semantics(row.get("nl", ""), fl, client, samples=args.samples,
                                uncompilable=not fl)
        results.append({
            "id": row.get("id", ""),
            "samples": list(score.samples),
            "verdict": score.verdict,
            "final_score": score.final_score,
        })
    mean = round(sum(r["final_score"] for r in results) / len(results), 4) if results else 0.0
    text = "\n".join(f"{r['id'] or '?':<16} {r['verdict']:<8} {r['samples']} -> {r['final_score']}"
                     for r in results)
    text += f"\nmean final score: {mean}"
    _emit(args, {"ok": True, "mean_final_score": mean, "scores": results}, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keq",
        description="Knowledge-equation toolchain: parse, check, transpile, synthesize, validate.",
    )
    parser.add_argument("--ontology", help="ontology file (default: shipped core.ont)")
    parser.add_argument("--rules-dir", help="directory with <target>.rules files")
    parser.add_argument("--templates-dir", help="directory with *.tpl files")
    parser.add_argument("--format", choices=("text", "json", "jsonl"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a KE file and print its AST")
    p.add_argument("file")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("check", help="parse and elaborate a KE file")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("transpile", help="render a KE file for the target provers")
    p.add_argument("file")
    p.add_argument("--target", choices=("lean4", "coq", "isabelle", "all"), default="all")
    p.add_argument("-o", "--output", help="output directory (default: current directory)")
    p.set_defaults(func=cmd_transpile)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--topic", help="only templates touching this topic")
    p.add_argument("--template-ids", nargs="*", help="explicit template ids")
    p.add_argument("--compose-depth", type=int, default=1)
    p.add_argument("-o", "--output", help="corpus JSONL path (default: stdout)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="run the full validation pipeline on a corpus")
    p.add_argument("corpus")
    p.add_argument("--config", help="tool config file ([tools] section)")
    p.add_argument("--mock-judge", type=int, help="use the deterministic mock judge with this score")
    p.add_argument("--judge-endpoint", help="OpenAI-compatible chat endpoint")
    p.add_argument("--judge-model", help="judge model name")
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--report-out", help="write per-record reports as JSONL")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="judge-only pass over a corpus")
    p.add_argument("corpus")
    p.add_argument("--mock-judge", type=int, help="use the deterministic mock judge with this score")
    p.add_argument("--judge-endpoint", help="OpenAI-compatible chat endpoint")
    p.add_argument("--judge-model", help="judge model name")
    p.add_argument("--samples", type=int, default=3)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        if args.format in ("json", "jsonl"):
            print(json.dumps({"ok": False, "usage_error": str(exc)}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LoadError, TranspileError) as exc:
        if args.format in ("json", "jsonl"):
            print(json.dumps({"ok": False, "config_error": str(exc)}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
