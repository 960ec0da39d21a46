"""Corpus validation pipeline: parse -> elaborate -> transpile -> compile -> judge.

Compiler checks call the real target toolchains when configured; an absent
tool yields a ToolMissing outcome, never an error, so the pipeline runs on
machines without Lean/Coq/Isabelle installed.  Stages short-circuit: a
record that fails parsing or elaboration is never compiled or judged.
Compile and judge work runs on a bounded worker pool; reports come back in
input order regardless of completion order.
"""

from __future__ import annotations

import configparser
import json
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .elaborate import ElaborationFailure, elaborate, explicit_ascriptions
from .judge import JudgeClient, JudgeScore, judge_semantics
from .ontology import OntologySpec
from .parser import ParseError, parse_problem
from .transpile import RenderedTheorem, RuleTable, TranspileError, transpile_all

_SOURCE_NAMES = {"lean4": "Scratch.lean", "coq": "scratch.v", "isabelle": "KECheck.thy"}


class WorkspaceIoError(Exception):
    """Could not set up the temporary compile workspace."""


@dataclass(frozen=True)
class CompilerOutcome:
    target: str
    status: str              # "Pass" | "Fail" | "ToolMissing" | "Timeout"
    diagnostics: str = ""
    elapsed_ms: int = 0


@dataclass(frozen=True)
class ToolConfig:
    """Per-target compiler commands; `{file}` and `{stem}` expand to the
    written source path and its extension-less name."""

    commands: dict[str, str] = field(default_factory=dict)
    cwd: dict[str, str] = field(default_factory=dict)
    timeout_s: float = 120.0


@dataclass
class ValidationReport:
    problem_id: str
    parse_ok: bool
    elab_ok: bool
    errors: list[str] = field(default_factory=list)
    compile: dict[str, CompilerOutcome] = field(default_factory=dict)
    judge: JudgeScore | None = None

    def to_dict(self) -> dict:
        row = {
            "id": self.problem_id,
            "parse_ok": self.parse_ok,
            "elab_ok": self.elab_ok,
            "errors": self.errors,
            "compile": {
                target: {"status": o.status, "elapsed_ms": o.elapsed_ms,
                         "diagnostics": o.diagnostics[:2000]}
                for target, o in self.compile.items()
            },
        }
        if self.judge is not None:
            row["judge"] = {
                "samples": list(self.judge.samples),
                "verdict": self.judge.verdict,
                "final_score": self.judge.final_score,
            }
        return row


@dataclass
class PipelineConfig:
    spec: OntologySpec
    tables: list[RuleTable]
    tools: ToolConfig = field(default_factory=ToolConfig)
    judge_client: JudgeClient | None = None
    judge_samples: int = 3
    judge_target: str = "lean4"
    workers: int = 0  # 0 = logical cores

    def worker_count(self) -> int:
        import os

        return self.workers or os.cpu_count() or 1


def load_tool_config(path: str | Path) -> ToolConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise WorkspaceIoError(f"cannot read tool config {path}")
    commands: dict[str, str] = {}
    cwd: dict[str, str] = {}
    timeout = 120.0
    if parser.has_section("tools"):
        for key, value in parser.items("tools"):
            if key == "timeout":
                timeout = float(value)
            elif key.endswith("_cwd"):
                cwd[key[:-4]] = value
            else:
                commands[key] = value
    return ToolConfig(commands=commands, cwd=cwd, timeout_s=timeout)


def check_compile(rt: RenderedTheorem, tools: ToolConfig) -> CompilerOutcome:
    """Run the target compiler on preamble+text in a scratch workspace."""
    command = tools.commands.get(rt.target)
    if not command:
        return CompilerOutcome(rt.target, "ToolMissing", f"no {rt.target} tool configured")
    argv_probe = shlex.split(command)[0]
    if shutil.which(argv_probe) is None:
        return CompilerOutcome(rt.target, "ToolMissing", f"{argv_probe!r} not on PATH")

    source = rt.preamble + "\n\n" + rt.text + "\n"
    if rt.target == "isabelle":
        source += "\nend\n"
    try:
        with tempfile.TemporaryDirectory(prefix="keq-compile-") as workdir:
            path = Path(workdir) / _SOURCE_NAMES.get(rt.target, "scratch.txt")
            path.write_text(source, encoding="utf-8")
            argv = [
                part.format(file=str(path), stem=path.stem)
                for part in shlex.split(command)
            ]
            start = time.monotonic()
            try:
                proc = subprocess.run(
                    argv,
                    cwd=tools.cwd.get(rt.target, workdir),
                    capture_output=True,
                    text=True,
                    timeout=tools.timeout_s,
                )
            except subprocess.TimeoutExpired:
                elapsed = int((time.monotonic() - start) * 1000)
                return CompilerOutcome(rt.target, "Timeout",
                                       f"no result within {tools.timeout_s:.0f}s", elapsed)
            elapsed = int((time.monotonic() - start) * 1000)
    except OSError as exc:
        raise WorkspaceIoError(f"cannot prepare compile workspace: {exc}") from exc

    if proc.returncode == 0:
        return CompilerOutcome(rt.target, "Pass", proc.stdout[-2000:], elapsed)
    diagnostics = (proc.stdout + "\n" + proc.stderr).strip() or f"exit code {proc.returncode}"
    return CompilerOutcome(rt.target, "Fail", diagnostics, elapsed)


# ----------------------------------------------------------------- pipeline


def _stage_record(row: dict, config: PipelineConfig) -> tuple[ValidationReport, dict[str, RenderedTheorem], str]:
    """Parse/elaborate/transpile one corpus row; returns report skeleton,
    renderings, and the NL text."""
    report = ValidationReport(problem_id=str(row.get("id", "")), parse_ok=False, elab_ok=False)
    nl = row.get("nl", "")
    renderings: dict[str, RenderedTheorem] = {}
    preambles = {table.target: table.preamble for table in config.tables}

    ke_text = row.get("ke", "")
    if ke_text:
        try:
            problem = parse_problem(ke_text)
            report.parse_ok = True
        except ParseError as exc:
            report.errors.append(f"parse: {exc}")
            return report, renderings, nl
        try:
            tp = explicit_ascriptions(elaborate(problem, config.spec), config.spec)
            report.elab_ok = True
        except ElaborationFailure as exc:
            report.errors.extend(str(e) for e in exc.errors)
            return report, renderings, nl
        try:
            for rt in transpile_all(tp, config.tables):
                renderings[rt.target] = rt
        except TranspileError as exc:
            report.errors.append(f"transpile: {exc}")
            return report, renderings, nl
        return report, renderings, nl

    # Pre-rendered corpus rows skip the KE stages.
    found = False
    for target in ("lean4", "coq", "isabelle"):
        text = row.get(target, "")
        if text:
            found = True
            renderings[target] = RenderedTheorem(
                target=target, name=str(row.get("id", "")), text=text,
                preamble=preambles.get(target, ""),
            )
    if found:
        report.parse_ok = True
        report.elab_ok = True
    else:
        report.errors.append("record has neither `ke` nor any pre-rendered statement")
    return report, renderings, nl


def read_corpus(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSONL row: {exc}") from exc
    return rows


def run_pipeline(corpus_path: str | Path, config: PipelineConfig) -> tuple[list[ValidationReport], dict]:
    """Validate a JSONL corpus; per-record failures never abort the batch."""
    rows = read_corpus(corpus_path)
    staged = [_stage_record(row, config) for row in rows]

    compile_jobs = []
    for index, (report, renderings, _nl) in enumerate(staged):
        if report.elab_ok:
            for rt in renderings.values():
                compile_jobs.append((index, rt))

    if compile_jobs:
        with ThreadPoolExecutor(max_workers=config.worker_count()) as pool:
            outcomes = list(pool.map(lambda job: check_compile(job[1], config.tools), compile_jobs))
        for (index, rt), outcome in zip(compile_jobs, outcomes):
            staged[index][0].compile[rt.target] = outcome

    if config.judge_client is not None:
        judge_jobs = []
        for index, (report, renderings, nl) in enumerate(staged):
            if not (report.parse_ok and report.elab_ok):
                continue
            rt = renderings.get(config.judge_target)
            if rt is None:
                continue
            outcome = report.compile.get(config.judge_target)
            uncompilable = outcome is not None and outcome.status == "Fail"
            judge_jobs.append((index, nl, rt.text, uncompilable))
        with ThreadPoolExecutor(max_workers=config.worker_count()) as pool:
            scores = list(
                pool.map(
                    lambda job: judge_semantics(job[1], job[2], config.judge_client,
                                                config.judge_samples, uncompilable=job[3]),
                    judge_jobs,
                )
            )
        for (index, *_), score in zip(judge_jobs, scores):
            staged[index][0].judge = score

    reports = [report for report, _, _ in staged]
    return reports, build_summary(reports)


def build_summary(reports: list[ValidationReport]) -> dict:
    total = len(reports)
    parse_ok = sum(1 for r in reports if r.parse_ok)
    elab_ok = sum(1 for r in reports if r.elab_ok)
    per_target: dict[str, dict] = {}
    for report in reports:
        for target, outcome in report.compile.items():
            bucket = per_target.setdefault(
                target, {"attempted": 0, "pass": 0, "fail": 0, "tool_missing": 0, "timeout": 0}
            )
            bucket["attempted"] += 1
            key = {"Pass": "pass", "Fail": "fail", "ToolMissing": "tool_missing",
                   "Timeout": "timeout"}[outcome.status]
            bucket[key] += 1
    for bucket in per_target.values():
        checked = bucket["pass"] + bucket["fail"]
        bucket["syntax_rate"] = round(bucket["pass"] / checked, 4) if checked else None

    judged = [r.judge for r in reports if r.judge is not None]
    judge_summary = None
    if judged:
        judge_summary = {
            "judged": len(judged),
            "success": sum(1 for j in judged if j.verdict == "Success"),
            "mean_final_score": round(sum(j.final_score for j in judged) / len(judged), 4),
        }
    return {
        "total": total,
        "parse_ok": parse_ok,
        "elab_ok": elab_ok,
        "targets": per_target,
        "judge": judge_summary,
    }


def summary_table(summary: dict) -> str:
    """Plain-text table: one row per target, syntax and semantic columns."""
    lines = [
        f"records: {summary['total']}   parse ok: {summary['parse_ok']}   "
        f"elaborate ok: {summary['elab_ok']}",
        f"{'target':<10} {'syntax':>8} {'semantic':>9}",
    ]
    judge = summary.get("judge")
    semantic = f"{judge['mean_final_score']:.2f}" if judge else "-"
    for target in sorted(summary.get("targets", {})):
        bucket = summary["targets"][target]
        if bucket["syntax_rate"] is None:
            syntax = "n/a" if bucket["tool_missing"] else "-"
        else:
            syntax = f"{100 * bucket['syntax_rate']:.1f}%"
        lines.append(f"{target:<10} {syntax:>8} {semantic:>9}")
    return "\n".join(lines)
