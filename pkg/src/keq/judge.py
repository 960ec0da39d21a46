"""Graded semantic judging of NL/formal statement pairs.

A judge scores alignment on a 0-5 scale; the score is read from the
``||n||`` delimiter in the reply.  Each pair is judged with independent
samples (default 3) and the verdict is majority-based: semantic success
requires at least two scores of 5.  Statements that failed to compile are
scored 0 without consulting the judge.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Protocol

import requests

JUDGE_PROMPT = """You are an expert in Lean4 language and natural language. When given a math \
problem described in natural language and a math problem described in Lean4 \
language, your task is to evaluate the consistency of the two math problems \
and score them.

Scoring Rules:
1. The full score is 5 points and the lowest score is 0.
2. When the semantics of all statements of the two math problems are \
consistent, give full marks of 5 points.
3. For each inconsistent statement, deduct 1 point until 0 points.

Response Format:
- Reply with ||your points|| in the final sentence.
- Use the exact "||" format for the score.

Input Format:
math problem described in natural language:
{nl}

math problem described in Lean4 language:
{fl}
"""

_SCORE_RE = re.compile(r"\|\|\s*(\d+)\s*\|\|")


class ClientError(Exception):
    """Network, auth, or protocol failure while querying the judge."""


class ScoreParseError(Exception):
    """The judge reply carried no usable ||n|| score."""


class JudgeClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class JudgeScore:
    samples: tuple[int, ...]
    verdict: str            # "Success" | "Failure"
    final_score: int


def build_prompt(nl: str, fl: str) -> str:
    return JUDGE_PROMPT.format(nl=nl, fl=fl)


def extract_score(response: str) -> int:
    """Last ||n|| occurrence wins; scores outside 0..5 are rejected."""
    matches = _SCORE_RE.findall(response)
    if not matches:
        raise ScoreParseError(f"no ||n|| score in judge reply: {response[:120]!r}")
    score = int(matches[-1])
    if not 0 <= score <= 5:
        raise ScoreParseError(f"score {score} out of range 0..5")
    return score


def verdict_of(samples: tuple[int, ...] | list[int]) -> tuple[str, int]:
    """(verdict, final score) as a pure function of the sample multiset.

    Success needs at least two 5s.  The final score is the majority value;
    ties break toward the lower score.
    """
    counts = {v: list(samples).count(v) for v in set(samples)}
    final = max(counts, key=lambda v: (counts[v], -v))
    verdict = "Success" if list(samples).count(5) >= 2 else "Failure"
    return verdict, final


def judge_semantics(nl: str, fl: str, client: JudgeClient, samples: int = 3,
                    uncompilable: bool = False) -> JudgeScore:
    """Collect independent judgments and apply the majority rule."""
    if uncompilable:
        zeros = tuple([0] * samples)
        return JudgeScore(samples=zeros, verdict="Failure", final_score=0)
    prompt = build_prompt(nl, fl)
    scores = tuple(extract_score(client.complete(prompt)) for _ in range(samples))
    verdict, final = verdict_of(scores)
    return JudgeScore(samples=scores, verdict=verdict, final_score=final)


class HttpJudgeClient:
    """OpenAI-compatible chat-completions client.

    No sampling parameters are sent (the provider's defaults apply); raw
    responses are kept in `audit_log` for later inspection.
    """

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 key_env: str = "KE_JUDGE_API_KEY", timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(key_env, "")
        self.timeout = timeout
        self.audit_log: list[dict] = []

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = requests.post(self.endpoint, json=payload, headers=headers,
                                     timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise ClientError(f"judge request failed: {exc}") from exc
        self.audit_log.append({"prompt": prompt, "response": text})
        return text


class MockJudgeClient:
    """Deterministic stand-in for CI: a fixed score, with per-problem
    overrides keyed by a substring of the prompt (normally the NL text)."""

    def __init__(self, default_score: int = 5, overrides: dict[str, int] | None = None):
        self.default_score = default_score
        self.overrides = overrides or {}
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        score = self.default_score
        for key, value in self.overrides.items():
            if key in prompt:
                score = value
                break
        return f"The two problems are aligned. ||{score}||"


class ScriptedJudgeClient:
    """Replays a fixed list of scores; raises when exhausted."""

    def __init__(self, scores: list[int]):
        self._scores = list(scores)

    def complete(self, prompt: str) -> str:
        if not self._scores:
            raise ClientError("scripted judge ran out of responses")
        return f"Reviewed. ||{self._scores.pop(0)}||"
