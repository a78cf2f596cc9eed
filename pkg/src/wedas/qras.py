"""Query-Result Alignment Score via an LLM judge.

The judge rates each (query, results) item on three 0-10 dimensions. The
overall score is always recomputed locally as their unweighted mean; the
judge's own overall is kept for logging only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import MissingEvaluation
from .llm_gateway import ChatMessage, DecodingConfig, LLMGateway, load_prompt, system, user
from .search_env import Observation

JUDGE_PROMPT = load_prompt("judge.txt").rstrip("\n")
DIMENSIONS = ("topical_relevance", "info_density", "noise_level")


@dataclass(frozen=True)
class DimensionScores:
    topical_relevance: int
    info_density: int
    noise_level: int

    def __post_init__(self):
        for name in DIMENSIONS:
            v = getattr(self, name)
            if not 0 <= v <= 10:
                raise ValueError(f"{name}={v} outside [0, 10]")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.topical_relevance, self.info_density, self.noise_level)

    def to_dict(self) -> dict[str, int]:
        return dict(zip(DIMENSIONS, self.as_tuple()))


def mean_score(dims: DimensionScores) -> float:
    return (dims.topical_relevance + dims.info_density + dims.noise_level) / 3


@dataclass(frozen=True)
class QrasResult:
    query: str
    overall: float
    dims: DimensionScores
    analysis: str
    judge_reported_overall: float | None = None

    @classmethod
    def from_dims(cls, query: str, dims: DimensionScores, analysis: str = "",
                  judge_reported_overall: float | None = None) -> "QrasResult":
        return cls(query, mean_score(dims), dims, analysis, judge_reported_overall)


def judge_items_payload(items: Sequence[tuple[str, Observation]]) -> list[dict[str, Any]]:
    return [
        {
            "query": query,
            "results": [{"title": d.title, "snippet": d.snippet, "url": d.url} for d in obs.documents],
        }
        for query, obs in items
    ]


def build_judge_prompt(items: Sequence[tuple[str, Observation]]) -> list[ChatMessage]:
    if not items:
        raise ValueError("judge prompt needs at least one item")
    payload = json.dumps(judge_items_payload(items), ensure_ascii=False, indent=2)
    return [system(JUDGE_PROMPT), user(payload)]


def coerce_score(value: Any) -> int:
    """Clamp a judge score into [0, 10] and round half up. Non-numbers raise."""
    if isinstance(value, bool):
        raise MissingEvaluation(f"non-numeric score {value!r}")
    if isinstance(value, str):
        try:
            value = float(value.strip())
        except ValueError:
            raise MissingEvaluation(f"non-numeric score {value!r}") from None
    if not isinstance(value, (int, float)) or math.isnan(value):
        raise MissingEvaluation(f"non-numeric score {value!r}")
    return int(math.floor(min(10.0, max(0.0, float(value))) + 0.5))


def _reported_overall(value: Any) -> float | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


def parse_evaluations(raw: dict[str, Any], expected_queries: Sequence[str]) -> list[QrasResult]:
    """Align judge evaluations to the expected queries.

    An evaluation whose echoed ``query`` matches exactly is used first; the
    rest are paired positionally with what is left over.
    """
    evaluations = list(raw.get("evaluations", []))
    used = [False] * len(evaluations)
    assigned: list[int | None] = [None] * len(expected_queries)
    for qi, q in enumerate(expected_queries):
        for ei, ev in enumerate(evaluations):
            if not used[ei] and isinstance(ev, dict) and ev.get("query") == q:
                used[ei] = True
                assigned[qi] = ei
                break
    spare = iter(ei for ei in range(len(evaluations)) if not used[ei])
    for qi in range(len(expected_queries)):
        if assigned[qi] is None:
            assigned[qi] = next(spare, None)

    results = []
    for q, ei in zip(expected_queries, assigned):
        if ei is None:
            raise MissingEvaluation(f"judge returned no evaluation for query {q!r}")
        ev = evaluations[ei]
        dims_raw = ev.get("dimension_scores") if isinstance(ev, dict) else None
        if not isinstance(dims_raw, dict):
            raise MissingEvaluation(f"evaluation for {q!r} has no dimension_scores")
        try:
            dims = DimensionScores(*(coerce_score(dims_raw.get(name)) for name in DIMENSIONS))
        except MissingEvaluation as exc:
            raise MissingEvaluation(f"evaluation for {q!r}: {exc}") from None
        analysis = ev.get("analysis", "")
        results.append(
            QrasResult.from_dims(
                q,
                dims,
                analysis if isinstance(analysis, str) else str(analysis),
                _reported_overall(ev.get("overall_relevance_score")),
            )
        )
    return results


class QrasScorer:
    """Meta-evaluator: scores (query, observation) batches with one judge call."""

    def __init__(self, gateway: LLMGateway, cfg: DecodingConfig | None = None):
        self.gateway = gateway
        self.cfg = cfg

    def score_batch(self, items: Sequence[tuple[str, Observation]]) -> list[QrasResult]:
        if not items:
            return []
        raw = self.gateway.complete_json(build_judge_prompt(items), "judge", self.cfg)
        return parse_evaluations(raw, [q for q, _ in items])

    def score(self, query: str, obs: Observation) -> QrasResult:
        return self.score_batch([(query, obs)])[0]
