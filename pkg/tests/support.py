"""Independent oracles and stub collaborators shared by the tests."""
from __future__ import annotations

import json
import math
from collections import Counter
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from wedas.errors import NetworkError
from wedas.llm_gateway import ChatMessage, Completion, DecodingConfig
from wedas.search_env import Document, Observation, SearchQuery

DATA = Path(str(resources.files("wedas") / "data"))
SYNTHETIC = DATA / "synthetic"


def lev_oracle(a: str, b: str) -> int:
    """Full-matrix Wagner-Fischer, written independently of the package kernels."""
    rows, cols = len(a) + 1, len(b) + 1
    d = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        d[i][0] = i
    for j in range(cols):
        d[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[-1][-1]


def tfidf_oracle(q_tokens: Sequence[str], o_tokens: Sequence[str], docs: Sequence[Sequence[str]]) -> float:
    """Smoothed TF-IDF cosine from first principles; TF cosine when fewer than two docs."""
    n = len(docs)
    df = Counter(t for d in docs for t in set(d))

    def vec(tokens):
        tf = Counter(tokens)
        if n < 2:
            return {t: float(c) for t, c in tf.items()}
        return {t: c * (math.log((1 + n) / (1 + df[t])) + 1) for t, c in tf.items()}

    vq, vo = vec(q_tokens), vec(o_tokens)
    dot = sum(vq[t] * vo.get(t, 0.0) for t in vq)
    norm = math.sqrt(sum(v * v for v in vq.values())) * math.sqrt(sum(v * v for v in vo.values()))
    return 0.0 if norm == 0 else dot / norm


def make_obs(query: str, snippets: Sequence[str], k: int = 10, titles: Sequence[str] | None = None) -> Observation:
    titles = titles or [f"T{i}" for i in range(1, len(snippets) + 1)]
    docs = tuple(
        Document(t, s, f"https://example.com/{i}", i) for i, (t, s) in enumerate(zip(titles, snippets), 1)
    )
    return Observation(SearchQuery(query, k), docs, "stub", 0.0)


class StubSearch:
    """Returns canned snippets per query text; unknown queries get an empty list."""

    backend_id = "stub"

    def __init__(self, table: dict[str, list[str]] | None = None, fail: set[str] | None = None):
        self.table = table or {}
        self.fail = fail or set()
        self.calls: list[str] = []

    def search(self, query: SearchQuery) -> Observation:
        self.calls.append(query.text)
        if query.text in self.fail:
            raise NetworkError(f"stub failure for {query.text!r}")
        return make_obs(query.text, self.table.get(query.text, [f"about {query.text}"]), query.k)


class FunctionBackend:
    """Chat backend driven by a plain function of the messages."""

    def __init__(self, respond: Callable[[Sequence[ChatMessage], DecodingConfig], str]):
        self.respond = respond
        self.requests: list[list[ChatMessage]] = []

    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> Completion:
        self.requests.append(list(messages))
        return Completion(self.respond(messages, cfg), "function")


def judge_reply(rows: Sequence[tuple[str, tuple[int, int, int]]], overall=None, analysis="ok") -> str:
    return json.dumps({
        "evaluations": [
            {
                "query": q,
                "overall_relevance_score": overall if overall is not None else round(sum(d) / 3),
                "dimension_scores": {"topical_relevance": d[0], "info_density": d[1], "noise_level": d[2]},
                "analysis": analysis,
            }
            for q, d in rows
        ]
    })


def generation_reply(queries: Sequence[str], analysis: str = "expand") -> str:
    return json.dumps({"analysis": analysis, "derived_queries": list(queries)})


class ProbeResponder:
    """Stub evaluator model for the probe engine.

    ``plan`` maps the seed query of a generation request to the derived
    queries it returns; ``dims`` maps probe queries to judge sub-scores.
    """

    def __init__(self, plan: dict[str, list[str]], dims: dict[str, tuple[int, int, int]]):
        self.plan = plan
        self.dims = dims
        self.seeds: list[str] = []

    def __call__(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> str:
        from wedas.probe import GENERATION_PROMPT
        from wedas.qras import JUDGE_PROMPT

        if messages[0].content == GENERATION_PROMPT:
            seed = json.loads(messages[1].content)["query"]
            self.seeds.append(seed)
            return generation_reply(self.plan.get(seed, []))
        if messages[0].content == JUDGE_PROMPT:
            items = json.loads(messages[1].content)
            return judge_reply([(it["query"], self.dims[it["query"]]) for it in items])
        raise AssertionError("unexpected prompt")
