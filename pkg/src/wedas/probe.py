"""Iterative few-shot probing of the local query space.

Each iteration asks the generator for a batch of short derived queries,
searches and scores them with the QRAS judge, adds them to the probe set and
then drops the single lowest-scored live probe. What survives is returned as
guidance: (query, score, analysis) tuples that steer later query writing but
are never treated as evidence.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .errors import AuthError, EmptyCorpus, NetworkError, ScriptMiss, WedasError
from .llm_gateway import DecodingConfig, LLMGateway, load_prompt, system, user
from .qras import DimensionScores, QrasScorer
from .search_env import DEFAULT_K, Observation, SearchBackend, SearchQuery
from .text_metrics import normalize

log = logging.getLogger(__name__)

GENERATION_PROMPT = load_prompt("probe_generation.txt").rstrip("\n")
MAX_QUERY_WORDS = 6
GUIDANCE_HEADER = "SEARCH GUIDANCE (not evidence):"

EventSink = Callable[[dict[str, Any]], None]


@dataclass(frozen=True)
class ProbeTuple:
    query: str
    score: float
    analysis: str
    iteration: int
    dims: DimensionScores | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "score": self.score,
            "analysis": self.analysis,
            "iteration": self.iteration,
            "dims": self.dims.to_dict() if self.dims else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProbeTuple":
        dims = DimensionScores(**d["dims"]) if d.get("dims") else None
        return cls(d["query"], float(d["score"]), d["analysis"], int(d["iteration"]), dims)


def _drop_key(t: ProbeTuple) -> tuple[float, int, str]:
    return (t.score, t.iteration, t.query)


@dataclass
class ProbeSet:
    tuples: list[ProbeTuple] = field(default_factory=list)
    dropped: list[ProbeTuple] = field(default_factory=list)
    created: int = 0
    observations: dict[str, Observation] = field(default_factory=dict, repr=False, compare=False)

    @property
    def threshold(self) -> float | None:
        """Current dynamic threshold: the minimum live score."""
        return min(t.score for t in self.tuples) if self.tuples else None

    @property
    def last_drop_score(self) -> float | None:
        return self.dropped[-1].score if self.dropped else None

    def seen(self, query: str) -> bool:
        key = normalize(query).normalized
        return any(normalize(t.query).normalized == key for t in (*self.tuples, *self.dropped))

    def add(self, t: ProbeTuple, obs: Observation | None = None) -> None:
        if any(x.query == t.query for x in self.tuples):
            raise ValueError(f"probe {t.query!r} is already live")
        self.tuples.append(t)
        self.created += 1
        if obs is not None:
            self.observations[t.query] = obs

    def drop_min(self) -> ProbeTuple:
        """Move the lowest-scored live probe to ``dropped``.

        Ties go to the oldest iteration, then the lexicographically smallest query.
        """
        victim = min(self.tuples, key=_drop_key)
        self.tuples.remove(victim)
        self.dropped.append(victim)
        return victim


@dataclass(frozen=True)
class ProbeBudget:
    max_iterations: int = 1
    max_candidates_per_iteration: int = 5

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 2 <= self.max_candidates_per_iteration <= 5:
            raise ValueError("max_candidates_per_iteration must be in [2, 5]")


@dataclass(frozen=True)
class GuidanceReport:
    origin_query: str
    tuples: tuple[ProbeTuple, ...] = ()
    iterations_run: int = 0
    terminated_early: bool = False
    degraded: bool = False
    error: str | None = None

    def __post_init__(self):
        ordered = tuple(sorted(self.tuples, key=lambda t: (-t.score, t.iteration, t.query)))
        object.__setattr__(self, "tuples", ordered)

    def render(self) -> str:
        """Delimited guidance block; empty string when there is nothing to show."""
        if not self.tuples:
            return ""
        lines = [GUIDANCE_HEADER]
        for t in self.tuples:
            lines.append(f"- query: {t.query} | score: {t.score:.2f} | analysis: {t.analysis}")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "origin_query": self.origin_query,
            "tuples": [t.to_dict() for t in self.tuples],
            "iterations_run": self.iterations_run,
            "terminated_early": self.terminated_early,
            "degraded": self.degraded,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GuidanceReport":
        return cls(
            d["origin_query"],
            tuple(ProbeTuple.from_dict(t) for t in d["tuples"]),
            int(d["iterations_run"]),
            bool(d["terminated_early"]),
            bool(d.get("degraded", False)),
            d.get("error"),
        )


def prune_by_threshold(candidates: Sequence[tuple[str, float]], tau: float) -> list[tuple[str, float]]:
    """Keep candidates scoring strictly above ``tau``, in input order."""
    return [(q, s) for q, s in candidates if s > tau]


def word_count(query: str) -> int:
    return len(query.split())


class ProbeEngine:
    def __init__(
        self,
        search: SearchBackend,
        scorer: QrasScorer,
        generator: LLMGateway,
        *,
        cfg: DecodingConfig | None = None,
        probe_k: int = DEFAULT_K,
        workers: int = 1,
        on_event: EventSink | None = None,
    ):
        self.search = search
        self.scorer = scorer
        self.generator = generator
        self.cfg = cfg
        self.probe_k = probe_k
        self.workers = workers
        self.on_event = on_event
        self.validation_rejects = 0

    def _emit(self, event: dict[str, Any]) -> None:
        if self.on_event is not None:
            self.on_event(event)

    # -- generation ---------------------------------------------------------

    def _seed(self, q0: str, probe_set: ProbeSet, origin_obs: Observation) -> tuple[str, Observation]:
        """Pick the query-result pair to expand next.

        Live probes scoring strictly above the most recently dropped one are
        eligible; the best of them is expanded. With no eligible probe the
        origin query is expanded again.
        """
        live = [(t.query, t.score) for t in probe_set.tuples]
        if probe_set.last_drop_score is not None:
            live = prune_by_threshold(live, probe_set.last_drop_score)
        by_query = {t.query: t for t in probe_set.tuples}
        eligible = [by_query[q] for q, _ in live if q in probe_set.observations]
        if not eligible:
            return q0, origin_obs
        best = min(eligible, key=lambda t: (-t.score, -t.iteration, t.query))
        return best.query, probe_set.observations[best.query]

    def generation_messages(self, q0: str, probe_set: ProbeSet, seed_query: str, seed_obs: Observation):
        payload = {
            "query": seed_query,
            "results": [{"title": d.title, "snippet": d.snippet, "url": d.url} for d in seed_obs.documents],
            "origin_query": q0,
            "known_probes": [
                {"query": t.query, "score": round(t.score, 4), "analysis": t.analysis}
                for t in sorted(probe_set.tuples, key=lambda t: (-t.score, t.iteration, t.query))
            ],
        }
        return [system(GENERATION_PROMPT), user(json.dumps(payload, ensure_ascii=False, indent=2))]

    def generate_candidates(
        self, q0: str, probe_set: ProbeSet, last_obs: Observation, limit: int = 5, seed_query: str | None = None
    ) -> list[str]:
        """Ask the generator for derived queries and filter them.

        Over-long, empty or repeated queries are dropped (and counted in
        ``validation_rejects``). An empty result means the generator pruned.
        """
        seed_query = seed_query if seed_query is not None else last_obs.query.text
        raw = self.generator.complete_json(
            self.generation_messages(q0, probe_set, seed_query, last_obs), "probe_generation", self.cfg
        )
        seen = {normalize(q0).normalized}
        out: list[str] = []
        for cand in raw.get("derived_queries", []):
            text = " ".join(cand.split()) if isinstance(cand, str) else ""
            key = normalize(text).normalized
            if not key or word_count(text) > MAX_QUERY_WORDS:
                self.validation_rejects += 1
                continue
            if key in seen or probe_set.seen(text):
                continue
            seen.add(key)
            out.append(text)
        return out[:limit]

    # -- iteration ------------------------------------------------------------

    def _search_one(self, text: str) -> Observation | None:
        try:
            return self.search.search(SearchQuery(text, self.probe_k))
        except (NetworkError, EmptyCorpus, ValueError) as exc:
            log.warning("probe search for %r failed, skipping: %s", text, exc)
            return None

    def probe_iteration(
        self, q0: str, probe_set: ProbeSet, budget: ProbeBudget, iteration: int, origin_obs: Observation
    ) -> bool:
        """Run one probing round in place. Returns False when the generator pruned."""
        seed_query, seed_obs = self._seed(q0, probe_set, origin_obs)
        candidates = self.generate_candidates(
            q0, probe_set, seed_obs, budget.max_candidates_per_iteration, seed_query
        )
        if not candidates:
            return False
        if self.workers > 1 and len(candidates) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                observations = list(pool.map(self._search_one, candidates))
        else:
            observations = [self._search_one(c) for c in candidates]
        searched = [(c, o) for c, o in zip(candidates, observations) if o is not None]
        if not searched:
            return True
        results = self.scorer.score_batch(searched)
        new = []
        for (cand, obs), res in zip(searched, results):
            t = ProbeTuple(cand, res.overall, res.analysis, iteration, res.dims)
            probe_set.add(t, obs)
            new.append(t)
        victim = probe_set.drop_min()
        for t in new:
            self._emit(self._event(t, iteration, dropped=t is victim))
        if victim not in new:
            self._emit(self._event(victim, iteration, dropped=True))
        return True

    @staticmethod
    def _event(t: ProbeTuple, iteration: int, dropped: bool) -> dict[str, Any]:
        return {
            "type": "probe",
            "iteration": iteration,
            "query": t.query,
            "score": t.score,
            "dims": t.dims.to_dict() if t.dims else None,
            "analysis": t.analysis,
            "dropped": dropped,
            "created_iteration": t.iteration,
        }

    def run_probing(self, q0: str, budget: ProbeBudget, origin_obs: Observation | None = None) -> GuidanceReport:
        if budget.max_iterations == 0:
            return GuidanceReport(q0)
        if origin_obs is None:
            origin_obs = self.search.search(SearchQuery(q0, self.probe_k))
        probe_set = ProbeSet()
        iterations = 0
        for t in range(1, budget.max_iterations + 1):
            try:
                expanded = self.probe_iteration(q0, probe_set, budget, t, origin_obs)
            except (ScriptMiss, AuthError):
                raise
            except WedasError as exc:
                if t == 1:
                    raise
                log.warning("probe iteration %d failed, returning partial guidance: %s", t, exc)
                return GuidanceReport(q0, tuple(probe_set.tuples), iterations, False, True, str(exc))
            iterations = t
            if not expanded:
                return GuidanceReport(q0, tuple(probe_set.tuples), iterations, True)
        return GuidanceReport(q0, tuple(probe_set.tuples), iterations, False)

    def wedas_search(self, q0: SearchQuery, budget: ProbeBudget) -> tuple[Observation, GuidanceReport]:
        """Search ``q0`` for evidence and probe around it for guidance."""
        obs = self.search.search(q0)
        try:
            report = self.run_probing(q0.text, budget, obs)
        except (ScriptMiss, AuthError):
            raise
        except WedasError as exc:
            log.warning("probing failed for %r; continuing without guidance: %s", q0.text, exc)
            report = GuidanceReport(q0.text, degraded=True, error=str(exc))
        return obs, report
