import json
import random

import pytest

from support import FunctionBackend, ProbeResponder, StubSearch, generation_reply, judge_reply
from wedas.errors import AuthError, NetworkError
from wedas.llm_gateway import LLMGateway
from wedas.probe import (
    GENERATION_PROMPT,
    GUIDANCE_HEADER,
    GuidanceReport,
    ProbeBudget,
    ProbeEngine,
    ProbeSet,
    ProbeTuple,
    prune_by_threshold,
)
from wedas.qras import JUDGE_PROMPT, QrasScorer
from wedas.search_env import SearchQuery

Q0 = "rust web framework"
PLAN = {
    Q0: ["actix web benchmark", "axum tutorial", "rocket framework guide"],
    "rocket framework guide": ["rocket async support", "rocket vs axum"],
}
DIMS = {
    "actix web benchmark": (8, 7, 7),
    "axum tutorial": (5, 5, 5),
    "rocket framework guide": (8, 8, 8),
    "rocket async support": (6, 6, 6),
    "rocket vs axum": (9, 9, 9),
}


def engine_for(responder, search=None, events=None):
    gw = LLMGateway(FunctionBackend(responder))
    return ProbeEngine(search or StubSearch(), QrasScorer(gw), gw, on_event=events.append if events is not None else None)


def test_two_iteration_scenario_matches_hand_simulation():
    responder = ProbeResponder(PLAN, DIMS)
    engine = engine_for(responder)
    ps = ProbeSet()
    origin = StubSearch().search(SearchQuery(Q0))
    budget = ProbeBudget(2, 5)

    assert engine.probe_iteration(Q0, ps, budget, 1, origin)
    assert {t.query: t.score for t in ps.tuples} == {"rocket framework guide": 8.0, "actix web benchmark": 22 / 3}
    assert [t.query for t in ps.dropped] == ["axum tutorial"]
    assert ps.threshold == 22 / 3

    assert engine.probe_iteration(Q0, ps, budget, 2, origin)
    assert responder.seeds == [Q0, "rocket framework guide"]
    assert sorted(t.query for t in ps.tuples) == ["actix web benchmark", "rocket framework guide", "rocket vs axum"]
    assert [t.query for t in ps.dropped] == ["axum tutorial", "rocket async support"]
    assert ps.threshold == 22 / 3
    # live size = candidates created minus one drop per productive iteration
    assert len(ps.tuples) == 5 - 2


def test_run_probing_report_is_sorted_and_counts():
    events = []
    report = engine_for(ProbeResponder(PLAN, DIMS), events=events).run_probing(Q0, ProbeBudget(2, 5))
    assert [t.score for t in report.tuples] == [9.0, 8.0, 22 / 3]
    assert report.iterations_run == 2 and not report.terminated_early
    assert sum(e["dropped"] for e in events) == 2 and len(events) == 5
    assert {e["query"] for e in events if e["dropped"]} == {"axum tutorial", "rocket async support"}
    block = report.render()
    assert block.startswith(GUIDANCE_HEADER) and "rocket vs axum" in block
    assert GuidanceReport.from_dict(json.loads(json.dumps(report.to_dict()))) == report


def test_zero_iterations_does_no_work():
    search = StubSearch()
    backend = FunctionBackend(lambda m, c: pytest.fail("model called"))
    gw = LLMGateway(backend)
    report = ProbeEngine(search, QrasScorer(gw), gw).run_probing(Q0, ProbeBudget(0))
    assert report == GuidanceReport(Q0) and report.iterations_run == 0 and report.render() == ""
    assert search.calls == []


def test_early_termination_on_prune():
    plan = {Q0: ["a b", "c d"]}
    report = engine_for(ProbeResponder(plan, {"a b": (5, 5, 5), "c d": (6, 6, 6)})).run_probing(Q0, ProbeBudget(5))
    assert report.iterations_run == 2 and report.terminated_early
    assert [t.query for t in report.tuples] == ["c d"]


def test_generate_candidates_filters():
    engine = engine_for(lambda m, c: generation_reply(
        ["rust async runtime", "tokio vs smol benchmark broken extra words here now", "Rust  Web framework",
         "rust async runtime", "", "a", "b", "c", "d", "e"]))
    origin = StubSearch().search(SearchQuery(Q0))
    got = engine.generate_candidates(Q0, ProbeSet(), origin, limit=5)
    assert got == ["rust async runtime", "a", "b", "c", "d"]
    assert engine.validation_rejects == 2
    assert engine_for(lambda m, c: generation_reply([])).generate_candidates(Q0, ProbeSet(), origin) == []


def test_candidates_already_probed_are_skipped():
    ps = ProbeSet()
    ps.add(ProbeTuple("seen before", 5.0, "", 1))
    ps.drop_min()
    engine = engine_for(lambda m, c: generation_reply(["Seen  before", "fresh"]))
    assert engine.generate_candidates(Q0, ps, StubSearch().search(SearchQuery(Q0))) == ["fresh"]


def test_drop_min_tie_breaks_oldest_then_lexicographic():
    ps = ProbeSet()
    for q, s, it in (("b", 5.0, 2), ("a", 5.0, 2), ("c", 5.0, 1), ("d", 9.0, 1)):
        ps.add(ProbeTuple(q, s, "", it))
    assert [ps.drop_min().query for _ in range(3)] == ["c", "a", "b"]


def test_seed_falls_back_to_origin_when_nothing_beats_last_drop():
    responder = ProbeResponder({Q0: ["x y", "z w"]}, {"x y": (5, 5, 5), "z w": (5, 5, 5)})
    engine = engine_for(responder)
    ps = ProbeSet()
    origin = StubSearch().search(SearchQuery(Q0))
    engine.probe_iteration(Q0, ps, ProbeBudget(2), 1, origin)
    engine.probe_iteration(Q0, ps, ProbeBudget(2), 2, origin)
    assert responder.seeds == [Q0, Q0]


def test_failed_candidate_search_is_skipped():
    search = StubSearch(fail={"axum tutorial"})
    report = engine_for(ProbeResponder(PLAN, DIMS), search=search).run_probing(Q0, ProbeBudget(1))
    assert [t.query for t in report.tuples] == ["rocket framework guide"]


def test_prune_by_threshold():
    cands = [("a", 7.2), ("b", 5.1), ("c", 8.0)]
    assert prune_by_threshold(cands, 7.2) == [("c", 8.0)]
    assert prune_by_threshold(cands, -1) == cands
    assert prune_by_threshold([], 3) == []


def _failing_second_generation():
    state = {"gen": 0}

    def respond(m, c):
        if m[0].content == GENERATION_PROMPT:
            state["gen"] += 1
            return generation_reply(["p one", "p two"]) if state["gen"] == 1 else "no json at all"
        items = json.loads(m[1].content)
        return judge_reply([(it["query"], (5, 6, 7)) for it in items])

    return respond


def test_late_failure_returns_partial_degraded_report():
    report = engine_for(_failing_second_generation()).run_probing(Q0, ProbeBudget(3))
    assert report.degraded and report.iterations_run == 1 and len(report.tuples) == 1
    assert report.error


def test_first_iteration_failure_degrades_wedas_search():
    engine = engine_for(lambda m, c: "garbage")
    obs, report = engine.wedas_search(SearchQuery(Q0), ProbeBudget(1))
    assert obs == StubSearch().search(SearchQuery(Q0))
    assert report.degraded and report.tuples == () and report.render() == ""
    with pytest.raises(Exception):
        engine.run_probing(Q0, ProbeBudget(1))


def test_auth_error_is_never_degraded():
    def respond(m, c):
        raise AuthError("bad key")

    with pytest.raises(AuthError):
        engine_for(respond).wedas_search(SearchQuery(Q0), ProbeBudget(1))


def test_wedas_search_with_zero_budget_is_plain_search():
    search = StubSearch()
    engine = engine_for(lambda m, c: pytest.fail("model called"), search=search)
    obs, report = engine.wedas_search(SearchQuery(Q0), ProbeBudget(0))
    plain = StubSearch().search(SearchQuery(Q0))
    assert json.dumps(obs.to_dict(), sort_keys=True) == json.dumps(plain.to_dict(), sort_keys=True)
    assert report.tuples == () and search.calls == [Q0]


def test_parallel_probe_searches_give_same_report():
    seq = engine_for(ProbeResponder(PLAN, DIMS)).run_probing(Q0, ProbeBudget(2))
    gw = LLMGateway(FunctionBackend(ProbeResponder(PLAN, DIMS)))
    par = ProbeEngine(StubSearch(), QrasScorer(gw), gw, workers=4).run_probing(Q0, ProbeBudget(2))
    assert seq == par


def test_budget_validation():
    with pytest.raises(ValueError):
        ProbeBudget(-1)
    with pytest.raises(ValueError):
        ProbeBudget(1, 6)
    with pytest.raises(ValueError):
        ProbeBudget(1, 1)


# -- randomized sessions ---------------------------------------------------------

VOCAB = ["rust", "web", "async", "tokio", "axum", "bench", "guide", "docs", "http", "server", "fast", "safe"]


def random_responder(rng):
    def respond(messages, cfg):
        if messages[0].content == GENERATION_PROMPT:
            n = rng.randint(0, 6)
            return generation_reply([" ".join(rng.choices(VOCAB, k=rng.randint(1, 8))) for _ in range(n)])
        assert messages[0].content == JUDGE_PROMPT
        items = json.loads(messages[1].content)
        evals = []
        for it in items:
            raw = [rng.choice([rng.randint(0, 10), rng.uniform(-2, 12), rng.randint(-3, 14)]) for _ in range(3)]
            evals.append({"query": it["query"], "overall_relevance_score": 5,
                          "dimension_scores": dict(zip(("topical_relevance", "info_density", "noise_level"), raw)),
                          "analysis": "r"})
        rng.shuffle(evals)
        return json.dumps({"evaluations": evals})

    return respond


class FlakySearch(StubSearch):
    def __init__(self, rng):
        super().__init__()
        self.rng = rng

    def search(self, query):
        if self.rng.random() < 0.1:
            raise NetworkError("flaky")
        return super().search(query)


def run_session(seed):
    rng = random.Random(seed)
    gw = LLMGateway(FunctionBackend(random_responder(rng)))
    engine = ProbeEngine(FlakySearch(rng), QrasScorer(gw), gw)
    budget = ProbeBudget(rng.randint(0, 4), rng.randint(2, 5))
    origin = StubSearch().search(SearchQuery(Q0))
    ps = ProbeSet()
    audit = []
    for it in range(1, budget.max_iterations + 1):
        n_dropped = len(ps.dropped)
        if not engine.probe_iteration(Q0, ps, budget, it, origin):
            break
        if len(ps.dropped) > n_dropped:
            victim = ps.dropped[-1]
            audit.append((victim, list(ps.tuples)))
        assert len(ps.tuples) + len(ps.dropped) == ps.created
        assert len({t.query for t in ps.tuples}) == len(ps.tuples)
        assert all(len(t.query.split()) <= 6 and 0 <= t.score <= 10 for t in ps.tuples)
        if ps.tuples:
            assert ps.threshold == min(t.score for t in ps.tuples)
    for victim, live in audit:
        assert all(victim.score <= t.score for t in live)
    return ps


def test_randomized_sessions_conserve_and_drop_minimum():
    for seed in range(500):
        run_session(seed)
