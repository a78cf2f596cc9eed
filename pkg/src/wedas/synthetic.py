"""Synthetic planted-answer benchmark and a rule-based stand-in LLM.

Each task asks for a year that is planted in exactly one corpus document.
That document is only reachable by following ``cross-reference:`` hints from
the task's introductory document, ``depth`` hops away (or never, for
dead-end tasks). The simulated actor searches its opening query and then at
most one query taken from the probe guidance, so a task is solved when

* the opening query already names the answer record (a "lucky" trial), or
* probing runs at least ``depth`` iterations.

The simulated model is recorded into a fingerprint-keyed script so the
benchmark replays through :class:`~wedas.llm_gateway.ScriptedBackend`.

Run ``python -m wedas.synthetic --out DIR`` to regenerate the shipped files.
"""
from __future__ import annotations

import argparse
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .agent import (
    ACTOR_PROMPT,
    PLANNER_PROMPT,
    SUMMARIZER_PROMPT,
    SYNTHESIZER_PROMPT,
    Agent,
    AgentConfig,
    parse_tool_calls,
    with_seed,
)
from .llm_gateway import ChatMessage, DecodingConfig, LLMGateway, RecordingBackend
from .probe import GENERATION_PROMPT, GUIDANCE_HEADER
from .qras import JUDGE_PROMPT
from .search_env import LocalCorpus, LocalDocument, LocalSearchBackend
from .text_metrics import normalize
from .trajectory import Task

RECORD_RE = re.compile(r"Record (.+?) notes the date as (\d{4})", re.IGNORECASE)
XREF_RE = re.compile(r"cross-reference: ([a-z0-9 ]+)\.", re.IGNORECASE)
YEAR_RE = re.compile(r"\b(\d{4})\b")
GUIDANCE_ENTRY_RE = re.compile(r"^- query: (.+?) \| score: ([0-9.]+) \| analysis: ", re.MULTILINE)


@dataclass(frozen=True)
class WorldTask:
    task_id: str
    entity: str
    thing: str
    answer: str
    chain: tuple[str, ...]
    depth: int | None
    lucky_trials: tuple[int, ...] = ()

    @property
    def prompt(self) -> str:
        return f"In which year was the {self.entity} {self.thing} recorded?"

    @property
    def opening_query(self) -> str:
        return f"{self.entity} {self.thing}"

    @property
    def answer_code(self) -> str:
        return self.chain[-1]

    def task(self) -> Task:
        return Task(self.task_id, self.prompt, self.answer)

    def documents(self) -> list[LocalDocument]:
        url = f"https://archive.example/{self.task_id}"
        docs = []
        if self.depth is None:
            docs.append(LocalDocument(
                f"{self.task_id}-0", f"{self.entity.title()} {self.thing}",
                f"The {self.entity} {self.thing} has no further catalogue entries.", f"{url}/intro"))
        else:
            docs.append(LocalDocument(
                f"{self.task_id}-0", f"{self.entity.title()} {self.thing}",
                f"The {self.entity} {self.thing} is catalogued under cross-reference: {self.chain[0]}.",
                f"{url}/intro"))
            for i in range(1, len(self.chain)):
                docs.append(LocalDocument(
                    f"{self.task_id}-{i}", f"Entry {self.chain[i - 1]}",
                    f"Entry {self.chain[i - 1]} is archived under cross-reference: {self.chain[i]}.",
                    f"{url}/entry{i}"))
        docs.append(LocalDocument(
            f"{self.task_id}-9", f"Record {self.answer_code}",
            f"Record {self.answer_code} notes the date as {self.answer}.", f"{url}/record"))
        return docs


def build_world() -> list[WorldTask]:
    return [
        WorldTask("t01", "zorblax", "probe", "1987", ("zx7 kestrel",), 1),
        WorldTask("t02", "quenmere", "bridge", "1912", ("qb3 heron",), 1, (2,)),
        WorldTask("t03", "tavrino", "opera", "1874", ("tv2 osprey", "lm9 plover"), 2),
        WorldTask("t04", "vellichor", "lighthouse", "1903", ("vl5 egret", "rn8 curlew"), 2, (0,)),
        WorldTask("t05", "marrowind", "canal", "1821", ("mc6 wren",), None),
        WorldTask("t06", "palisandre", "observatory", "1956", ("po4 finch",), None, (1,)),
        WorldTask("t07", "brindlecove", "tram", "1931", ("bt1 lark",), 1, (0, 1, 2)),
        WorldTask("t08", "cindervale", "mill", "1799", ("cv3 swift", "ks2 rook"), 2),
        WorldTask("t09", "duskmoor", "reservoir", "1968", ("dr7 gannet",), None, (0, 2)),
        WorldTask("t10", "emberfall", "tunnel", "1889", ("et9 tern",), 1),
    ]


FILLER_DOCS = [
    LocalDocument("z-noise-1", "Regional archives", "General notes on regional archives and their catalogues.",
                  "https://archive.example/noise/1"),
    LocalDocument("z-noise-2", "Cataloguing practice", "Catalogue entries are cross-checked by two archivists.",
                  "https://archive.example/noise/2"),
]


def build_corpus(world: Sequence[WorldTask]) -> LocalCorpus:
    docs = [d for w in world for d in w.documents()]
    return LocalCorpus(docs + FILLER_DOCS)


def expected_success(w: WorldTask, T: int, trial: int) -> bool:
    """What the benchmark must produce, straight from the task's construction."""
    return trial in w.lucky_trials or (w.depth is not None and w.depth <= T)


# -- simulated model -------------------------------------------------------------


@dataclass
class SimulatedLLM:
    """Deterministic rule-based responder covering every prompt role."""

    world: Sequence[WorldTask]
    by_prompt: dict[str, WorldTask] = field(init=False)

    def __post_init__(self):
        self.by_prompt = {w.prompt: w for w in self.world}

    def __call__(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> str:
        sys_prompt = messages[0].content
        if sys_prompt == PLANNER_PROMPT:
            return json.dumps({"sub_questions": [messages[1].content]})
        if sys_prompt == JUDGE_PROMPT:
            return self.judge(json.loads(messages[1].content))
        if sys_prompt == GENERATION_PROMPT:
            return self.generate(json.loads(messages[1].content))
        if sys_prompt == SUMMARIZER_PROMPT:
            m = RECORD_RE.search(messages[1].content)
            return f"Record {m.group(1)} gives the date {m.group(2)}." if m else "No relevant findings."
        if sys_prompt == SYNTHESIZER_PROMPT:
            findings = messages[1].content.split("Findings:", 1)[-1]
            m = YEAR_RE.search(findings)
            return m.group(1) if m else "unknown"
        if sys_prompt.startswith(ACTOR_PROMPT.split("{max_calls}")[0]):
            return self.act(messages, cfg.seed or 0)
        raise ValueError("simulated model does not recognise this prompt")

    @staticmethod
    def judge(items: list[dict]) -> str:
        evaluations = []
        for item in items:
            q = set(normalize(item["query"]).tokens)
            docs = item["results"]
            seen: set[str] = set()
            for d in docs:
                seen.update(normalize(d["title"] + " " + d["snippet"]).tokens)
            topical = round(10 * len(q & seen) / len(q)) if q else 0
            if not docs:
                density = 0
            elif any(YEAR_RE.search(d["snippet"]) for d in docs):
                density = 9
            else:
                density = 4
            on_topic = sum(1 for d in docs if q & set(normalize(d["title"] + " " + d["snippet"]).tokens))
            noise = round(10 * on_topic / len(docs)) if docs else 0
            note = "dated record found" if density == 9 else ("no results" if not docs else "no dates in results")
            evaluations.append({
                "query": item["query"],
                "overall_relevance_score": round((topical + density + noise) / 3),
                "dimension_scores": {"topical_relevance": topical, "info_density": density, "noise_level": noise},
                "analysis": note,
            })
        return json.dumps({"evaluations": evaluations})

    @staticmethod
    def generate(payload: dict) -> str:
        refs = []
        for d in payload["results"]:
            for m in XREF_RE.finditer(d["snippet"]):
                if m.group(1) not in refs:
                    refs.append(m.group(1))
        if not refs:
            return json.dumps({"analysis": "dead end: no cross-references", "derived_queries": []})
        filler = normalize(payload["query"]).tokens[0] + " overview"
        return "```json\n" + json.dumps(
            {"analysis": "follow the cross-references", "derived_queries": refs + [filler]}
        ) + "\n```"

    def act(self, messages: Sequence[ChatMessage], seed: int) -> str:
        intro = messages[1].content
        task_prompt = intro.split("\n", 1)[0].removeprefix("Task: ")
        w = self.by_prompt.get(task_prompt)
        searched = []
        evidence = []
        guidance: list[tuple[float, int, str]] = []
        for i, m in enumerate(messages[2:]):
            if m.role == "assistant":
                _, calls = parse_tool_calls(m.content)
                searched += [a["q"] for _, a, _ in calls if a and "q" in a]
            else:
                body, _, block = m.content.partition(GUIDANCE_HEADER)
                evidence.append(body)
                for g in GUIDANCE_ENTRY_RE.finditer(block):
                    guidance.append((-float(g.group(2)), i, g.group(1)))
        for text in evidence:
            hit = RECORD_RE.search(text)
            if hit:
                return (f"The record {hit.group(1)} gives the date.\n"
                        f'<tool name="answer">{json.dumps({"text": hit.group(2)})}</tool>')
        # one guided follow-up only, so each task needs its full chain from a single probe run
        for _, _, q in sorted(guidance) if len(searched) == 1 else ():
            if q not in searched:
                return (f"Guidance suggests a better query.\n"
                        f'<tool name="search">{json.dumps({"q": q, "k": 10})}</tool>')
        if not searched:
            if w is None:
                q = " ".join(normalize(task_prompt).tokens[-3:])
            else:
                q = w.answer_code if seed in w.lucky_trials else w.opening_query
            return f'Start broad.\n<tool name="search">{json.dumps({"q": q, "k": 10})}</tool>'
        return 'Nothing more to try.\n<tool name="terminate">{"reason": "no leads"}</tool>'


# -- recording -------------------------------------------------------------------


def bench_config(base: AgentConfig, T: int, trial: int | None, mode: str = "wedas") -> AgentConfig:
    cfg = replace(base, tool_mode=mode, budget=replace(base.budget, max_iterations=T))
    return with_seed(cfg, trial)


def record_script(
    world: Sequence[WorldTask],
    corpus: LocalCorpus,
    T_values: Sequence[int] = (0, 1, 2),
    trials: int = 3,
    base: AgentConfig | None = None,
    modes: Sequence[str] = ("wedas", "baseline"),
) -> RecordingBackend:
    base = base or AgentConfig()
    recorder = RecordingBackend(SimulatedLLM(world))
    search = LocalSearchBackend(corpus)
    for mode in modes:
        for T in (T_values if mode == "wedas" else (0,)):
            # None covers `wedas run`, which sends no seed; the simulated actor treats it as trial 0
            for trial in (None, *range(trials)):
                for w in world:
                    agent = Agent(search, LLMGateway(recorder), config=bench_config(base, T, trial, mode))
                    agent.run_task(w.task())
    return recorder


def write_benchmark(out: str | Path, trials: int = 3, T_values: Sequence[int] = (0, 1, 2)) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    world = build_world()
    corpus = build_corpus(world)
    corpus.to_jsonl(out / "corpus.jsonl")
    with open(out / "tasks.jsonl", "w", encoding="utf-8") as fh:
        for w in world:
            fh.write(json.dumps(w.task().to_dict()) + "\n")
    with open(out / "world.json", "w", encoding="utf-8") as fh:
        json.dump([asdict(w) for w in world], fh, indent=2)
        fh.write("\n")
    record_script(world, corpus, T_values, trials).dump_jsonl(out / "script.jsonl")


def load_world(path: str | Path) -> list[WorldTask]:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        WorldTask(r["task_id"], r["entity"], r["thing"], r["answer"], tuple(r["chain"]), r["depth"],
                  tuple(r["lucky_trials"]))
        for r in rows
    ]


def main(argv: Sequence[str] | None = None) -> None:
    p = argparse.ArgumentParser(description="regenerate the synthetic planted-answer benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=3)
    args = p.parse_args(argv)
    write_benchmark(args.out, args.trials)


if __name__ == "__main__":
    main()
