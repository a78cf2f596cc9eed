"""Plan / reason-act / summarize / synthesize agent loop.

The actor speaks a small text protocol::

    <tool name="search">{"q": "keyword query", "k": 10}</tool>

Tools are ``search``, ``wedas_search`` (both run the distribution-aware
search when the agent is in ``wedas`` mode), ``answer`` and ``terminate``.
"""
from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .errors import AuthError, JsonExtractError, NetworkError, SchemaError, ScriptMiss, WedasError
from .llm_gateway import ChatMessage, DecodingConfig, LLMGateway, assistant, load_prompt, parse_json_reply, system, user
from .probe import ProbeBudget, ProbeEngine
from .qras import QrasScorer
from .search_env import DEFAULT_K, Observation, SearchBackend, SearchQuery
from .text_metrics import normalize
from .trajectory import (
    SEARCH_ACTIONS,
    TERMINAL_ACTIONS,
    SubQuestion,
    Task,
    ToolCall,
    Trajectory,
    TrajectoryStep,
    event,
    trajectory_events,
    write_events,
)

log = logging.getLogger(__name__)

PLANNER_PROMPT = load_prompt("planner.txt").rstrip("\n")
ACTOR_PROMPT = load_prompt("actor.txt").rstrip("\n")
SUMMARIZER_PROMPT = load_prompt("summarizer.txt").rstrip("\n")
SYNTHESIZER_PROMPT = load_prompt("synthesizer.txt").rstrip("\n")

TOOL_RE = re.compile(r'<tool\s+name="([A-Za-z_][\w-]*)"\s*>(.*?)</tool>', re.DOTALL)
TOOL_NAMES = (*SEARCH_ACTIONS, *TERMINAL_ACTIONS)
TOOL_MODES = ("baseline", "wedas")


@dataclass(frozen=True)
class AgentLimits:
    max_turns: int = 600
    max_tool_calls_per_turn: int = 10

    def __post_init__(self):
        if self.max_turns < 1 or self.max_tool_calls_per_turn < 1:
            raise ValueError("agent limits must be positive")


@dataclass(frozen=True)
class AgentConfig:
    tool_mode: str = "wedas"
    budget: ProbeBudget = field(default_factory=ProbeBudget)
    limits: AgentLimits = field(default_factory=AgentLimits)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    context_char_budget: int = 400_000

    def __post_init__(self):
        if self.tool_mode not in TOOL_MODES:
            raise ValueError(f"tool_mode must be one of {TOOL_MODES}")


@dataclass
class TaskResult:
    task_id: str
    answer: str
    trajectories: list[Trajectory]
    outcome: str
    plan_degraded: bool = False
    events: list[dict[str, Any]] = field(default_factory=list, repr=False)


def parse_tool_calls(text: str) -> tuple[str, list[tuple[str, dict[str, Any] | None, str]]]:
    """Split a completion into reasoning and ``(name, args, raw_args)`` tool calls.

    ``args`` is None when the block body is not a JSON object.
    """
    calls = []
    first = None
    for m in TOOL_RE.finditer(text):
        if first is None:
            first = m.start()
        body = m.group(2).strip()
        try:
            args = json.loads(body) if body else {}
        except json.JSONDecodeError:
            args = None
        if args is not None and not isinstance(args, dict):
            args = None
        calls.append((m.group(1), args, body))
    reasoning = (text if first is None else text[:first]).strip()
    return reasoning, calls


def render_evidence(obs: Observation) -> str:
    if not obs.documents:
        return f'No results for "{obs.query.text}".'
    lines = [f'Results for "{obs.query.text}":']
    for d in obs.documents:
        lines.append(f"[{d.rank}] {d.title}\n{d.snippet}\n{d.url}")
    return "\n".join(lines)


def render_call(call: ToolCall, elide: bool = False) -> str | None:
    """Observation text the actor sees for one call; guidance is never elided."""
    if call.observation is None:
        return None
    head = f"[{call.action}] " + json.dumps(call.arguments, ensure_ascii=False, sort_keys=True)
    body = f"[evidence elided: {len(call.observation)} chars]" if elide else call.observation
    parts = [head, body]
    if call.guidance is not None:
        block = call.guidance.render()
        if block:
            parts.append(block)
    return "\n".join(parts)


def render_step_observation(step: TrajectoryStep, elide: bool = False) -> str | None:
    chunks = [r for r in (render_call(c, elide) for c in step.calls) if r is not None]
    return "\n\n".join(chunks) if chunks else None


def grade(answer: str, ground_truth: str | None) -> str:
    if ground_truth is None:
        return "unknown"
    return "success" if normalize(answer).normalized == normalize(ground_truth).normalized else "failure"


class Agent:
    def __init__(
        self,
        search: SearchBackend,
        actor: LLMGateway,
        evaluator: LLMGateway | None = None,
        config: AgentConfig | None = None,
        *,
        clock: Callable[[], float] = time.time,
        grader: Callable[[str, str | None], str] | None = None,
    ):
        self.search = search
        self.config = config or AgentConfig()
        self.actor = actor.with_config(self.config.decoding)
        ev = evaluator if evaluator is not None else actor
        self.evaluator = ev.with_config(self.config.decoding)
        self.clock = clock
        self.grader = grader or grade
        self._events: list[dict[str, Any]] = []
        self._where = ("", 0, 0)
        self.probe_engine = ProbeEngine(
            search, QrasScorer(self.evaluator), self.evaluator, on_event=self._probe_event
        )

    def _probe_event(self, payload: dict[str, Any]) -> None:
        task_id, sq, turn = self._where
        body = {k: v for k, v in payload.items() if k != "type"}
        self._events.append(event("probe", task_id, sq, turn, body))

    # -- planning -------------------------------------------------------------

    def plan(self, task: Task) -> tuple[list[SubQuestion], bool]:
        """Decompose a task. Unusable planner output falls back to the task itself."""
        reply = self.actor.complete([system(PLANNER_PROMPT), user(task.prompt)])
        try:
            raw = parse_json_reply(reply.text, "plan")
        except (JsonExtractError, SchemaError) as exc:
            log.info("planner output unusable for %s (%s); using the task prompt", task.task_id, exc)
            return [SubQuestion(1, task.prompt)], True
        items = [" ".join(q.split()) for q in raw["sub_questions"] if q.strip()]
        if not items:
            log.info("planner returned no sub-questions for %s; using the task prompt", task.task_id)
            return [SubQuestion(1, task.prompt)], True
        return [SubQuestion(i, q) for i, q in enumerate(items, 1)], False

    # -- reason/act ---------------------------------------------------------

    def _intro(self, task: Task, sq: SubQuestion) -> str:
        return f"Task: {task.prompt}\nSub-question {sq.index}: {sq.text}"

    def build_context(self, task: Task, sq: SubQuestion, steps: list[TrajectoryStep]) -> list[ChatMessage]:
        sys_prompt = ACTOR_PROMPT.replace("{max_calls}", str(self.config.limits.max_tool_calls_per_turn))
        head = [system(sys_prompt), user(self._intro(task, sq))]
        elided = 0
        while True:
            msgs = list(head)
            for i, step in enumerate(steps):
                msgs.append(assistant(step.completion))
                obs = render_step_observation(step, elide=i < elided)
                if obs is not None:
                    msgs.append(user(obs))
            size = sum(len(m.content) for m in msgs)
            if size <= self.config.context_char_budget or elided >= len(steps):
                return msgs
            elided += 1

    def _execute(self, name: str, args: dict[str, Any]) -> ToolCall:
        if name in TERMINAL_ACTIONS:
            return ToolCall(name, args)
        q = args.get("q")
        if not isinstance(q, str) or not q.strip():
            return ToolCall(name, args, 'error: search needs a non-empty string argument "q"')
        k = args.get("k", DEFAULT_K)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            return ToolCall(name, args, 'error: "k" must be a positive integer')
        try:
            query = SearchQuery(q, k)
            if self.config.tool_mode == "wedas":
                obs, report = self.probe_engine.wedas_search(query, self.config.budget)
            else:
                obs, report = self.search.search(query), None
        except (AuthError, ScriptMiss):
            raise
        except (WedasError, ValueError) as exc:
            return ToolCall(name, args, f"error: {exc}")
        return ToolCall(name, args, render_evidence(obs), obs, report)

    def _turn(self, turn: int, completion: str) -> TrajectoryStep:
        cap = self.config.limits.max_tool_calls_per_turn
        reasoning, parsed = parse_tool_calls(completion)
        calls: list[ToolCall] = []
        stopped = False
        for idx, (name, args, raw) in enumerate(parsed):
            if stopped:
                calls.append(ToolCall(name, args or {}, "rejected: a terminal action already ended this turn", executed=False))
            elif idx >= cap:
                calls.append(ToolCall(name, args or {}, f"rejected: at most {cap} tool calls per turn", executed=False))
            elif args is None:
                calls.append(ToolCall(name, {"raw": raw}, "error: tool arguments must be a JSON object"))
            elif name not in TOOL_NAMES:
                calls.append(ToolCall(name, args, f"error: unknown tool {name!r}; use one of {', '.join(TOOL_NAMES)}"))
            else:
                call = self._execute(name, args)
                calls.append(call)
                stopped = name in TERMINAL_ACTIONS
        if not parsed:
            calls.append(
                ToolCall("none", {}, 'error: no tool call found; use <tool name="...">{...}</tool>', executed=False)
            )
        step = TrajectoryStep(turn, reasoning, completion, calls)
        step.observation = render_step_observation(step)
        return step

    def reason_act_loop(self, task: Task, sq: SubQuestion) -> Trajectory:
        traj = Trajectory(task.task_id, sq.index, sq.text)
        for turn in range(1, self.config.limits.max_turns + 1):
            self._where = (task.task_id, sq.index, turn)
            started = self.clock()
            try:
                reply = self.actor.complete(self.build_context(task, sq, traj.steps))
            except NetworkError as exc:
                log.warning("actor call failed for %s/%d: %s", task.task_id, sq.index, exc)
                traj.aborted = True
                break
            step = self._turn(turn, reply.text)
            step.started_at, step.ended_at = started, self.clock()
            traj.steps.append(step)
            if step.terminal:
                break
        return traj

    # -- summarize / synthesize ------------------------------------------------

    def render_trajectory(self, traj: Trajectory) -> str:
        """Evidence-only transcript for the summarizer (guidance is left out)."""
        lines = [f"Sub-question: {traj.subquestion}"]
        for step in traj.steps:
            lines.append(f"\nTurn {step.turn}")
            if step.reasoning:
                lines.append(f"Reasoning: {step.reasoning}")
            for call in step.calls:
                lines.append(f"Action: {call.action} {json.dumps(call.arguments, ensure_ascii=False, sort_keys=True)}")
                if call.observation is not None:
                    lines.append(f"Observation: {call.observation}")
        return "\n".join(lines)

    def summarize(self, traj: Trajectory) -> str:
        if not traj.steps:
            return ""
        reply = self.actor.complete([system(SUMMARIZER_PROMPT), user(self.render_trajectory(traj))])
        return reply.text.strip()

    def synthesize_answer(self, task: Task, knowledge: list[str]) -> str:
        findings = "\n".join(f"{i}. {k}" for i, k in enumerate(knowledge, 1)) or "(none)"
        reply = self.actor.complete(
            [system(SYNTHESIZER_PROMPT), user(f"Task: {task.prompt}\n\nFindings:\n{findings}")]
        )
        return reply.text.strip()

    # -- end to end ---------------------------------------------------------------

    def run_task(self, task: Task, trajectory_path: str | Path | None = None) -> TaskResult:
        self._events = []
        self._where = (task.task_id, 0, 0)
        subquestions, degraded = self.plan(task)
        plan_event = event(
            "plan", task.task_id, 0, 0,
            {"sub_questions": [s.text for s in subquestions], "degraded": degraded},
        )
        trajectories = []
        knowledge = []
        probe_events: list[list[dict[str, Any]]] = []
        for sq in subquestions:
            mark = len(self._events)
            traj = self.reason_act_loop(task, sq)
            if not traj.aborted:
                try:
                    traj.summary = self.summarize(traj)
                except NetworkError as exc:
                    log.warning("summary failed for %s/%d: %s", task.task_id, sq.index, exc)
                    traj.aborted = True
            knowledge.append(traj.summary)
            trajectories.append(traj)
            probe_events.append(self._events[mark:])
        answer = self.synthesize_answer(task, knowledge)
        outcome = self.grader(answer, task.ground_truth)
        for traj in trajectories:
            traj.outcome = "unknown" if traj.aborted else outcome

        events = [plan_event]
        for traj, probes in zip(trajectories, probe_events):
            events.extend(_interleave(trajectory_events(traj), probes))
        events.append(
            event("answer", task.task_id, 0, 0,
                  {"answer": answer, "ground_truth": task.ground_truth, "outcome": outcome})
        )
        if trajectory_path is not None:
            write_events(trajectory_path, events)
        return TaskResult(task.task_id, answer, trajectories, outcome, degraded, events)


def _interleave(traj_events: list[dict[str, Any]], probes: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Place each probe event just before the step event of the turn that produced it."""
    out = []
    pending = list(probes)
    for ev in traj_events:
        if ev["type"] == "step":
            while pending and pending[0]["turn"] <= ev["turn"]:
                out.append(pending.pop(0))
        elif ev["type"] == "summary":
            out.extend(pending)
            pending = []
        out.append(ev)
    return out


def with_seed(config: AgentConfig, seed: int | None) -> AgentConfig:
    return replace(config, decoding=replace(config.decoding, seed=seed))
