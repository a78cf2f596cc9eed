"""Trajectory records and their JSONL event format.

A task file holds one event per line::

    {"type": "plan"|"step"|"probe"|"summary"|"answer",
     "task_id": ..., "sq": int, "turn": int, "payload": {...}}

``events_to_trajectories`` rebuilds the in-memory records losslessly.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .probe import GuidanceReport
from .search_env import Observation, atomic_write_text

log = logging.getLogger(__name__)

OUTCOMES = ("success", "failure", "unknown")
EVENT_TYPES = ("plan", "step", "probe", "summary", "answer")
TERMINAL_ACTIONS = ("terminate", "answer")
SEARCH_ACTIONS = ("search", "wedas_search")


@dataclass(frozen=True)
class Task:
    task_id: str
    prompt: str
    ground_truth: str | None = None

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError(f"task {self.task_id!r} has an empty prompt")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Task":
        gt = d.get("ground_truth")
        return cls(str(d["task_id"]), d["prompt"], None if gt is None else str(gt))

    def to_dict(self) -> dict[str, Any]:
        return {"task_id": self.task_id, "prompt": self.prompt, "ground_truth": self.ground_truth}


def load_tasks(path: str | os.PathLike[str]) -> list[Task]:
    """Read tasks from a JSONL file, or a JSON file holding one task or a list."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("["):
        return [Task.from_dict(d) for d in json.loads(stripped)]
    if stripped.startswith("{") and "\n" not in stripped:
        return [Task.from_dict(json.loads(stripped))]
    try:
        return [Task.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError:
        return [Task.from_dict(json.loads(stripped))]


@dataclass(frozen=True)
class SubQuestion:
    index: int
    text: str


@dataclass
class ToolCall:
    action: str
    arguments: dict[str, Any]
    observation: str | None = None
    result: Observation | None = None
    guidance: GuidanceReport | None = None
    executed: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action,
            "arguments": self.arguments,
            "observation": self.observation,
            "result": self.result.to_dict() if self.result else None,
            "guidance": self.guidance.to_dict() if self.guidance else None,
            "executed": self.executed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToolCall":
        return cls(
            d["action"],
            d["arguments"],
            d.get("observation"),
            Observation.from_dict(d["result"]) if d.get("result") else None,
            GuidanceReport.from_dict(d["guidance"]) if d.get("guidance") else None,
            d.get("executed", True),
        )


@dataclass
class TrajectoryStep:
    turn: int
    reasoning: str
    completion: str
    calls: list[ToolCall] = field(default_factory=list)
    observation: str | None = None
    started_at: float = 0.0
    ended_at: float = 0.0

    @property
    def terminal(self) -> bool:
        return any(c.action in TERMINAL_ACTIONS and c.executed for c in self.calls)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reasoning": self.reasoning,
            "completion": self.completion,
            "calls": [c.to_dict() for c in self.calls],
            "observation": self.observation,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
        }

    @classmethod
    def from_dict(cls, turn: int, d: dict[str, Any]) -> "TrajectoryStep":
        return cls(
            turn,
            d["reasoning"],
            d["completion"],
            [ToolCall.from_dict(c) for c in d["calls"]],
            d.get("observation"),
            float(d["started_at"]),
            float(d["ended_at"]),
        )


@dataclass
class Trajectory:
    task_id: str
    subquestion_index: int
    subquestion: str
    steps: list[TrajectoryStep] = field(default_factory=list)
    summary: str = ""
    outcome: str = "unknown"
    aborted: bool = False

    def search_calls(self) -> Iterator[ToolCall]:
        for step in self.steps:
            for call in step.calls:
                if call.action in SEARCH_ACTIONS and call.result is not None:
                    yield call

    def sub_result(self) -> str | None:
        for step in reversed(self.steps):
            for call in step.calls:
                if call.action == "answer" and call.executed:
                    return str(call.arguments.get("text", ""))
        return None


def event(kind: str, task_id: str, sq: int, turn: int, payload: dict[str, Any]) -> dict[str, Any]:
    if kind not in EVENT_TYPES:
        raise ValueError(f"unknown event type {kind!r}")
    return {"type": kind, "task_id": task_id, "sq": sq, "turn": turn, "payload": payload}


def trajectory_events(traj: Trajectory) -> list[dict[str, Any]]:
    out = [event("step", traj.task_id, traj.subquestion_index, s.turn, s.to_dict()) for s in traj.steps]
    out.append(
        event(
            "summary",
            traj.task_id,
            traj.subquestion_index,
            len(traj.steps),
            {
                "subquestion": traj.subquestion,
                "summary": traj.summary,
                "outcome": traj.outcome,
                "aborted": traj.aborted,
            },
        )
    )
    return out


def events_to_trajectories(events: Iterable[dict[str, Any]]) -> list[Trajectory]:
    """Group step and summary events back into trajectories, in file order."""
    trajs: dict[tuple[str, int], Trajectory] = {}
    for ev in events:
        key = (ev["task_id"], int(ev["sq"]))
        if ev["type"] == "step":
            traj = trajs.setdefault(key, Trajectory(key[0], key[1], ""))
            traj.steps.append(TrajectoryStep.from_dict(int(ev["turn"]), ev["payload"]))
        elif ev["type"] == "summary":
            traj = trajs.setdefault(key, Trajectory(key[0], key[1], ""))
            p = ev["payload"]
            traj.subquestion = p["subquestion"]
            traj.summary = p["summary"]
            traj.outcome = p["outcome"]
            traj.aborted = bool(p.get("aborted", False))
    return list(trajs.values())


def write_events(path: str | os.PathLike[str], events: Iterable[dict[str, Any]]) -> None:
    lines = [json.dumps(ev, ensure_ascii=False, sort_keys=True) for ev in events]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_events(path: str | os.PathLike[str]) -> tuple[list[dict[str, Any]], int]:
    """Parse a JSONL event file. Returns (events, number of malformed lines skipped)."""
    events = []
    malformed = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
                if not isinstance(ev, dict) or ev.get("type") not in EVENT_TYPES:
                    raise ValueError("not an event")
                int(ev["sq"]), int(ev["turn"]), ev["task_id"], ev["payload"]
            except (ValueError, KeyError, TypeError):
                malformed += 1
                continue
            events.append(ev)
    return events, malformed


def load_trajectories(path: str | os.PathLike[str]) -> tuple[list[Trajectory], int]:
    """Load every trajectory under a file or directory of ``*.jsonl`` files.

    Lines that fail to parse, and step payloads that cannot be rebuilt, are
    counted and skipped.
    """
    path = Path(path)
    files = sorted(path.rglob("*.jsonl")) if path.is_dir() else [path]
    trajectories: list[Trajectory] = []
    malformed = 0
    for f in files:
        events, bad = read_events(f)
        malformed += bad
        good = []
        for ev in events:
            try:
                if ev["type"] == "step":
                    TrajectoryStep.from_dict(int(ev["turn"]), ev["payload"])
                elif ev["type"] == "summary":
                    p = ev["payload"]
                    if p["outcome"] not in OUTCOMES:
                        raise ValueError(p["outcome"])
                    p["subquestion"], p["summary"]
            except (ValueError, KeyError, TypeError):
                malformed += 1
                continue
            good.append(ev)
        trajectories.extend(events_to_trajectories(good))
    return trajectories, malformed
