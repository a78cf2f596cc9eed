"""Command-line entry point: ``wedas <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from .agent import Agent, AgentConfig, with_seed
from .analysis import (
    ablation_csv,
    ablation_harness,
    histogram_csv,
    means_csv,
    render_ablation_table,
    render_alignment_table,
    split_by_outcome,
    summarize_metrics,
)
from .config import CliConfig
from .eig import ToyModel, eig_bound_check
from .errors import ConfigError, ModelError, WedasError
from .probe import GuidanceReport, ProbeEngine
from .qras import QrasScorer
from .search_env import SearchQuery, atomic_write_text
from .trajectory import Task, load_tasks, load_trajectories

log = logging.getLogger("wedas")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress and print the effective config")
    p.add_argument("--local-corpus", help="search a local JSONL corpus instead of the live API")
    p.add_argument("--scripted-llm", help="replay model completions from a JSONL fixture")
    p.add_argument("--model", help="model name for the live LLM endpoint")
    p.add_argument("--evaluator-model", help="model name for probe generation and judging")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="wedas", description="distribution-aware deep search agent")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="answer every task in a task file")
    run.add_argument("task_file")
    run.add_argument("--mode", choices=("baseline", "wedas"))
    run.add_argument("--probe-iterations", "-T", type=int, dest="probe_iterations")
    run.add_argument("--out", required=True, help="output directory for answers and trajectories")
    run.add_argument("--workers", type=int, help="tasks to run in parallel")

    bench = sub.add_parser("bench", parents=[common], help="pass@1 / pass@3 over repeated trials per probe budget")
    bench.add_argument("benchmark")
    bench.add_argument("--trials", type=int, default=3)
    bench.add_argument("--mode", choices=("baseline", "wedas"))
    bench.add_argument("-T", type=int, nargs="+", dest="T_values", help="probe iteration budgets (default: config)")
    bench.add_argument("--sample", type=int, help="evaluate a uniform random subset of this many tasks")
    bench.add_argument("--seed", type=int, default=0, help="seed for --sample")
    bench.add_argument("--workers", type=int)
    bench.add_argument("--csv", help="also write the table as CSV to this path")
    bench.add_argument("--format", choices=("text", "csv"), default="text")

    probe = sub.add_parser("probe", parents=[common], help="probe around one query and print the guidance")
    probe.add_argument("query")
    probe.add_argument("-T", type=int, dest="T")
    probe.add_argument("--k", type=int, default=10)
    probe.add_argument("--format", choices=("text", "json"), default="text")

    analyze = sub.add_parser("analyze", parents=[common], help="query/result alignment by trajectory outcome")
    analyze.add_argument("inputs", nargs="+", help="trajectory file or directory, optionally LABEL=PATH")
    analyze.add_argument("--out", help="directory for histogram.csv and means.csv")
    analyze.add_argument("--format", choices=("text", "csv"), default="text")

    eig = sub.add_parser("simulate-eig", parents=[common], help="exact EIG bound check on a toy model")
    eig.add_argument("model_file")
    eig.add_argument("--query", action="append", help="restrict to these queries")
    eig.add_argument("--format", choices=("text", "json"), default="text")

    sub.add_parser("config-check", parents=[common], help="print the effective configuration")
    return parser


def _flags(args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "agent": {"tool_mode": g("mode")},
        "probe": {"max_iterations": g("probe_iterations") if g("probe_iterations") is not None else g("T")},
        "search": {"local_corpus": g("local_corpus")},
        "llm": {"scripted": g("scripted_llm"), "model": g("model"), "evaluator_model": g("evaluator_model")},
        "bench": {"workers": g("workers")},
    }


def _load_config(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig.load(args.config, flags=_flags(args))
    if args.verbose:
        print("effective config:\n" + cfg.dumps(), file=sys.stderr)
    return cfg


def _make_agent(cfg: CliConfig, agent_cfg: AgentConfig | None = None) -> Agent:
    search = cfg.search_backend()
    actor, evaluator = cfg.gateways()
    return Agent(search, actor, evaluator, agent_cfg or cfg.agent_config())


def _write_answer(out: Path, task: Task, answer: str, outcome: str) -> None:
    body = json.dumps(
        {"task_id": task.task_id, "answer": answer, "ground_truth": task.ground_truth, "outcome": outcome},
        ensure_ascii=False, indent=2, sort_keys=True,
    )
    atomic_write_text(out / f"{task.task_id}.answer.json", body + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    try:
        tasks = load_tasks(args.task_file)
    except FileNotFoundError:
        raise ConfigError(f"task file {args.task_file} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _make_agent(cfg)  # surface configuration errors before any work starts

    def one(task: Task) -> str:
        agent = _make_agent(cfg)
        result = agent.run_task(task, out / f"{task.task_id}.trajectory.jsonl")
        _write_answer(out, task, result.answer, result.outcome)
        return f"{task.task_id}\t{result.outcome}\t{result.answer}"

    workers = int(cfg.get("bench", "workers"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lines = list(pool.map(one, tasks))
    else:
        lines = [one(t) for t in tasks]
    print("\n".join(lines))
    return 0


def sample_tasks(tasks: Sequence[Task], n: int | None, seed: int) -> list[Task]:
    """Uniform subset of ``n`` tasks, kept in file order."""
    if n is None or n >= len(tasks):
        return list(tasks)
    if n < 1:
        raise ConfigError("--sample must be at least 1")
    picked = sorted(random.Random(seed).sample(range(len(tasks)), n))
    return [tasks[i] for i in picked]


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    try:
        tasks = sample_tasks(load_tasks(args.benchmark), args.sample, args.seed)
    except FileNotFoundError:
        raise ConfigError(f"benchmark file {args.benchmark} does not exist")
    base = cfg.agent_config()
    T_values = args.T_values if args.T_values else [base.budget.max_iterations]
    search = cfg.search_backend()
    actor, evaluator = cfg.gateways()

    def run_one(task: Task, T: int, trial: int) -> bool:
        agent_cfg = with_seed(replace(base, budget=replace(base.budget, max_iterations=T)), trial)
        return Agent(search, actor, evaluator, agent_cfg).run_task(task).outcome == "success"

    if args.trials < 3:
        print(f"pass@3 needs at least 3 trials per task (got --trials {args.trials}); reporting pass@1 only",
              file=sys.stderr)
    rows = ablation_harness(tasks, T_values, run_one, args.trials, int(cfg.get("bench", "workers")))
    table = ablation_csv(rows) if args.format == "csv" else render_ablation_table(rows)
    print(table.rstrip("\n"))
    if args.csv:
        atomic_write_text(args.csv, ablation_csv(rows))
    return 0


def cmd_probe(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    budget = cfg.agent_config().budget
    if budget.max_iterations == 0:
        report = GuidanceReport(args.query)
    else:
        search = cfg.search_backend()
        _, evaluator = cfg.gateways()
        dec = cfg.decoding()
        engine = ProbeEngine(search, QrasScorer(evaluator, dec), evaluator, cfg=dec,
                             probe_k=int(cfg.get("probe", "probe_k")), workers=int(cfg.get("probe", "workers")))
        _, report = engine.wedas_search(SearchQuery(args.query, args.k), budget)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    else:
        print(report.render() or f"no guidance for {args.query!r} (iterations run: {report.iterations_run})")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.verbose:
        _load_config(args)
    summaries = []
    for item in args.inputs:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = Path(item).name or "run", item
        if not Path(path).exists():
            raise ConfigError(f"trajectory path {path} does not exist")
        trajectories, malformed = load_trajectories(path)
        if malformed:
            print(f"{path}: skipped {malformed} malformed line(s)", file=sys.stderr)
        split = split_by_outcome(trajectories)
        if split.excluded_unknown:
            print(f"{path}: excluded {split.excluded_unknown} trajectory(ies) with unknown outcome", file=sys.stderr)
        summaries.append(summarize_metrics(split, label))
    if args.format == "csv":
        print(means_csv(summaries).rstrip("\n"))
    else:
        print(render_alignment_table(summaries))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "means.csv", means_csv(summaries))
        atomic_write_text(out / "histogram.csv", histogram_csv(summaries))
    return 0


def cmd_simulate_eig(args: argparse.Namespace) -> int:
    if args.verbose:
        _load_config(args)
    try:
        model = ToyModel.load(args.model_file)
    except FileNotFoundError:
        raise ConfigError(f"model file {args.model_file} does not exist")
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {args.model_file}: {exc}") from exc
    report = eig_bound_check(model, args.query)
    if args.format == "json":
        print(json.dumps({
            "model": report.model,
            "delta_max": report.delta_max,
            "holds": report.holds,
            "queries": [q.__dict__ for q in report.queries],
            "checks": report.checks,
        }, indent=2))
    else:
        print(report.render())
    return 0 if report.holds else 2


def cmd_config_check(args: argparse.Namespace) -> int:
    cfg = CliConfig.load(args.config, flags=_flags(args))
    print(cfg.dumps())
    return 0


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "probe": cmd_probe,
    "analyze": cmd_analyze,
    "simulate-eig": cmd_simulate_eig,
    "config-check": cmd_config_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WedasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
