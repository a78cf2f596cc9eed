"""Offline trajectory analytics.

* query/observation alignment split by trajectory outcome, with means and
  20-bin histograms exported as CSV,
* pass@k over repeated trials,
* the probe-iteration ablation harness.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .search_env import textualize
from .text_metrics import AlignmentTriple, CorpusStats, jaccard, nls, normalize, tfidf_cosine
from .trajectory import Task, Trajectory

log = logging.getLogger(__name__)

METRICS = ("tfidf", "jaccard", "nls")
N_BINS = 20
HIST_COLUMNS = ("method", "outcome", "metric", "bin_lo", "bin_hi", "count")
MEANS_COLUMNS = ("method", "outcome", "tfidf_mean", "jaccard_mean", "nls_mean")


@dataclass
class OutcomeSplit:
    success: list[AlignmentTriple] = field(default_factory=list)
    failure: list[AlignmentTriple] = field(default_factory=list)
    excluded_unknown: int = 0


def split_by_outcome(trajectories: Iterable[Trajectory]) -> OutcomeSplit:
    """One alignment triple per search call, grouped by trajectory outcome.

    IDF statistics are fit over every textualized observation in the
    success and failure trajectories together.
    """
    pairs: dict[str, list[tuple[str, str]]] = {"success": [], "failure": []}
    split = OutcomeSplit()
    for traj in trajectories:
        if traj.outcome not in pairs:
            split.excluded_unknown += 1
            continue
        for call in traj.search_calls():
            query = str(call.arguments.get("q", call.result.query.text))
            pairs[traj.outcome].append((query, textualize(call.result).text))
    stats = CorpusStats.fit(normalize(o) for group in pairs.values() for _, o in group)
    for outcome, group in pairs.items():
        target = split.success if outcome == "success" else split.failure
        for q, o in group:
            nq, no = normalize(q), normalize(o)
            target.append(AlignmentTriple(tfidf_cosine(nq, no, stats), jaccard(nq, no), nls(nq, no)))
    return split


@dataclass
class OutcomeSummary:
    count: int
    means: dict[str, float | None]
    histograms: dict[str, list[int]]


@dataclass
class MetricSummary:
    method: str
    outcomes: dict[str, OutcomeSummary]


def bin_index(value: float) -> int:
    return min(N_BINS - 1, max(0, int(value * N_BINS)))


def _summarize(triples: Sequence[AlignmentTriple]) -> OutcomeSummary:
    means: dict[str, float | None] = {}
    hists: dict[str, list[int]] = {}
    for m in METRICS:
        values = [getattr(t, m) for t in triples]
        means[m] = math.fsum(values) / len(values) if values else None
        counts = [0] * N_BINS
        for v in values:
            counts[bin_index(v)] += 1
        hists[m] = counts
    return OutcomeSummary(len(triples), means, hists)


def summarize_metrics(split: OutcomeSplit, method: str = "wedas") -> MetricSummary:
    return MetricSummary(method, {"success": _summarize(split.success), "failure": _summarize(split.failure)})


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(x)


def histogram_csv(summaries: Iterable[MetricSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HIST_COLUMNS)
    for s in summaries:
        for outcome, o in s.outcomes.items():
            for m in METRICS:
                for i, c in enumerate(o.histograms[m]):
                    w.writerow([s.method, outcome, m, repr(i / N_BINS), repr((i + 1) / N_BINS), c])
    return buf.getvalue()


def means_csv(summaries: Iterable[MetricSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MEANS_COLUMNS)
    for s in summaries:
        for outcome, o in s.outcomes.items():
            w.writerow([s.method, outcome, *(_fmt(o.means[m]) for m in METRICS)])
    return buf.getvalue()


def read_means_csv(text: str) -> dict[tuple[str, str], dict[str, float | None]]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[(row["method"], row["outcome"])] = {
            m: (float(row[f"{m}_mean"]) if row[f"{m}_mean"] else None) for m in METRICS
        }
    return out


def read_histogram_csv(text: str) -> dict[tuple[str, str, str], list[int]]:
    out: dict[tuple[str, str, str], list[int]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        out.setdefault((row["method"], row["outcome"], row["metric"]), []).append(int(row["count"]))
    return out


def render_alignment_table(summaries: Iterable[MetricSummary]) -> str:
    lines = [f"{'Method':<12}{'Outcome':<10}{'TF-IDF':>8}{'Jaccard':>9}{'NLS':>8}{'n':>7}"]
    for s in summaries:
        for i, (outcome, o) in enumerate(s.outcomes.items()):
            cells = ["     -" if o.means[m] is None else f"{o.means[m]:.3f}" for m in METRICS]
            label = s.method if i == 0 else ""
            lines.append(
                f"{label:<12}{outcome.capitalize():<10}{cells[0]:>8}{cells[1]:>9}{cells[2]:>8}{o.count:>7}"
            )
    return "\n".join(lines)


# -- pass@k ----------------------------------------------------------------------


@dataclass(frozen=True)
class PassAtK:
    k: int
    n_trials: int
    value: float


def _task_pass(outcomes: Sequence[bool], k: int) -> Fraction:
    n, c = len(outcomes), sum(bool(x) for x in outcomes)
    # probability that a uniformly drawn k-subset of the trials contains a success
    return 1 - Fraction(math.comb(n - c, k), math.comb(n, k))


def pass_at_k(results: Mapping[str, Sequence[bool]] | Sequence[Sequence[bool]], k: int) -> PassAtK:
    """Unbiased pass@k: mean success rate for k=1, any-of-n when k equals the trial count."""
    rows = list(results.values()) if isinstance(results, Mapping) else [list(r) for r in results]
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rows:
        raise ValueError("pass@k needs at least one task")
    n_min = min(len(r) for r in rows)
    if n_min < k:
        raise ValueError(f"pass@{k} needs at least {k} trials per task, got {n_min}")
    value = sum((_task_pass(r, k) for r in rows), Fraction(0)) / len(rows)
    return PassAtK(k, n_min, float(value))


# -- ablation harness ------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    T: int
    pass_at_1: float
    pass_at_3: float | None
    outcomes: dict[str, tuple[bool, ...]]


def ablation_harness(
    tasks: Sequence[Task],
    T_values: Sequence[int],
    run_one: Callable[[Task, int, int], bool],
    trials: int = 3,
    workers: int = 1,
) -> list[AblationRow]:
    """Run every task ``trials`` times per probe budget and tabulate pass@1/pass@3.

    ``run_one(task, T, trial)`` returns whether the run succeeded; any
    exception it raises counts as a failure.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def safe(job: tuple[Task, int, int]) -> bool:
        task, T, trial = job
        try:
            return bool(run_one(task, T, trial))
        except Exception as exc:
            log.warning("run %s T=%d trial=%d failed: %s", task.task_id, T, trial, exc)
            return False

    rows = []
    for T in T_values:
        jobs = [(task, T, trial) for task in tasks for trial in range(trials)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                ok = list(pool.map(safe, jobs))
        else:
            ok = [safe(j) for j in jobs]
        outcomes = {
            task.task_id: tuple(ok[i * trials : (i + 1) * trials]) for i, task in enumerate(tasks)
        }
        p1 = pass_at_k(outcomes, 1).value
        p3 = pass_at_k(outcomes, 3).value if trials >= 3 else None
        rows.append(AblationRow(T, p1, p3, outcomes))
    return rows


def render_ablation_table(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'T':>3}{'pass@1':>10}{'pass@3':>10}"]
    for r in rows:
        p3 = "n/a" if r.pass_at_3 is None else f"{100 * r.pass_at_3:.2f}"
        lines.append(f"{r.T:>3}{100 * r.pass_at_1:>10.2f}{p3:>10}")
    return "\n".join(lines)


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("T", "pass_at_1", "pass_at_3"))
    for r in rows:
        w.writerow((r.T, repr(r.pass_at_1), "" if r.pass_at_3 is None else repr(r.pass_at_3)))
    return buf.getvalue()


__all__ = [
    "AblationRow", "MetricSummary", "OutcomeSplit", "PassAtK", "ablation_csv", "ablation_harness",
    "histogram_csv", "means_csv", "pass_at_k", "read_histogram_csv", "read_means_csv",
    "render_ablation_table", "render_alignment_table", "split_by_outcome", "summarize_metrics",
]
