"""Exact expected-information-gain checks on small discrete models.

A toy model draws a hidden answer ``a`` from a prior, a relevance bit ``z``
with probability ``p_relevant`` (independent of ``a``), and an observation
``o``: from ``signal[a]`` when ``z = 1``, from ``noise`` (the same for every
answer) when ``z = 0``. Noise therefore never moves the posterior, and the
expected information gain of a query is at most ``delta_max`` times its
expected relevance whenever every relevant observation shifts the posterior by
at most ``delta_max``.

All probabilities are enumerated with exact rationals; only the logarithms in
KL divergences and entropies are evaluated in floating point (natural log).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .errors import ModelError

NORMALIZATION_TOL = 1e-12
BOUND_TOL = 1e-9
MAX_JOINT_OUTCOMES = 10_000
LOG_BASE = "natural log (nats)"


@dataclass(frozen=True)
class QueryModel:
    p_relevant: float
    noise: tuple[float, ...]
    signal: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class ToyModel:
    answers: tuple[str, ...]
    prior: tuple[float, ...]
    observations: tuple[str, ...]
    queries: dict[str, QueryModel]
    delta_max: float
    name: str = "toy"

    def __post_init__(self):
        _check_distribution("prior", self.prior, len(self.answers))
        if not self.delta_max > 0:
            raise ModelError("delta_max must be positive")
        if not self.queries:
            raise ModelError("model defines no queries")
        for q, qm in self.queries.items():
            if not 0.0 <= qm.p_relevant <= 1.0:
                raise ModelError(f"query {q!r}: p_relevant={qm.p_relevant} outside [0, 1]")
            _check_distribution(f"query {q!r} noise", qm.noise, len(self.observations))
            if len(qm.signal) != len(self.answers):
                raise ModelError(f"query {q!r}: signal needs one row per answer")
            for a, row in zip(self.answers, qm.signal):
                _check_distribution(f"query {q!r} signal[{a}]", row, len(self.observations))
        joint = len(self.answers) * 2 * len(self.observations)
        if joint > MAX_JOINT_OUTCOMES:
            raise ModelError(f"{joint} joint outcomes exceeds the enumeration limit {MAX_JOINT_OUTCOMES}")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToyModel":
        queries = {
            q: QueryModel(
                float(v["p_relevant"]),
                tuple(float(x) for x in v["noise"]),
                tuple(tuple(float(x) for x in row) for row in v["signal"]),
            )
            for q, v in d["queries"].items()
        }
        return cls(
            tuple(d["answers"]),
            tuple(float(x) for x in d["prior"]),
            tuple(d["observations"]),
            queries,
            float(d["delta_max"]),
            d.get("name", "toy"),
        )

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "ToyModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "answers": list(self.answers),
            "prior": list(self.prior),
            "observations": list(self.observations),
            "delta_max": self.delta_max,
            "queries": {
                q: {"p_relevant": m.p_relevant, "noise": list(m.noise), "signal": [list(r) for r in m.signal]}
                for q, m in self.queries.items()
            },
        }


def _check_distribution(label: str, values: Sequence[float], size: int) -> None:
    if len(values) != size:
        raise ModelError(f"{label}: expected {size} entries, got {len(values)}")
    if any(not (v >= 0.0) for v in values):
        raise ModelError(f"{label}: negative or NaN probability")
    total = math.fsum(values)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ModelError(f"{label}: sums to {total!r}, not 1")


def _exact(values: Sequence[float]) -> list[Fraction]:
    xs = [Fraction(v) for v in values]
    total = sum(xs, Fraction(0))
    return [x / total for x in xs]


def kl_divergence(p: Sequence[Fraction], q: Sequence[Fraction]) -> float:
    """KL(p || q) in nats; exactly 0.0 when p == q term by term."""
    terms = []
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi == 0:
            return math.inf
        ratio = pi / qi
        terms.append(0.0 if ratio == 1 else float(pi) * math.log(ratio))
    return math.fsum(terms)


def entropy(p: Sequence[Fraction]) -> float:
    return -math.fsum(float(pi) * math.log(pi) for pi in p if pi > 0)


@dataclass(frozen=True)
class QueryReport:
    query: str
    eig: float
    mutual_information: float
    expected_relevance: float
    bound: float
    max_delta_relevant: float
    max_delta_noise: float
    holds: bool


@dataclass
class EigReport:
    model: str
    delta_max: float
    queries: list[QueryReport] = field(default_factory=list)
    checks: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(q.holds for q in self.queries)

    def render(self) -> str:
        lines = [
            f"model: {self.model}  (KL and entropy in {LOG_BASE})",
            f"delta_max: {self.delta_max:.12g}",
            f"{'query':<24}{'EIG':>14}{'E[P(z=1|o)]':>14}{'bound':>14}  holds",
        ]
        for q in self.queries:
            lines.append(
                f"{q.query:<24}{q.eig:>14.9f}{q.expected_relevance:>14.9f}{q.bound:>14.9f}  {'yes' if q.holds else 'NO'}"
            )
        lines.extend(f"check: {c}" for c in self.checks)
        lines.append("bound holds" if self.holds else "BOUND VIOLATED")
        return "\n".join(lines)


def _query_tables(model: ToyModel, qm: QueryModel):
    prior = _exact(model.prior)
    noise = _exact(qm.noise)
    signal = [_exact(row) for row in qm.signal]
    rho = Fraction(qm.p_relevant)
    n_a, n_o = len(prior), len(noise)
    # joint[z][a][o]
    joint = [
        [[prior[a] * (1 - rho) * noise[o] for o in range(n_o)] for a in range(n_a)],
        [[prior[a] * rho * signal[a][o] for o in range(n_o)] for a in range(n_a)],
    ]
    return prior, joint


def relevant_shifts(model: ToyModel, query: str) -> list[tuple[str, float]]:
    """Posterior shift KL(P(a|o,z=1) || prior) for every reachable relevant observation."""
    prior, joint = _query_tables(model, model.queries[query])
    out = []
    for o, name in enumerate(model.observations):
        col = [joint[1][a][o] for a in range(len(prior))]
        mass = sum(col, Fraction(0))
        if mass > 0:
            out.append((name, kl_divergence([c / mass for c in col], prior)))
    return out


def validate_shift_bound(model: ToyModel) -> None:
    """Reject models where a relevant observation shifts the posterior by more than delta_max."""
    bad = []
    for q in model.queries:
        for o, delta in relevant_shifts(model, q):
            if delta > model.delta_max + NORMALIZATION_TOL:
                bad.append(f"query {q!r}, observation {o!r}: shift {delta:.12g} > delta_max {model.delta_max:.12g}")
    if bad:
        raise ModelError("posterior-shift bound violated:\n  " + "\n  ".join(bad))


def query_report(model: ToyModel, query: str) -> QueryReport:
    prior, joint = _query_tables(model, model.queries[query])
    n_a, n_o = len(prior), len(model.observations)
    eig_terms, mi_terms, rel_terms = [], [], []
    max_rel, max_noise = 0.0, 0.0
    for o in range(n_o):
        by_z = [[joint[z][a][o] for a in range(n_a)] for z in (0, 1)]
        p_o = sum(by_z[0], Fraction(0)) + sum(by_z[1], Fraction(0))
        if p_o == 0:
            continue
        posterior = [(by_z[0][a] + by_z[1][a]) / p_o for a in range(n_a)]
        p_rel = sum(by_z[1], Fraction(0)) / p_o
        eig_terms.append(float(p_o) * kl_divergence(posterior, prior))
        mi_terms.append(float(p_o) * entropy(posterior))
        rel_terms.append(p_o * p_rel)
        for z in (0, 1):
            mass = sum(by_z[z], Fraction(0))
            if mass == 0:
                continue
            shift = kl_divergence([x / mass for x in by_z[z]], prior)
            if z:
                max_rel = max(max_rel, shift)
            else:
                max_noise = max(max_noise, shift)
    eig = math.fsum(eig_terms)
    mi = entropy(prior) - math.fsum(mi_terms)
    relevance = float(sum(rel_terms, Fraction(0)))
    bound = model.delta_max * relevance
    return QueryReport(query, eig, mi, relevance, bound, max_rel, max_noise, eig <= bound + BOUND_TOL)


def eig_bound_check(model: ToyModel, queries: Sequence[str] | None = None) -> EigReport:
    """Enumerate every query exactly and compare EIG with delta_max * E[P(z=1|o)].

    Raises ModelError before any checking if a relevant observation's
    posterior shift exceeds ``delta_max``.
    """
    validate_shift_bound(model)
    names = list(queries) if queries is not None else list(model.queries)
    report = EigReport(model.name, model.delta_max)
    for q in names:
        if q not in model.queries:
            raise ModelError(f"unknown query {q!r}")
        r = query_report(model, q)
        report.queries.append(r)
        report.checks.append(f"{q}: EIG >= 0 {'ok' if r.eig >= 0 else 'FAILED'}")
        report.checks.append(
            f"{q}: KL form agrees with mutual information "
            f"{'ok' if abs(r.eig - r.mutual_information) <= BOUND_TOL else 'FAILED'}"
        )
        report.checks.append(f"{q}: noise shift {r.max_delta_noise:.3g} (0 by construction)")
        if model.queries[q].p_relevant == 0:
            report.checks.append(f"{q}: never relevant, EIG == 0 {'ok' if r.eig == 0 else 'FAILED'}")
    return report


def sample_model(rng: np.random.Generator, name: str = "sampled") -> ToyModel:
    """Draw a random model that satisfies every structural assumption."""
    n_a = int(rng.integers(2, 6))
    n_o = int(rng.integers(2, 7))
    n_q = int(rng.integers(1, 4))

    def simplex(n: int, alpha: float) -> tuple[float, ...]:
        x = rng.dirichlet([alpha] * n)
        x = [float(v) for v in x]
        # push the rounding residue into the largest entry so the sum is 1 to float precision
        i = max(range(n), key=lambda j: x[j])
        x[i] = 1.0 - math.fsum(x[:i] + x[i + 1 :])
        return tuple(x)

    queries = {}
    for qi in range(n_q):
        queries[f"q{qi}"] = QueryModel(
            float(rng.uniform(0.0, 1.0)),
            simplex(n_o, 1.0),
            tuple(simplex(n_o, float(rng.choice([0.3, 1.0, 3.0]))) for _ in range(n_a)),
        )
    base = ToyModel(
        tuple(f"a{i}" for i in range(n_a)),
        simplex(n_a, 2.0),
        tuple(f"o{i}" for i in range(n_o)),
        queries,
        1.0,
        name,
    )
    worst = max(d for q in queries for _, d in relevant_shifts(base, q))
    delta_max = max(worst, 1e-6) * (1.0 + 0.5 * float(rng.random()))
    return ToyModel(base.answers, base.prior, base.observations, queries, delta_max, name)
