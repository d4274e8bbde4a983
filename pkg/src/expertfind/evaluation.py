"""Ranking metrics, paired t-tests and run comparison tables."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .ingest import Dataset, Question

METRICS = ("P@1", "NDCG@3", "MRR", "R@100", "Hit@5")
SIGNIFICANCE = 0.05
UP, DOWN = "▲", "▼"


@dataclass
class RunResult:
    rankings: dict[int, list[int]]
    relevant: dict[int, int]

    def __post_init__(self):
        for qid, ranked in self.rankings.items():
            if len(set(ranked)) != len(ranked):
                raise ValueError(f"query {qid}: ranked list has duplicates")


@dataclass
class EvalReport:
    means: dict[str, float]
    per_query: dict[str, np.ndarray]
    query_ids: list[int]

    @property
    def n_queries(self) -> int:
        return len(self.query_ids)

    def to_json(self) -> dict:
        return {"n_queries": self.n_queries, **{m: self.means[m] for m in METRICS}}

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["query_id", *METRICS])
            for i, qid in enumerate(self.query_ids):
                w.writerow([qid, *(repr(float(self.per_query[m][i])) for m in METRICS)])


def _relevant_id(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    items = list(value)
    if len(items) != 1:
        raise ValueError(f"each query needs exactly one relevant expert, got {len(items)}")
    return int(items[0])


def reciprocal_rank_of(rank: int | None) -> float:
    return 0.0 if rank is None else 1.0 / rank


def per_query_metrics(rank: int | None) -> dict[str, float]:
    """Metrics for one query given the 1-based rank of its relevant expert."""
    if rank is None:
        return {m: 0.0 for m in METRICS}
    return {
        "P@1": float(rank == 1),
        "NDCG@3": 1.0 / math.log2(rank + 1) if rank <= 3 else 0.0,
        "MRR": 1.0 / rank,
        "R@100": float(rank <= 100),
        "Hit@5": float(rank <= 5),
    }


def compute_metrics(run: RunResult) -> EvalReport:
    qids = sorted(run.rankings)
    if set(qids) != set(run.relevant):
        raise ValueError("rankings and relevance judgements cover different queries")
    ranks = np.zeros(len(qids))
    for i, qid in enumerate(qids):
        rel = _relevant_id(run.relevant[qid])
        ranked = np.asarray(run.rankings[qid])
        hit = np.flatnonzero(ranked == rel)
        ranks[i] = hit[0] + 1 if hit.size else np.inf
    found = np.isfinite(ranks)
    safe = np.where(found, ranks, 1.0)
    per = {
        "P@1": (ranks == 1).astype(float),
        "NDCG@3": np.where(ranks <= 3, 1.0 / np.log2(safe + 1.0), 0.0),
        "MRR": np.where(found, 1.0 / safe, 0.0),
        "R@100": (ranks <= 100).astype(float),
        "Hit@5": (ranks <= 5).astype(float),
    }
    means = {m: float(per[m].mean()) if qids else 0.0 for m in METRICS}
    return EvalReport(means, per, qids)


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired Student t-test p-value.

    With zero variance of the differences the p-value is 1 when the means
    agree and 0 otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass
class ComparisonTable:
    baseline: str
    rows: dict[str, dict[str, float]]
    markers: dict[str, dict[str, str]]
    p_values: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_text(self, metrics: Sequence[str] = METRICS) -> str:
        width = max(len(n) for n in self.rows) + 2
        head = " " * width + "".join(f"{m:>10}" for m in metrics)
        lines = [head, "-" * len(head)]
        for name, vals in self.rows.items():
            cells = "".join(f"{vals[m]:>9.3f}{self.markers[name][m] or ' '}" for m in metrics)
            lines.append(f"{name:<{width}}{cells}")
        lines.append(f"{UP}/{DOWN}: paired t-test vs {self.baseline}, p < {SIGNIFICANCE}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"baseline": self.baseline, "rows": self.rows, "markers": self.markers,
                "p_values": self.p_values}


def compare_runs(runs: Mapping[str, RunResult | EvalReport], baseline_name: str) -> ComparisonTable:
    reports = {n: r if isinstance(r, EvalReport) else compute_metrics(r) for n, r in runs.items()}
    if baseline_name not in reports:
        raise KeyError(baseline_name)
    base = reports[baseline_name]
    for name, rep in reports.items():
        if rep.query_ids != base.query_ids:
            raise ValueError(f"run {name!r} covers a different query set than {baseline_name!r}")
    rows, markers, pvals = {}, {}, {}
    for name, rep in reports.items():
        rows[name] = dict(rep.means)
        markers[name] = {m: "" for m in METRICS}
        pvals[name] = {}
        if name == baseline_name or rep.n_queries < 2:
            continue
        for m in METRICS:
            p = paired_ttest(rep.per_query[m], base.per_query[m])
            pvals[name][m] = p
            diff = rep.means[m] - base.means[m]
            if p < SIGNIFICANCE and diff != 0.0:
                markers[name][m] = UP if diff > 0 else DOWN
    return ComparisonTable(baseline_name, rows, markers, pvals)


def test_queries(test: Dataset, experts: Iterable[int], limit: int | None = None) -> list[Question]:
    """Test questions, oldest first, whose accepted answerer is an expert."""
    experts = set(experts)
    out = [test.questions[q] for q in test.ordered_question_ids() if test.best_answerer(q) in experts]
    return out[:limit] if limit else out


test_queries.__test__ = False


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
