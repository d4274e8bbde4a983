"""Feature vectors for (question, candidate expert) pairs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .centrality import CentralityTable
from .ingest import Dataset, Question, UserStats
from .mlg import MultiLayerGraph
from .retrieval import RankedQuestions
from .selection import CandidateSet

STATIC = ("Reputation", "Answers", "AcceptedAnswers", "Ratio", "AvgActivity", "StdActivity")
QUERY_DEPENDENT = (
    "LayerCount", "QueryKnowledge", "VisitCountContent", "VisitCountNetwork",
    "StepsContent", "StepsNetwork", "BetweennessPos", "BetweennessScore",
    "ScoreIndexTag", "ScoreIndexText", "FrequencyIndexTag", "FrequencyIndexText",
    "Eigenvector", "PageRank", "Closeness", "Degree", "AvgWeights",
)
FEATURE_NAMES = STATIC + QUERY_DEPENDENT

NETWORK_FEATURES = STATIC + (
    "LayerCount", "QueryKnowledge", "VisitCountNetwork", "StepsNetwork", "BetweennessPos",
    "BetweennessScore", "Eigenvector", "PageRank", "Closeness", "Degree", "AvgWeights",
)
CONTENT_FEATURES = STATIC + (
    "LayerCount", "QueryKnowledge", "VisitCountContent", "StepsContent", "ScoreIndexTag",
    "ScoreIndexText", "FrequencyIndexTag", "FrequencyIndexText", "Degree", "AvgWeights",
)

SENTINEL = 1e6
HOUR = 3600.0


@dataclass
class FeatureMatrix:
    query_id: int
    experts: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(self.query_id, self.experts, self.X[:, idx], tuple(names))


def activity_stats(train: Dataset) -> dict[int, tuple[float, float]]:
    """Mean and std-dev of hours between a user's consecutive answers."""
    times: dict[int, list[float]] = {}
    for a in train.answers.values():
        times.setdefault(a.owner_user_id, []).append(a.creation_ts)
    out = {}
    for u, ts in times.items():
        if len(ts) < 2:
            out[u] = (SENTINEL, SENTINEL)
            continue
        gaps = np.diff(np.sort(ts)) / HOUR
        out[u] = (float(gaps.mean()), float(gaps.std()))
    return out


def _retrieval_totals(results: RankedQuestions | None) -> dict[int, tuple[float, int]]:
    if results is None or len(results) == 0:
        return {}
    experts, inv = np.unique(results.experts, return_inverse=True)
    sums = np.bincount(inv, weights=results.scores)
    counts = np.bincount(inv)
    return {int(u): (float(s), int(c)) for u, s, c in zip(experts, sums, counts)}


def static_features(user: UserStats, activity: Mapping[int, tuple[float, float]]) -> list[float]:
    avg, std = activity.get(user.user_id, (SENTINEL, SENTINEL))
    ratio = user.accepted / user.answers if user.answers else 0.0
    return [float(user.reputation), float(user.answers), float(user.accepted), ratio, avg, std]


def extract_features(question: Question, cs: CandidateSet, mlg: MultiLayerGraph,
                     centralities: Sequence[CentralityTable], users: Mapping[int, UserStats],
                     activity: Mapping[int, tuple[float, float]],
                     retrieval_results: tuple[RankedQuestions, RankedQuestions] | None = None
                     ) -> FeatureMatrix:
    """One 23-column row per candidate, in ascending expert-id order.

    Values from different layers are combined with max for centrality
    scores, min for steps and positions, and sum for everything else.
    Retrieval features are per query, so they are not multiplied by layer.
    """
    tag_res, text_res = retrieval_results or (cs.tag_results, cs.text_results)
    tag_tot = _retrieval_totals(tag_res)
    text_tot = _retrieval_totals(text_res)
    cands = cs.candidates
    X = np.zeros((len(cands), len(FEATURE_NAMES)))
    col = {n: i for i, n in enumerate(FEATURE_NAMES)}

    for r, u in enumerate(cands):
        row = X[r]
        row[:len(STATIC)] = static_features(users[u], activity)
        lids = cs.layers_of_candidate(u)
        row[col["LayerCount"]] = len(lids)
        steps = {"network": SENTINEL, "content": SENTINEL}
        visits = {"network": 0, "content": 0}
        bpos = SENTINEL
        for lid in lids:
            layer, table = mlg.layers[lid], centralities[lid]
            j = layer.pos(u)
            row[col["QueryKnowledge"]] += layer.answers_in_layer[j] / layer.accepted_in_layer[j]
            for m in ("network", "content"):
                e = cs.traces.get((lid, m), {}).get(u)
                if e is not None:
                    visits[m] += e.visit_count
                    steps[m] = min(steps[m], e.steps)
            bpos = min(bpos, table.betweenness_rank[u])
            row[col["BetweennessScore"]] = max(row[col["BetweennessScore"]], table.betweenness[j])
            row[col["Eigenvector"]] = max(row[col["Eigenvector"]], table.eigenvector[j])
            row[col["PageRank"]] = max(row[col["PageRank"]], table.pagerank[j])
            row[col["Closeness"]] = max(row[col["Closeness"]], table.closeness[j])
            row[col["Degree"]] += table.degree[j]
            row[col["AvgWeights"]] += table.avg_weight[j]
        row[col["VisitCountNetwork"]] = visits["network"]
        row[col["VisitCountContent"]] = visits["content"]
        row[col["StepsNetwork"]] = steps["network"]
        row[col["StepsContent"]] = steps["content"]
        row[col["BetweennessPos"]] = bpos
        row[col["ScoreIndexTag"]], row[col["FrequencyIndexTag"]] = tag_tot.get(u, (0.0, 0))
        row[col["ScoreIndexText"]], row[col["FrequencyIndexText"]] = text_tot.get(u, (0.0, 0))
    return FeatureMatrix(question.id, np.array(cands, dtype=np.int64), X)


def write_feature_table(path, rows: Sequence[tuple[int, int, int, np.ndarray]],
                        names: Sequence[str] = FEATURE_NAMES) -> None:
    """Columnar text export: ``path`` holds a header plus one row per pair;
    ``path.groups`` holds the matching query id, expert id and label."""
    path = Path(path)
    with path.open("w") as fh, Path(f"{path}.groups").open("w") as gh:
        fh.write("\t".join(names) + "\n")
        gh.write("query_id\texpert_id\tlabel\n")
        for qid, uid, label, x in rows:
            fh.write("\t".join(repr(float(v)) for v in x) + "\n")
            gh.write(f"{qid}\t{uid}\t{label}\n")


def read_feature_table(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    path = Path(path)
    lines = path.read_text().splitlines()
    names = lines[0].split("\t")
    X = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]]).reshape(-1, len(names))
    groups = np.array([[int(v) for v in ln.split("\t")]
                       for ln in Path(f"{path}.groups").read_text().splitlines()[1:]],
                      dtype=np.int64).reshape(-1, 3)
    return names, X, groups
