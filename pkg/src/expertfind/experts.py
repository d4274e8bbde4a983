"""Expert identification by accepted-answer volume and acceptance ratio."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

from .ingest import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpertSet:
    beta: int
    candidates: frozenset
    mean_ratio: float
    experts: frozenset
    ratios: dict

    def __contains__(self, user_id) -> bool:
        return user_id in self.experts

    def __len__(self) -> int:
        return len(self.experts)


def identify_experts(train: Dataset, beta: int) -> ExpertSet:
    """Users with >= ``beta`` accepted answers whose acceptance ratio beats the
    candidates' mean ratio (strictly)."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    cand = sorted(u.user_id for u in train.users.values() if u.accepted >= beta)
    if not cand:
        raise ValueError(f"no user has >= {beta} accepted answers; try a smaller beta")
    ratios = {u: train.users[u].accepted / train.users[u].answers for u in cand}
    mean_ratio = sum(ratios.values()) / len(ratios)
    experts = frozenset(u for u in cand if ratios[u] > mean_ratio)
    if not experts:
        warnings.warn("expert set is empty: no candidate has a ratio above the mean "
                      f"({len(cand)} candidate(s))", RuntimeWarning, stacklevel=2)
    logger.info("beta=%d: %d candidates, %d experts, mean ratio %.4f",
                beta, len(cand), len(experts), mean_ratio)
    return ExpertSet(beta, frozenset(cand), mean_ratio, experts, ratios)


def save_experts(es: ExpertSet, train: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for u in sorted(es.candidates):
            st = train.users[u]
            fh.write(json.dumps({"user_id": u, "accepted": st.accepted, "total": st.answers,
                                 "ratio": es.ratios[u], "is_expert": u in es.experts},
                                sort_keys=True) + "\n")


def load_experts(path, beta: int) -> ExpertSet:
    rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    ratios = {r["user_id"]: r["ratio"] for r in rows}
    mean = sum(ratios.values()) / len(ratios) if ratios else 0.0
    return ExpertSet(beta, frozenset(ratios), mean,
                     frozenset(r["user_id"] for r in rows if r["is_expert"]), ratios)
