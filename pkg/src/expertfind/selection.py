"""Candidate expert selection for one incoming question.

For every layer the question touches, two sorted expert lists are built
(betweenness for the network method, merged BM25 for the content method).
Each list is scanned until the modelled probability of getting no answer
drops to ``alpha``; the collected experts then seed weighted random walks
that can discover further experts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .centrality import CentralityTable
from .ingest import Question
from .mlg import Layer, MultiLayerGraph
from .retrieval import InvertedIndex, RankedQuestions, bm25_query, content_order, tag_tokens, text_tokens

MODES = ("full", "network_only", "content_only", "no_random_walk")
METHODS = ("network", "content")


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.001
    walks_per_expert: int = 5
    walk_steps: int = 10
    top_n_retrieval: int = 1000
    rng_seed: int = 0
    mode: str = "full"
    tag_first: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.walks_per_expert < 0 or self.walk_steps < 0:
            raise ValueError("walk counts must be >= 0")
        if self.top_n_retrieval < 1:
            raise ValueError("top_n_retrieval must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def methods(self) -> tuple[str, ...]:
        if self.mode == "network_only":
            return ("network",)
        if self.mode == "content_only":
            return ("content",)
        return METHODS

    @property
    def walks_enabled(self) -> bool:
        return self.mode != "no_random_walk" and self.walks_per_expert > 0 and self.walk_steps > 0


@dataclass
class TraceEntry:
    steps: int
    visit_count: int
    in_collection: bool


@dataclass
class Collection:
    selected: list[int]
    p: float
    p_history: list[float]


@dataclass
class CandidateSet:
    query_id: int
    initial: dict = field(default_factory=dict)     # (layer, method) -> D_i
    traces: dict = field(default_factory=dict)      # (layer, method) -> {expert: TraceEntry}
    layers_used: list[int] = field(default_factory=list)
    fallback: bool = False
    tag_results: RankedQuestions | None = None
    text_results: RankedQuestions | None = None

    @property
    def candidates(self) -> list[int]:
        return sorted({u for tr in self.traces.values() for u in tr})

    def layers_of_candidate(self, user_id) -> list[int]:
        return sorted({lid for (lid, _), tr in self.traces.items() if user_id in tr})

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "layers_used": self.layers_used,
            "fallback": self.fallback,
            "candidates": self.candidates,
            "initial": [{"layer": l, "method": m, "experts": d}
                        for (l, m), d in sorted(self.initial.items())],
            "traces": [{"layer": l, "method": m, "expert": u, "steps": e.steps,
                        "visit_count": e.visit_count, "in_collection": e.in_collection}
                       for (l, m), tr in sorted(self.traces.items()) for u, e in sorted(tr.items())],
        }


def collect(sorted_experts: Sequence[int], layer: Layer, alpha: float) -> Collection:
    """Scan in order, multiplying ``p`` by ``1 - mu_u``, until ``p <= alpha``."""
    p = 1.0
    selected: list[int] = []
    history: list[float] = []
    for u in sorted_experts:
        mu = float(layer.mu[layer.pos(u)])
        selected.append(int(u))
        p *= 1.0 - mu
        history.append(p)
        if p <= alpha:
            break
    return Collection(selected, p, history)


def walk_uniforms(seed: int, key: Sequence[int], n_starts: int, walks: int, steps: int) -> np.ndarray:
    """Independent uniform draws per start node, keyed by ``(*key, start_index)``."""
    out = np.empty((n_starts, walks, steps))
    for i in range(n_starts):
        ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key) + (i,))
        out[i] = np.random.Generator(np.random.PCG64(ss)).random((walks, steps))
    return out


def random_walk_explore(layer: Layer, starts: Sequence[int], cfg: SelectionConfig,
                        rng: np.random.Generator | None = None, key: Sequence[int] = ()):
    """Weighted walks from ``starts``; returns per-node (visits, first step)
    over *all* layer nodes, expert or not, as positional arrays."""
    n_starts = len(starts)
    shape = (n_starts, cfg.walks_per_expert, cfg.walk_steps)
    if rng is not None:
        u = rng.random(shape)
    else:
        u = walk_uniforms(cfg.rng_seed, key, *shape)
    pos = np.array([layer.pos(s) for s in starts], dtype=np.int64)
    return kernels.random_walks(layer.indptr, layer.indices, layer.cumw, pos, u)


def _run_method(layer: Layer, ordered: Sequence[int], cfg: SelectionConfig, key) -> tuple[list[int], dict]:
    col = collect(ordered, layer, cfg.alpha)
    trace = {u: TraceEntry(i + 1, 1, True) for i, u in enumerate(col.selected)}
    if cfg.walks_enabled and col.selected:
        visits, first = random_walk_explore(layer, col.selected, cfg, key=key)
        scanned = len(col.selected)
        for j in np.flatnonzero((visits > 0) & layer.is_expert):
            u = int(layer.nodes[j])
            if u in trace:
                trace[u].visit_count += int(visits[j])
            else:
                trace[u] = TraceEntry(scanned + int(first[j]), int(visits[j]), False)
    return col.selected, trace


def retrieve(question: Question, tag_index: InvertedIndex, text_index: InvertedIndex,
             top_n: int, exclude=()) -> tuple[RankedQuestions, RankedQuestions]:
    return (bm25_query(tag_index, tag_tokens(question), top_n, exclude),
            bm25_query(text_index, text_tokens(question), top_n, exclude))


def select_candidates(question: Question, mlg: MultiLayerGraph,
                      indexes: tuple[InvertedIndex, InvertedIndex],
                      centralities: Sequence[CentralityTable], cfg: SelectionConfig,
                      exclude_self: bool = False) -> CandidateSet:
    """Run the network and/or content pipeline in every layer of ``question``.

    ``exclude_self`` drops the question's own document from retrieval, used
    when the question is itself part of the indexed history.
    """
    lids = sorted(mlg.layers_of(question.tags))
    cs = CandidateSet(question.id, layers_used=lids)
    methods = cfg.methods
    if not lids:
        lids = [L.layer_id for L in mlg.layers]
        cs.layers_used = lids
        cs.fallback = True
        methods = ("content",)

    exclude = (question.id,) if exclude_self else ()
    cs.tag_results, cs.text_results = retrieve(question, *indexes, cfg.top_n_retrieval, exclude)

    for lid in lids:
        layer = mlg.layers[lid]
        for m in methods:
            if m == "network":
                ordered = centralities[lid].expert_order.tolist()
            else:
                ordered = content_order(cs.tag_results, cs.text_results, layer, cfg.tag_first)
            key = (question.id, lid, METHODS.index(m))
            cs.initial[(lid, m)], cs.traces[(lid, m)] = _run_method(layer, ordered, cfg, key)
    return cs
