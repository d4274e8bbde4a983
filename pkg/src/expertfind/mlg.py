"""Multi-layer user graph: one layer per tag cluster.

A layer admits users with at least ``eps`` accepted answers on questions of
that layer, describes each by a tag-indexed topic vector, and links users
whose vectors have cosine similarity >= ``delta``.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse

from .ingest import Dataset
from .store import read_arrays, write_arrays
from .topics import TagClustering

logger = logging.getLogger(__name__)

_SLACK = 1e-12


@dataclass
class Layer:
    layer_id: int
    nodes: np.ndarray              # sorted user ids
    tags: list[str]                # topic-vector coordinates
    vectors: sparse.csr_matrix     # len(nodes) x len(tags)
    indptr: np.ndarray             # symmetric CSR adjacency
    indices: np.ndarray
    weights: np.ndarray
    is_expert: np.ndarray
    answers_in_layer: np.ndarray   # all answers on this layer's questions
    accepted_in_layer: np.ndarray
    mu: np.ndarray                 # acceptance ratio x relative layer activity
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {int(u): i for i, u in enumerate(self.nodes)}
        self.cumw = np.cumsum(self.weights)

    def __len__(self) -> int:
        return int(self.nodes.size)

    def __contains__(self, user_id) -> bool:
        return user_id in self._pos

    def pos(self, user_id) -> int:
        return self._pos[user_id]

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, user_id) -> dict[int, float]:
        i = self._pos[user_id]
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return {int(self.nodes[j]): float(w) for j, w in zip(self.indices[lo:hi], self.weights[lo:hi])}

    def edges(self) -> Iterable[tuple[int, int, float]]:
        for i in range(len(self)):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                j = self.indices[p]
                if i < j:
                    yield int(self.nodes[i]), int(self.nodes[j]), float(self.weights[p])

    def topic_vector(self, user_id) -> dict[str, float]:
        row = self.vectors.getrow(self._pos[user_id])
        return {self.tags[j]: float(v) for j, v in zip(row.indices, row.data)}

    def expert_nodes(self) -> np.ndarray:
        return self.nodes[self.is_expert]


@dataclass
class MultiLayerGraph:
    layers: list[Layer]
    clustering: TagClustering
    eps: int
    delta: float
    lam: int

    def layers_of(self, tags: Iterable[str]) -> set[int]:
        return layers_of(tags, self.clustering)


def layers_of(question_tags: Iterable[str], clustering: TagClustering) -> set[int]:
    return {clustering.assignment[t] for t in question_tags if t in clustering.assignment}


def _adjacency(n: int, src: np.ndarray, dst: np.ndarray, w: np.ndarray):
    a = sparse.coo_matrix((np.r_[w, w], (np.r_[src, dst], np.r_[dst, src])), shape=(n, n)).tocsr()
    a.sort_indices()
    return a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data.astype(np.float64)


def similarity_edges(vectors: sparse.csr_matrix, delta: float):
    """Upper-triangle pairs with cosine >= delta (and > 0), weights clipped to 1."""
    v = sparse.csr_matrix(vectors, dtype=np.float64)
    norms = np.sqrt(np.asarray(v.multiply(v).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    unit = sparse.diags(inv) @ v
    sim = sparse.triu(unit @ unit.T, k=1).tocoo()
    keep = (sim.data >= delta - _SLACK) & (sim.data > 0)
    src, dst = sim.row[keep].astype(np.int64), sim.col[keep].astype(np.int64)
    w = np.clip(sim.data[keep], max(delta, np.finfo(float).tiny), 1.0)
    order = np.lexsort((dst, src))
    return src[order], dst[order], w[order]


def build_mlg(train: Dataset, clustering: TagClustering, eps: int, delta: float,
              experts: Iterable[int] = ()) -> MultiLayerGraph:
    if eps < 1:
        raise ValueError("eps must be >= 1")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    experts = set(experts)
    features = set(clustering.features)
    k = clustering.k

    accepted = [defaultdict(int) for _ in range(k)]
    answered = [defaultdict(int) for _ in range(k)]
    tag_hits = [defaultdict(lambda: defaultdict(int)) for _ in range(k)]
    layered_accepted: dict[int, int] = defaultdict(int)

    q_layers = {qid: layers_of(q.tags, clustering) for qid, q in train.questions.items()}
    for a in train.answers.values():
        for i in q_layers[a.parent_id]:
            answered[i][a.owner_user_id] += 1
    for qid in sorted(train.questions):
        q = train.questions[qid]
        ls = q_layers[qid]
        if not ls:
            continue
        u = train.best_answerer(qid)
        layered_accepted[u] += 1
        for i in ls:
            accepted[i][u] += 1
        for t in q.tags:
            if t in features or t not in clustering.assignment:
                continue
            tag_hits[clustering.assignment[t]][u][t] += 1

    layers = []
    for i in range(k):
        nodes = np.array(sorted(u for u, c in accepted[i].items() if c >= eps), dtype=np.int64)
        tags = [t for t in clustering.tags_of(i) if t not in features]
        col = {t: j for j, t in enumerate(tags)}
        rows, cols, vals = [], [], []
        for r, u in enumerate(nodes.tolist()):
            denom = layered_accepted[u]
            for t, c in sorted(tag_hits[i][u].items()):
                rows.append(r)
                cols.append(col[t])
                vals.append(c / denom)
        vec = sparse.csr_matrix((vals, (rows, cols)), shape=(nodes.size, len(tags)))
        src, dst, w = similarity_edges(vec, delta)
        indptr, indices, weights = _adjacency(nodes.size, src, dst, w)

        ans = np.array([answered[i][u] for u in nodes.tolist()], dtype=np.int64)
        acc = np.array([accepted[i][u] for u in nodes.tolist()], dtype=np.int64)
        ratio = np.array([train.users[u].accepted / train.users[u].answers for u in nodes.tolist()])
        top = ans.max() if ans.size else 1
        mu = ratio * ans / top if top > 0 else np.zeros(nodes.size)
        is_exp = np.array([u in experts for u in nodes.tolist()], dtype=bool)
        layers.append(Layer(i, nodes, tags, vec, indptr, indices, weights, is_exp, ans, acc, mu))
        logger.info("layer %d: %d nodes (%d experts), %d edges",
                    i, nodes.size, int(is_exp.sum()), indices.size // 2)
    return MultiLayerGraph(layers, clustering, eps, delta, len(clustering.features))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_LAYER_ARRAYS = ("nodes", "indptr", "indices", "weights", "is_expert",
                 "answers_in_layer", "accepted_in_layer", "mu")


def save_mlg(g: MultiLayerGraph, path, meta: dict | None = None) -> None:
    arrays = {}
    layer_tags = []
    for L in g.layers:
        for name in _LAYER_ARRAYS:
            arrays[f"{L.layer_id}/{name}"] = getattr(L, name)
        v = L.vectors.tocsr()
        v.sort_indices()
        arrays[f"{L.layer_id}/vec_indptr"] = v.indptr.astype(np.int64)
        arrays[f"{L.layer_id}/vec_indices"] = v.indices.astype(np.int64)
        arrays[f"{L.layer_id}/vec_data"] = v.data.astype(np.float64)
        layer_tags.append(L.tags)
    info = {"eps": g.eps, "delta": g.delta, "lam": g.lam, "layer_tags": layer_tags,
            "clustering": g.clustering.to_json(), "betweenness_weighting": "unweighted",
            **(meta or {})}
    write_arrays(path, arrays, info)


def load_mlg(path) -> tuple[MultiLayerGraph, dict]:
    arrays, meta = read_arrays(path)
    clustering = TagClustering.from_json(meta["clustering"])
    layers = []
    for i, tags in enumerate(meta["layer_tags"]):
        a = {name: arrays[f"{i}/{name}"] for name in _LAYER_ARRAYS}
        vec = sparse.csr_matrix((arrays[f"{i}/vec_data"], arrays[f"{i}/vec_indices"],
                                 arrays[f"{i}/vec_indptr"]), shape=(a["nodes"].size, len(tags)))
        layers.append(Layer(i, a["nodes"], list(tags), vec, a["indptr"], a["indices"],
                            a["weights"], a["is_expert"].astype(bool), a["answers_in_layer"],
                            a["accepted_in_layer"], a["mu"]))
    return MultiLayerGraph(layers, clustering, meta["eps"], meta["delta"], meta["lam"]), meta
