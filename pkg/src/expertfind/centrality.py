"""Per-layer node centralities used for sorting and as ranking features."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernels
from .mlg import Layer, MultiLayerGraph
from .store import read_arrays, write_arrays

logger = logging.getLogger(__name__)

TOL = 1e-8
MAX_ITER = 1000
DAMPING = 0.85


@dataclass
class CentralityTable:
    layer_id: int
    nodes: np.ndarray
    betweenness: np.ndarray
    eigenvector: np.ndarray
    pagerank: np.ndarray
    closeness: np.ndarray
    degree: np.ndarray
    avg_weight: np.ndarray
    expert_order: np.ndarray       # expert ids, highest betweenness first
    eigenvector_converged: bool = True

    def __post_init__(self):
        self.betweenness_rank = {int(u): r + 1 for r, u in enumerate(self.expert_order)}


def betweenness_scores(layer: Layer) -> dict[int, float]:
    """Unweighted shortest-path betweenness, unnormalised, endpoints excluded."""
    bc, _ = kernels.brandes(layer.indptr, layer.indices, len(layer))
    return {int(u): float(s) for u, s in zip(layer.nodes, bc)}


def _matrix(layer: Layer) -> sparse.csr_matrix:
    n = len(layer)
    return sparse.csr_matrix((layer.weights, layer.indices, layer.indptr), shape=(n, n))


def pagerank(layer: Layer, damping: float = DAMPING, tol: float = TOL,
             max_iter: int = MAX_ITER) -> np.ndarray:
    n = len(layer)
    if n == 0:
        return np.zeros(0)
    W = _matrix(layer)
    out = np.asarray(W.sum(axis=1)).ravel()
    dangling = out == 0
    inv = np.divide(1.0, out, out=np.zeros_like(out), where=~dangling)
    PT = (sparse.diags(inv) @ W).T.tocsr()
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        prev = x
        x = damping * (PT @ prev + prev[dangling].sum() / n) + (1.0 - damping) / n
        if np.abs(x - prev).sum() < n * tol:
            break
    return x / x.sum()


def eigenvector(layer: Layer, tol: float = TOL, max_iter: int = MAX_ITER) -> tuple[np.ndarray, bool]:
    """Weighted eigenvector centrality by power iteration on ``A + I``.

    Returns the L2-normalised vector and a convergence flag; on failure the
    vector is all zeros.
    """
    n = len(layer)
    if n == 0:
        return np.zeros(0), True
    W = _matrix(layer)
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        prev = x
        x = prev + W @ prev
        x = x / np.linalg.norm(x)
        if np.abs(x - prev).sum() < n * tol:
            return x, True
    logger.warning("eigenvector centrality did not converge on layer %d", layer.layer_id)
    return np.zeros(n), False


def _expert_order(layer: Layer, bc: np.ndarray) -> np.ndarray:
    ids = layer.nodes[layer.is_expert]
    scores = bc[layer.is_expert]
    return ids[np.lexsort((ids, -scores))]


def auxiliary_centralities(layer: Layer, betweenness: np.ndarray | None = None) -> CentralityTable:
    n = len(layer)
    bc, harmonic = kernels.brandes(layer.indptr, layer.indices, n)
    if betweenness is not None:
        bc = betweenness
    eig, ok = eigenvector(layer)
    deg = layer.degree().astype(np.float64)
    wsum = np.bincount(np.repeat(np.arange(n), layer.degree()), layer.weights, minlength=n)
    avg_w = np.divide(wsum, deg, out=np.zeros(n), where=deg > 0)
    closeness = harmonic / (n - 1) if n > 1 else np.zeros(n)
    return CentralityTable(layer.layer_id, layer.nodes, bc, eig, pagerank(layer), closeness,
                           deg, avg_w, _expert_order(layer, bc), ok)


def centrality_table(layer: Layer) -> CentralityTable:
    return auxiliary_centralities(layer)


def compute_all(g: MultiLayerGraph) -> list[CentralityTable]:
    return [centrality_table(L) for L in g.layers]


_FIELDS = ("nodes", "betweenness", "eigenvector", "pagerank", "closeness", "degree",
           "avg_weight", "expert_order")


def save_tables(tables: list[CentralityTable], path, meta: dict | None = None) -> None:
    arrays = {f"{t.layer_id}/{f}": getattr(t, f) for t in tables for f in _FIELDS}
    info = {"layers": [t.layer_id for t in tables],
            "eigenvector_converged": [t.eigenvector_converged for t in tables],
            "betweenness_weighting": "unweighted", **(meta or {})}
    write_arrays(path, arrays, info)


def load_tables(path) -> tuple[list[CentralityTable], dict]:
    arrays, meta = read_arrays(path)
    tables = []
    for lid, ok in zip(meta["layers"], meta["eigenvector_converged"]):
        tables.append(CentralityTable(lid, *(arrays[f"{lid}/{f}"] for f in _FIELDS),
                                      eigenvector_converged=ok))
    return tables, meta
