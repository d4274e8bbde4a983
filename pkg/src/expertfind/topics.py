"""Tag clustering into macro topics.

Tags are described by how often they co-occur with the most frequent tags,
rows are normalised to fractions, and k-means is run for each candidate k;
the k with the best mean silhouette wins.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .ingest import Dataset

logger = logging.getLogger(__name__)

SILHOUETTE_MAX_ROWS = 20_000


@dataclass
class CoMatrix:
    rows: list[str]
    cols: list[str]
    values: np.ndarray
    normalized: bool


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


@dataclass
class TagClustering:
    k: int
    assignment: dict[str, int]
    centroids: np.ndarray
    silhouette_by_k: dict[int, float]
    features: tuple[str, ...] = ()

    def tags_of(self, cluster: int) -> list[str]:
        return sorted(t for t, c in self.assignment.items() if c == cluster)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "assignment": dict(sorted(self.assignment.items())),
            "centroids": self.centroids.tolist(),
            "silhouette_by_k": {str(k): v for k, v in sorted(self.silhouette_by_k.items())},
            "features": list(self.features),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TagClustering":
        return cls(
            k=int(obj["k"]),
            assignment={t: int(c) for t, c in obj["assignment"].items()},
            centroids=np.asarray(obj["centroids"], dtype=np.float64),
            silhouette_by_k={int(k): float(v) for k, v in obj["silhouette_by_k"].items()},
            features=tuple(obj.get("features", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TagClustering":
        return cls.from_json(json.loads(Path(path).read_text()))


def feature_tags(train: Dataset, lam: int) -> list[str]:
    """The ``lam`` most frequent tags by question count, ties lexicographic."""
    freq = Counter(t for q in train.questions.values() for t in q.tags)
    return [t for t, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:lam]]


def build_cooccurrence(train: Dataset, lam: int, normalize: bool = True) -> CoMatrix:
    tags = sorted(train.tag_universe)
    if not train.questions:
        raise ValueError("training set has no questions")
    if lam < 1 or lam > len(tags):
        raise ValueError(f"lambda must lie in [1, {len(tags)}], got {lam}")
    col_of = {t: i for i, t in enumerate(tags)}
    feats = feature_tags(train, lam)

    rows, cols = [], []
    for i, q in enumerate(train.questions.values()):
        for t in q.tags:
            rows.append(i)
            cols.append(col_of[t])
    inc = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)),
                            shape=(len(train.questions), len(tags)))
    m = np.asarray((inc.T @ inc[:, [col_of[f] for f in feats]]).todense(), dtype=np.float64)
    out = CoMatrix(tags, feats, m, normalized=False)
    return normalize_rows(out) if normalize else out


def normalize_rows(m: CoMatrix) -> CoMatrix:
    sums = m.values.sum(axis=1, keepdims=True)
    values = np.divide(m.values, sums, out=np.zeros_like(m.values), where=sums > 0)
    return CoMatrix(m.rows, m.cols, values, normalized=True)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(idx)
        closest = np.minimum(closest, _sq_dists(X, X[[idx]])[:, 0])
    return X[centers].copy()


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300,
           tol: float = 1e-6) -> KMeansResult:
    """Lloyd iterations from a k-means++ seed.

    An empty cluster takes over the point farthest from its current centroid.
    ``history`` holds the within-cluster sum of squares after every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    C = _kmeans_pp(X, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, C)
        labels = d.argmin(axis=1)
        own = d[np.arange(n), labels]
        counts = np.bincount(labels, minlength=k)
        taken = np.zeros(n, dtype=bool)
        for j in np.flatnonzero(counts == 0):
            cand = np.where(taken, -1.0, own)
            far = int(cand.argmax())
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            own[far] = 0.0
            taken[far] = True
            C[j] = X[far]
        new_C = C.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_C[j] = X[members].mean(axis=0)
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        C = new_C
        history.append(float(((X - C[labels]) ** 2).sum()))
        if shift < tol:
            break
    return KMeansResult(labels, C, history[-1], history, it)


def silhouette(X: np.ndarray, labels: np.ndarray, chunk: int = 512) -> float:
    """Mean Euclidean silhouette; singletons score 0, and so does 0/0."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, lab = np.unique(labels, return_inverse=True)
    n, k = X.shape[0], uniq.size
    if k < 2 or n < 2:
        return 0.0
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    sizes = onehot.sum(axis=0)
    sq = (X * X).sum(1)
    s = np.zeros(n)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        d = np.sqrt(np.maximum(sq[sl, None] - 2.0 * X[sl] @ X.T + sq[None, :], 0.0))
        d[np.arange(d.shape[0]), np.arange(sl.start, sl.stop)] = 0.0
        sums = d @ onehot
        own = lab[sl]
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[np.arange(d.shape[0]), own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes[None, :]
        means[np.arange(d.shape[0]), own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        val = np.divide(b - a, denom, out=np.zeros_like(a), where=denom > 0)
        s[sl] = np.where(own_size > 1, val, 0.0)
    return float(s.mean())


def _canonical(labels: np.ndarray, tags: list[str]) -> np.ndarray:
    """Relabel clusters in order of their lexicographically first tag."""
    first: dict[int, str] = {}
    for t, c in zip(tags, labels):
        if c not in first or t < first[c]:
            first[int(c)] = t
    order = sorted(first, key=first.get)
    remap = {old: new for new, old in enumerate(order)}
    return np.array([remap[int(c)] for c in labels], dtype=np.int64)


def cluster_tags(m: CoMatrix, k_candidates, seed: int = 0, n_init: int = 4,
                 max_iter: int = 300, tol: float = 1e-6) -> TagClustering:
    ks = sorted(set(int(k) for k in k_candidates))
    if not ks:
        raise ValueError("k_candidates is empty")
    n = len(m.rows)
    if ks[0] < 2 or ks[-1] > n:
        raise ValueError(f"every k must lie in [2, {n}]")
    if not m.normalized:
        m = normalize_rows(m)

    perm = sorted(range(n), key=lambda i: m.rows[i])
    tags = [m.rows[i] for i in perm]
    X = m.values[perm]
    if n > SILHOUETTE_MAX_ROWS:
        sample = np.sort(np.random.default_rng(seed).choice(n, SILHOUETTE_MAX_ROWS, replace=False))
    else:
        sample = np.arange(n)

    scores: dict[int, float] = {}
    best: tuple[float, int, KMeansResult] | None = None
    for k in ks:
        rng = np.random.default_rng([seed, k])
        run = min((kmeans(X, k, rng, max_iter, tol) for _ in range(n_init)),
                  key=lambda r: r.inertia)
        scores[k] = silhouette(X[sample], run.labels[sample])
        logger.info("k=%d inertia=%.4f silhouette=%.4f", k, run.inertia, scores[k])
        if best is None or scores[k] > best[0]:
            best = (scores[k], k, run)
    _, k, run = best
    labels = _canonical(run.labels, tags)
    centroids = np.zeros((k, X.shape[1]))
    for j in range(k):
        members = labels == j
        if members.any():
            centroids[j] = X[members].mean(axis=0)
    return TagClustering(k, dict(zip(tags, labels.tolist())), centroids, scores, tuple(m.cols))


def single_cluster(train: Dataset, lam: int = 0) -> TagClustering:
    """All tags in one layer (the single-layer ablation)."""
    feats = tuple(feature_tags(train, lam)) if lam else ()
    return TagClustering(1, {t: 0 for t in sorted(train.tag_universe)},
                         np.zeros((1, len(feats))), {}, feats)
