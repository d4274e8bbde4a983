"""LambdaMART: boosted regression trees fitted to LambdaRank gradients.

Trees are grown leaf-wise on binned features (gradient histograms, with the
larger child's histogram obtained by subtraction). Leaf values are Newton
steps ``sum(lambda) / sum(hessian)``; the ensemble score is
``learning_rate * sum_t tree_t(x)``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

MODEL_FORMAT = "expertfind-lambdamart"
MODEL_VERSION = 1

SEARCH_SPACE = {
    "learning_rate": (0.0001, 0.15),
    "num_leaves": (50, 200),
    "n_estimators": (50, 150),
    "max_depth": (8, 15),
    "min_data_in_leaf": (150, 500),
}


class DegenerateDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float = 0.075
    num_leaves: int = 125
    n_estimators: int = 100
    max_depth: int = 11
    min_data_in_leaf: int = 325
    max_bin: int = 255
    truncation: int = 10
    sigma: float = 1.0
    early_stopping_rounds: int = 30
    min_sum_hessian: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0 or self.num_leaves < 2 or self.n_estimators < 1:
            raise ValueError("learning_rate > 0, num_leaves >= 2 and n_estimators >= 1 required")
        if self.max_depth < 1 or self.min_data_in_leaf < 1 or not 2 <= self.max_bin <= 256:
            raise ValueError("max_depth >= 1, min_data_in_leaf >= 1, 2 <= max_bin <= 256 required")

    def in_search_space(self) -> bool:
        return all(lo <= getattr(self, k) <= hi for k, (lo, hi) in SEARCH_SPACE.items())


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass
class LtrDataset:
    X: np.ndarray
    labels: np.ndarray
    group_ptr: np.ndarray
    query_ids: np.ndarray
    experts: np.ndarray
    feature_names: tuple[str, ...]

    @property
    def n_queries(self) -> int:
        return int(self.group_ptr.size - 1)

    def groups(self):
        for g in range(self.n_queries):
            yield slice(int(self.group_ptr[g]), int(self.group_ptr[g + 1]))

    def take(self, group_idx: Sequence[int]) -> "LtrDataset":
        rows = [np.arange(self.group_ptr[g], self.group_ptr[g + 1]) for g in group_idx]
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        sizes = np.diff(self.group_ptr)[list(group_idx)] if len(group_idx) else np.zeros(0, np.int64)
        ptr = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        return LtrDataset(self.X[rows], self.labels[rows], ptr,
                          self.query_ids[list(group_idx)] if len(group_idx) else self.query_ids[:0],
                          self.experts[rows], self.feature_names)

    def select_features(self, names: Sequence[str]) -> "LtrDataset":
        idx = [self.feature_names.index(n) for n in names]
        return LtrDataset(self.X[:, idx], self.labels, self.group_ptr, self.query_ids,
                          self.experts, tuple(names))

    def split(self, frac: float = 0.8) -> tuple["LtrDataset", "LtrDataset"]:
        """Leading ``frac`` of query groups (in stored, temporal order) vs the rest."""
        n_train = int(round(frac * self.n_queries))
        return self.take(range(n_train)), self.take(range(n_train, self.n_queries))

    def validate(self) -> None:
        for g, sl in enumerate(self.groups()):
            if sl.stop - sl.start < 2:
                raise ValueError(f"query {self.query_ids[g]} has fewer than 2 samples")
            if int(self.labels[sl].sum()) != 1:
                raise ValueError(f"query {self.query_ids[g]} must have exactly one positive")

    @classmethod
    def from_groups(cls, groups, feature_names) -> "LtrDataset":
        """``groups``: iterable of (query id, expert ids, X, labels)."""
        qids, exps, Xs, ys, sizes = [], [], [], [], []
        for qid, e, X, y in groups:
            qids.append(qid)
            exps.append(np.asarray(e, dtype=np.int64))
            Xs.append(np.asarray(X, dtype=np.float64))
            ys.append(np.asarray(y, dtype=np.float64))
            sizes.append(len(y))
        nf = len(feature_names)
        return cls(np.vstack(Xs) if Xs else np.zeros((0, nf)),
                   np.concatenate(ys) if ys else np.zeros(0),
                   np.r_[0, np.cumsum(sizes)].astype(np.int64),
                   np.asarray(qids, dtype=np.int64),
                   np.concatenate(exps) if exps else np.zeros(0, np.int64),
                   tuple(feature_names))


def build_ltr_dataset(questions, artifacts, cfg, feature_names=None) -> LtrDataset:
    """Select candidates and extract features for each question in order.

    The accepted answerer gets label 1, every other candidate 0. Questions
    whose answerer was not selected, or with a single candidate, are dropped.
    """
    from .features import FEATURE_NAMES, extract_features
    from .selection import select_candidates

    names = tuple(feature_names or FEATURE_NAMES)
    groups = []
    dropped = 0
    for q in questions:
        cs = select_candidates(q, artifacts.mlg, artifacts.indexes, artifacts.centralities, cfg,
                               exclude_self=True)
        answerer = artifacts.train.best_answerer(q.id)
        if answerer not in cs.candidates or len(cs.candidates) < 2:
            dropped += 1
            continue
        fm = extract_features(q, cs, artifacts.mlg, artifacts.centralities,
                              artifacts.train.users, artifacts.activity).select(names)
        groups.append((q.id, fm.experts, fm.X, (fm.experts == answerer).astype(np.float64)))
    if not groups:
        raise ValueError("no query retained its answerer among the candidates")
    logger.info("LtR dataset: %d queries kept, %d dropped", len(groups), dropped)
    return LtrDataset.from_groups(groups, names)


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return kernels.predict_trees(X, self.feature, self.threshold, self.left, self.right,
                                     self.value, np.array([0, self.feature.size], dtype=np.int64))

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right",
                                                        "value", "gain")}

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        ints = ("feature", "left", "right")
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else np.float64)
                      for k, v in obj.items()})


class Binner:
    """Per-feature cut points; bin ``b`` holds values in ``(cut[b-1], cut[b]]``."""

    def __init__(self, max_bin: int = 255):
        self.max_bin = max_bin
        self.cuts: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "Binner":
        self.cuts = []
        for f in range(X.shape[1]):
            u = np.unique(X[:, f])
            mids = (u[:-1] + u[1:]) / 2.0
            if mids.size > self.max_bin - 1:
                q = np.linspace(0, mids.size - 1, self.max_bin - 1).round().astype(int)
                mids = np.unique(mids[q])
            self.cuts.append(mids)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.uint8)
        for f, c in enumerate(self.cuts):
            out[:, f] = np.searchsorted(c, X[:, f], side="left")
        return out

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([c.size + 1 for c in self.cuts], dtype=np.int64)


@dataclass
class _Leaf:
    node: int
    rows: np.ndarray
    depth: int
    hg: np.ndarray
    hh: np.ndarray
    hc: np.ndarray
    G: float
    H: float
    split: tuple | None = None   # (gain, feature, bin)


def _best_split(leaf: _Leaf, n_bins: np.ndarray, hp: HyperParams):
    GL = np.cumsum(leaf.hg, axis=1)[:, :-1]
    HL = np.cumsum(leaf.hh, axis=1)[:, :-1]
    CL = np.cumsum(leaf.hc, axis=1)[:, :-1]
    GR, HR, CR = leaf.G - GL, leaf.H - HL, leaf.rows.size - CL
    valid = ((CL >= hp.min_data_in_leaf) & (CR >= hp.min_data_in_leaf)
             & (HL >= hp.min_sum_hessian) & (HR >= hp.min_sum_hessian)
             & (np.arange(GL.shape[1])[None, :] < (n_bins - 1)[:, None]))
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = GL ** 2 / HL + GR ** 2 / HR - leaf.G ** 2 / leaf.H
    gain = np.where(valid, gain, -np.inf)
    f, b = np.unravel_index(int(np.argmax(gain)), gain.shape)
    if not gain[f, b] > 1e-12:
        return None
    return float(gain[f, b]), int(f), int(b)


def grow_tree(bins: np.ndarray, binner: Binner, grad: np.ndarray, hess: np.ndarray,
              hp: HyperParams) -> tuple[Tree, list[tuple[int, np.ndarray]]]:
    """Leaf-wise growth; returns the tree and (node, rows) for every leaf."""
    n_bins = binner.n_bins
    nb = int(n_bins.max())
    feature, threshold, left, right, value, gain = [-1], [0.0], [-1], [-1], [0.0], [0.0]

    def make_leaf(node, rows, depth, hists=None):
        hg, hh, hc = hists if hists is not None else kernels.histogram(bins, rows, grad, hess, nb)
        leaf = _Leaf(node, rows, depth, hg, hh, hc, float(grad[rows].sum()), float(hess[rows].sum()))
        if depth < hp.max_depth:
            leaf.split = _best_split(leaf, n_bins, hp)
        return leaf

    leaves = [make_leaf(0, np.arange(bins.shape[0]), 0)]
    while len(leaves) < hp.num_leaves:
        cand = [lf for lf in leaves if lf.split is not None]
        if not cand:
            break
        leaf = max(cand, key=lambda lf: (lf.split[0], -lf.node))
        g, f, b = leaf.split
        go_left = bins[leaf.rows, f] <= b
        lrows, rrows = leaf.rows[go_left], leaf.rows[~go_left]
        li, ri = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
            value.append(0.0); gain.append(0.0)
        feature[leaf.node], threshold[leaf.node] = f, float(binner.cuts[f][b])
        left[leaf.node], right[leaf.node], gain[leaf.node] = li, ri, g
        small, big = (lrows, rrows) if lrows.size <= rrows.size else (rrows, lrows)
        hs = kernels.histogram(bins, small, grad, hess, nb)
        hb = (leaf.hg - hs[0], leaf.hh - hs[1], leaf.hc - hs[2])
        lh, rh = (hs, hb) if small is lrows else (hb, hs)
        leaves.remove(leaf)
        leaves += [make_leaf(li, lrows, leaf.depth + 1, lh), make_leaf(ri, rrows, leaf.depth + 1, rh)]

    assignment = []
    for lf in leaves:
        value[lf.node] = lf.G / lf.H if lf.H > 0 else 0.0
        assignment.append((lf.node, lf.rows))
    tree = Tree(np.array(feature, np.int64), np.array(threshold), np.array(left, np.int64),
                np.array(right, np.int64), np.array(value), np.array(gain))
    return tree, assignment


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class RankerModel:
    trees: list[Tree]
    learning_rate: float
    feature_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def _flat(self):
        if not self.trees:
            z = np.zeros(0, np.int64)
            return z, np.zeros(0), z, z, np.zeros(0), np.zeros(1, np.int64)
        sizes = [t.feature.size for t in self.trees]
        ptr = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        cat = lambda k, dt: np.concatenate([getattr(t, k) for t in self.trees]).astype(dt)
        return (cat("feature", np.int64), cat("threshold", np.float64), cat("left", np.int64),
                cat("right", np.int64), cat("value", np.float64), ptr)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got shape {X.shape}")
        return self.learning_rate * kernels.predict_trees(X, *self._flat())

    def feature_importance(self) -> dict[str, float]:
        total = np.zeros(len(self.feature_names))
        for t in self.trees:
            inner = t.feature >= 0
            np.add.at(total, t.feature[inner], t.gain[inner])
        return dict(sorted(zip(self.feature_names, total.tolist()), key=lambda kv: -kv[1]))

    def to_json(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "learning_rate": self.learning_rate, "feature_names": list(self.feature_names),
                "trees": [t.to_json() for t in self.trees], "metadata": self.metadata}

    @classmethod
    def from_json(cls, obj: dict) -> "RankerModel":
        if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
            raise ValueError("not a supported ranker model file")
        return cls([Tree.from_json(t) for t in obj["trees"]], float(obj["learning_rate"]),
                   tuple(obj["feature_names"]), obj.get("metadata", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RankerModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def positive_ranks(scores, labels, group_ptr, tiebreak) -> np.ndarray:
    """1-based rank of the (single) positive per group; ties broken by
    ascending ``tiebreak`` (expert id)."""
    ranks = np.zeros(group_ptr.size - 1, dtype=np.int64)
    for g in range(group_ptr.size - 1):
        a, b = group_ptr[g], group_ptr[g + 1]
        s, t = scores[a:b], tiebreak[a:b]
        p = int(np.argmax(labels[a:b]))
        ranks[g] = 1 + int(np.sum((s > s[p]) | ((s == s[p]) & (t < t[p]))))
    return ranks


def _mrr(scores, ds: LtrDataset) -> float:
    if ds.n_queries == 0:
        return float("nan")
    return float(np.mean(1.0 / positive_ranks(scores, ds.labels, ds.group_ptr, ds.experts)))


def _ndcg3(scores, ds: LtrDataset) -> float:
    r = positive_ranks(scores, ds.labels, ds.group_ptr, ds.experts)
    return float(np.mean(np.where(r <= 3, 1.0 / np.log2(r + 1.0), 0.0)))


def _check_trainable(ds: LtrDataset) -> None:
    if ds.n_queries == 0:
        raise DegenerateDatasetError("no query groups")
    varied = any(ds.labels[sl].min() != ds.labels[sl].max() for sl in ds.groups())
    if not varied:
        raise DegenerateDatasetError("all labels are equal within every query")
    if ds.X.shape[0] and np.all(ds.X == ds.X[0]):
        raise DegenerateDatasetError("all feature vectors are identical")


def train_lambdamart(ds: LtrDataset, hp: HyperParams = HyperParams(), seed: int = 0,
                     valid: LtrDataset | None = None, split: float = 0.8) -> RankerModel:
    """Fit a LambdaMART ensemble.

    Without an explicit ``valid`` set the dataset is split temporally by
    ``split``. Training stops after ``hp.early_stopping_rounds`` iterations
    without a validation-MRR gain and keeps the best prefix of trees.
    """
    if valid is None:
        ds, valid = ds.split(split)
    _check_trainable(ds)
    binner = Binner(hp.max_bin).fit(ds.X)
    bins = binner.transform(ds.X)
    train_scores = np.zeros(ds.X.shape[0])
    valid_scores = np.zeros(valid.X.shape[0])
    trees: list[Tree] = []
    mrr_curve, ndcg_curve = [], []
    best_mrr, best_n = -math.inf, 0
    has_valid = valid.n_queries > 0
    for it in range(hp.n_estimators):
        lam, hess = kernels.lambdarank_gradients(train_scores, ds.labels, ds.group_ptr,
                                                 hp.truncation, hp.sigma)
        tree, leaves = grow_tree(bins, binner, lam, hess, hp)
        trees.append(tree)
        for node, rows in leaves:
            train_scores[rows] += hp.learning_rate * tree.value[node]
        ndcg_curve.append(_ndcg3(train_scores, ds))
        if has_valid:
            valid_scores += hp.learning_rate * tree.predict(valid.X)
            m = _mrr(valid_scores, valid)
            mrr_curve.append(m)
            if m > best_mrr:
                best_mrr, best_n = m, it + 1
            elif it + 1 - best_n >= hp.early_stopping_rounds:
                break
    if has_valid:
        trees = trees[:best_n]
    meta = {"seed": seed, "hyperparams": asdict(hp), "valid_mrr": mrr_curve,
            "train_ndcg3": ndcg_curve, "best_iteration": best_n if has_valid else len(trees),
            "best_valid_mrr": best_mrr if has_valid else None}
    logger.info("trained %d trees, best validation MRR %s", len(trees), meta["best_valid_mrr"])
    return RankerModel(trees, hp.learning_rate, ds.feature_names, meta)


def sample_hyperparams(rng: np.random.Generator) -> HyperParams:
    lo, hi = SEARCH_SPACE["learning_rate"]
    lr = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    ints = {k: int(rng.integers(lo, hi + 1)) for k, (lo, hi) in SEARCH_SPACE.items()
            if k != "learning_rate"}
    return HyperParams(learning_rate=lr, **ints)


@dataclass
class Trial:
    params: HyperParams
    valid_mrr: float


def tune_hyperparams(ds: LtrDataset, budget: int = 50, seed: int = 0,
                     valid: LtrDataset | None = None, split: float = 0.8,
                     candidates: Sequence[HyperParams] | None = None) -> tuple[HyperParams, list[Trial]]:
    """Random search over ``SEARCH_SPACE`` (log-uniform learning rate).

    The draw with the highest validation MRR wins; earlier draws win ties.
    ``candidates`` replaces the random draws when given.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if valid is None:
        ds, valid = ds.split(split)
    rng = np.random.default_rng(seed)
    draws = list(candidates) if candidates is not None else [sample_hyperparams(rng) for _ in range(budget)]
    trials = []
    for hp in draws:
        model = train_lambdamart(ds, hp, seed, valid=valid)
        m = model.metadata["best_valid_mrr"]
        trials.append(Trial(hp, m if m is not None else float("nan")))
        logger.info("trial %d: MRR %.4f", len(trials), trials[-1].valid_mrr)
    best = max(range(len(trials)), key=lambda i: (trials[i].valid_mrr, -i))
    return trials[best].params, trials


def score_and_rank(model: RankerModel, experts: Sequence[int], X: np.ndarray) -> list[int]:
    """Experts by descending score, ties by ascending expert id."""
    experts = np.asarray(experts, dtype=np.int64)
    if len(experts) == 0:
        return []
    scores = model.predict(X)
    return experts[np.lexsort((experts, -scores))].tolist()
