"""Staged end-to-end pipeline with hashed, resumable artifacts.

Every stage writes its files plus ``manifest/<stage>.json`` recording the
stage's config hash, the upstream hashes it consumed and a digest of each
file. A stage refuses to run on upstream artifacts produced under a
different config unless ``force`` is set.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .centrality import CentralityTable, compute_all, load_tables, save_tables
from .evaluation import (ComparisonTable, EvalReport, RunResult, compare_runs, compute_metrics,
                         save_report, test_queries)
from .experts import ExpertSet, identify_experts, load_experts, save_experts
from .features import (CONTENT_FEATURES, FEATURE_NAMES, NETWORK_FEATURES, activity_stats,
                       extract_features, read_feature_table, write_feature_table)
from .ingest import (CleanReport, Dataset, ParseReport, SplitDataset, clean, load_split, parse_posts,
                     read_reputation, save_split, temporal_split)
from .mlg import MultiLayerGraph, build_mlg, load_mlg, save_mlg
from .ranker import (HyperParams, LtrDataset, RankerModel, build_ltr_dataset, score_and_rank,
                     train_lambdamart, tune_hyperparams)
from .retrieval import InvertedIndex, build_indexes, content_order
from .selection import SelectionConfig, retrieve, select_candidates
from .topics import TagClustering, build_cooccurrence, cluster_tags, single_cluster

logger = logging.getLogger(__name__)

MODES = ("tuef", "bc", "bm25", "nb", "cb", "sl", "norw")
MODE_LABELS = {"tuef": "TUEF", "bc": "BC", "bm25": "BM25", "nb": "TUEF_NB", "cb": "TUEF_CB",
               "sl": "TUEF_SL", "norw": "TUEF_NoRW"}
LTR_MODES = ("tuef", "nb", "cb", "sl", "norw")
_SELECTION_MODE = {"tuef": "full", "sl": "full", "nb": "network_only", "cb": "content_only",
                   "norw": "no_random_walk", "bc": "full", "bm25": "full"}

STAGES = ("ingest", "topics", "experts", "graph", "index", "ltr", "tune", "train", "eval")


class StageMismatchError(RuntimeError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class PipelineConfig:
    posts: str = "posts.jsonl"
    users: str | None = None
    input_format: str = "jsonl"
    artifacts: str = "artifacts"
    split_ratio: float = 0.8
    lam: int = 10
    k_min: int = 2
    k_max: int = 20
    eps: int = 3
    delta: float = 0.5
    beta: int = 20
    alpha: float = 0.001
    walks: int = 5
    steps: int = 10
    top_n: int = 1000
    seed: int = 0
    mode: str = "tuef"
    ltr_queries: int = 50000
    tune_budget: int = 50
    hyperparams: dict | None = None     # fixed ranker params; skips the random search
    test_limit: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.lam < 1 or self.eps < 1 or self.beta < 1:
            raise ValueError("lam, eps and beta must be >= 1")
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError("need 2 <= k_min <= k_max")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.tune_budget < 1 or self.ltr_queries < 1:
            raise ValueError("tune_budget and ltr_queries must be >= 1")
        # validated eagerly so a bad value fails before any stage runs
        self.selection()
        if self.hyperparams is not None:
            HyperParams(**self.hyperparams)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data))

    def replace(self, **changes) -> "PipelineConfig":
        return PipelineConfig(**{**asdict(self), **changes})

    def selection(self) -> SelectionConfig:
        return SelectionConfig(alpha=self.alpha, walks_per_expert=self.walks, walk_steps=self.steps,
                               top_n_retrieval=self.top_n, rng_seed=self.seed,
                               mode=_SELECTION_MODE[self.mode])

    @property
    def feature_names(self) -> tuple[str, ...]:
        return {"nb": NETWORK_FEATURES, "cb": CONTENT_FEATURES}.get(self.mode, FEATURE_NAMES)

    @property
    def uses_ranker(self) -> bool:
        return self.mode in LTR_MODES


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """YAML or JSON file (JSON is valid YAML), then non-None ``overrides``."""
    import yaml

    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig.from_mapping(data)


# ---------------------------------------------------------------------------
# hashing
# ---------------------------------------------------------------------------

def _file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _stage_params(cfg: PipelineConfig, stage: str) -> dict:
    if stage == "ingest":
        return {"posts": _file_digest(cfg.posts),
                "users": _file_digest(cfg.users) if cfg.users else None,
                "input_format": cfg.input_format, "split_ratio": cfg.split_ratio}
    if stage == "topics":
        single = cfg.mode == "sl"
        return {"single_layer": single, "lam": cfg.lam,
                **({} if single else {"k_min": cfg.k_min, "k_max": cfg.k_max, "seed": cfg.seed})}
    if stage == "experts":
        return {"beta": cfg.beta}
    if stage == "graph":
        return {"eps": cfg.eps, "delta": cfg.delta}
    if stage == "ltr":
        return {"selection": asdict(cfg.selection()), "features": list(cfg.feature_names),
                "ltr_queries": cfg.ltr_queries}
    if stage == "tune":
        return {"budget": cfg.tune_budget, "hyperparams": cfg.hyperparams, "seed": cfg.seed}
    if stage == "eval":
        out = {"mode": cfg.mode, "test_limit": cfg.test_limit}
        if cfg.mode == "bm25":
            out["top_n"] = cfg.top_n
        return out
    return {}


def upstream_of(stage: str, cfg: PipelineConfig) -> tuple[str, ...]:
    return {
        "ingest": (), "topics": ("ingest",), "experts": ("ingest",), "graph": ("topics", "experts"),
        "index": ("ingest",), "ltr": ("graph", "index"), "tune": ("ltr",), "train": ("tune",),
        "eval": ("train",) if cfg.uses_ranker else ("graph", "index"),
    }[stage]


def stage_hash(cfg: PipelineConfig, stage: str, _memo: dict | None = None) -> str:
    memo = {} if _memo is None else _memo
    if stage not in memo:
        ups = {u: stage_hash(cfg, u, memo) for u in upstream_of(stage, cfg)}
        blob = json.dumps({"stage": stage, "params": _stage_params(cfg, stage), "upstream": ups},
                          sort_keys=True)
        memo[stage] = hashlib.sha256(blob.encode()).hexdigest()
    return memo[stage]


def stages_for(cfg: PipelineConfig) -> tuple[str, ...]:
    if cfg.uses_ranker:
        return STAGES
    return ("ingest", "topics", "experts", "graph", "index", "eval")


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

@dataclass
class Artifacts:
    split: SplitDataset | None = None
    clustering: TagClustering | None = None
    experts: ExpertSet | None = None
    mlg: MultiLayerGraph | None = None
    centralities: list[CentralityTable] | None = None
    indexes: tuple[InvertedIndex, InvertedIndex] | None = None
    ltr: LtrDataset | None = None
    hyperparams: HyperParams | None = None
    model: RankerModel | None = None
    report: EvalReport | None = None
    run: RunResult | None = None
    ingest_info: dict | None = None
    trials: list | None = None
    candidates: dict | None = None
    _activity: dict | None = field(default=None, repr=False)

    @property
    def train(self) -> Dataset:
        return self.split.train

    @property
    def test(self) -> Dataset:
        return self.split.test

    @property
    def activity(self) -> dict:
        if self._activity is None:
            self._activity = activity_stats(self.train)
        return self._activity


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


class Pipeline:
    """One run over one artifact directory.

    ``shared`` maps stage hashes to already computed stage outputs so that
    several runs in one process (the ablation harness) skip repeated work.
    """

    def __init__(self, cfg: PipelineConfig, force: bool = False, shared: dict | None = None):
        self.cfg = cfg
        self.root = Path(cfg.artifacts)
        self.force = force
        self.shared = shared if shared is not None else {}
        self.art = Artifacts()
        self._hashes: dict = {}

    def hash(self, stage: str) -> str:
        return stage_hash(self.cfg, stage, self._hashes)

    # -- manifests ----------------------------------------------------------
    def manifest_path(self, stage: str) -> Path:
        return self.root / "manifest" / f"{stage}.json"

    def read_manifest(self, stage: str) -> dict | None:
        p = self.manifest_path(stage)
        return json.loads(p.read_text()) if p.exists() else None

    def _write_manifest(self, stage: str, files: Sequence[str]) -> None:
        digests = {f: _file_digest(self.root / f) for f in sorted(files)}
        ups = {u: self.hash(u) for u in upstream_of(stage, self.cfg)}
        self.manifest_path(stage).parent.mkdir(parents=True, exist_ok=True)
        _dump_json(self.manifest_path(stage), {"stage": stage, "config_hash": self.hash(stage),
                                               "upstream": ups, "files": digests})

    def check_upstream(self, stage: str) -> None:
        for u in upstream_of(stage, self.cfg):
            m = self.read_manifest(u)
            if m is None:
                raise StageMismatchError(f"stage {stage!r} needs {u!r}, which has not been run")
            if m["config_hash"] != self.hash(u) and not self.force:
                raise StageMismatchError(
                    f"stage {stage!r}: artifacts of {u!r} were built with config hash "
                    f"{m['config_hash'][:12]}, current config gives {self.hash(u)[:12]} "
                    "(rerun upstream or pass --force)")

    def is_current(self, stage: str) -> bool:
        m = self.read_manifest(stage)
        if m is None or m["config_hash"] != self.hash(stage):
            return False
        return all((self.root / f).exists() and _file_digest(self.root / f) == d
                   for f, d in m["files"].items())

    # -- stage drivers ------------------------------------------------------
    def run_stage(self, stage: str) -> None:
        """Compute ``stage`` from upstream artifacts (loaded if not in memory)."""
        self.check_upstream(stage)
        for u in upstream_of(stage, self.cfg):
            self._ensure_loaded(u)
        logger.info("stage %s (%s)", stage, self.hash(stage)[:12])
        try:
            key = self.hash(stage)
            if key in self.shared:
                self._restore(stage, self.shared[key])
            else:
                getattr(self, f"_compute_{stage}")()
                self.shared[key] = self._snapshot(stage)
            files = getattr(self, f"_save_{stage}")()
        except StageMismatchError:
            raise
        except Exception as exc:
            raise PipelineError(stage, exc) from exc
        self._write_manifest(stage, files)

    def _ensure_loaded(self, stage: str) -> None:
        if self._snapshot(stage) is not None and all(v is not None for v in self._snapshot(stage)):
            return
        for u in upstream_of(stage, self.cfg):
            self._ensure_loaded(u)
        getattr(self, f"_load_{stage}")()

    def run(self, resume: bool = False) -> EvalReport:
        for stage in stages_for(self.cfg):
            if resume and self.is_current(stage):
                logger.info("stage %s is current, skipping", stage)
                continue
            self.run_stage(stage)
        self._ensure_loaded("eval")
        return self.art.report

    _STATE = {"ingest": ("split", "ingest_info"), "topics": ("clustering",), "experts": ("experts",),
              "graph": ("mlg", "centralities"), "index": ("indexes",), "ltr": ("ltr",),
              "tune": ("hyperparams", "trials"), "train": ("model",),
              "eval": ("report", "run", "candidates")}

    def _snapshot(self, stage: str):
        return tuple(getattr(self.art, a) for a in self._STATE[stage])

    def _restore(self, stage: str, values) -> None:
        for a, v in zip(self._STATE[stage], values):
            setattr(self.art, a, v)

    # -- ingest -------------------------------------------------------------
    def _compute_ingest(self):
        cfg = self.cfg
        pr, cr = ParseReport(), CleanReport()
        raw = parse_posts(cfg.posts, cfg.input_format, pr)
        rep = read_reputation(cfg.users) if cfg.users else None
        ds = clean(raw, rep, cr)
        self.art.split = temporal_split(ds, cfg.split_ratio)
        self.art.ingest_info = {"parse": {"read": pr.read, "skipped": pr.skipped,
                                          "reasons": dict(sorted(pr.reasons.items()))},
                                "clean_dropped": dict(sorted(cr.dropped.items()))}

    def _save_ingest(self):
        extra = {"config_hash": self.hash("ingest"), **(self.art.ingest_info or {})}
        save_split(self.art.split, self.root / "data", extra)
        return [str(p.relative_to(self.root)) for p in sorted((self.root / "data").rglob("*"))
                if p.is_file()]

    def _load_ingest(self):
        self.art.split = load_split(self.root / "data")

    # -- topics -------------------------------------------------------------
    def _compute_topics(self):
        cfg = self.cfg
        if cfg.mode == "sl":
            self.art.clustering = single_cluster(self.art.train, cfg.lam)
            return
        m = build_cooccurrence(self.art.train, cfg.lam)
        k_hi = min(cfg.k_max, len(m.rows))
        if k_hi < cfg.k_min:
            raise ValueError(f"only {len(m.rows)} tags, cannot cluster into k >= {cfg.k_min}")
        self.art.clustering = cluster_tags(m, range(cfg.k_min, k_hi + 1), seed=cfg.seed)

    def _save_topics(self):
        _dump_json(self.root / "topics.json",
                   {**self.art.clustering.to_json(), "config_hash": self.hash("topics")})
        return ["topics.json"]

    def _load_topics(self):
        self.art.clustering = TagClustering.load(self.root / "topics.json")

    # -- experts ------------------------------------------------------------
    def _compute_experts(self):
        self.art.experts = identify_experts(self.art.train, self.cfg.beta)

    def _save_experts(self):
        save_experts(self.art.experts, self.art.train, self.root / "experts.jsonl")
        return ["experts.jsonl"]

    def _load_experts(self):
        self.art.experts = load_experts(self.root / "experts.jsonl", self.cfg.beta)

    # -- graph --------------------------------------------------------------
    def _compute_graph(self):
        self.art.mlg = build_mlg(self.art.train, self.art.clustering, self.cfg.eps, self.cfg.delta,
                                 self.art.experts.experts)
        self.art.centralities = compute_all(self.art.mlg)

    def _save_graph(self):
        meta = {"config_hash": self.hash("graph")}
        save_mlg(self.art.mlg, self.root / "graph.bin", meta)
        save_tables(self.art.centralities, self.root / "centrality.bin", meta)
        return ["graph.bin", "centrality.bin"]

    def _load_graph(self):
        self.art.mlg, _ = load_mlg(self.root / "graph.bin")
        self.art.centralities, _ = load_tables(self.root / "centrality.bin")

    # -- index --------------------------------------------------------------
    def _compute_index(self):
        self.art.indexes = build_indexes(self.art.train)

    def _save_index(self):
        meta = {"config_hash": self.hash("index")}
        self.art.indexes[0].save(self.root / "index_tag.bin", meta)
        self.art.indexes[1].save(self.root / "index_text.bin", meta)
        return ["index_tag.bin", "index_text.bin"]

    def _load_index(self):
        self.art.indexes = (InvertedIndex.load(self.root / "index_tag.bin"),
                            InvertedIndex.load(self.root / "index_text.bin"))

    # -- learning to rank ---------------------------------------------------
    def _compute_ltr(self):
        train = self.art.train
        tail = train.ordered_question_ids()[-self.cfg.ltr_queries:]
        self.art.ltr = build_ltr_dataset([train.questions[q] for q in tail], self.art,
                                         self.cfg.selection(), self.cfg.feature_names)

    def _save_ltr(self):
        ds = self.art.ltr
        rows = [(int(ds.query_ids[g]), int(ds.experts[i]), int(ds.labels[i]), ds.X[i])
                for g, sl in enumerate(ds.groups()) for i in range(sl.start, sl.stop)]
        write_feature_table(self.root / "ltr.tsv", rows, ds.feature_names)
        return ["ltr.tsv", "ltr.tsv.groups"]

    def _load_ltr(self):
        names, X, groups = read_feature_table(self.root / "ltr.tsv")
        out, start = [], 0
        for end in list(np.flatnonzero(np.diff(groups[:, 0])) + 1) + [len(groups)]:
            g = groups[start:end]
            out.append((int(g[0, 0]), g[:, 1], X[start:end], g[:, 2].astype(np.float64)))
            start = end
        self.art.ltr = LtrDataset.from_groups(out, names)

    def _compute_tune(self):
        cfg = self.cfg
        if cfg.hyperparams is not None:
            self.art.hyperparams = HyperParams(**cfg.hyperparams)
            self.art.trials = []
            return
        self.art.hyperparams, self.art.trials = tune_hyperparams(self.art.ltr, cfg.tune_budget, cfg.seed)

    def _save_tune(self):
        trials = [{"params": asdict(t.params), "valid_mrr": t.valid_mrr}
                  for t in self.art.trials or []]
        _dump_json(self.root / "hyperparams.json",
                   {"hyperparams": asdict(self.art.hyperparams), "trials": trials,
                    "config_hash": self.hash("tune")})
        return ["hyperparams.json"]

    def _load_tune(self):
        obj = json.loads((self.root / "hyperparams.json").read_text())
        self.art.hyperparams = HyperParams(**obj["hyperparams"])

    def _compute_train(self):
        self.art.model = train_lambdamart(self.art.ltr, self.art.hyperparams, self.cfg.seed)

    def _save_train(self):
        model = self.art.model
        model.metadata["config_hash"] = self.hash("train")
        model.save(self.root / "model.json")
        imp = sorted(model.feature_importance().items(), key=lambda kv: (-kv[1], kv[0]))
        _dump_json(self.root / "feature_importance.json",
                   {"split_gain": dict(imp), "order": [k for k, _ in imp],
                    "config_hash": self.hash("train")})
        return ["model.json", "feature_importance.json"]

    def _load_train(self):
        self.art.model = RankerModel.load(self.root / "model.json")

    # -- evaluation ---------------------------------------------------------
    def rank_question(self, q) -> tuple[list[int], list[int]]:
        """(ranked experts, candidate set) for one question under the configured mode."""
        a, cfg = self.art, self.cfg
        if cfg.mode == "bc":
            return rank_by_betweenness(q, a.mlg, a.centralities), []
        if cfg.mode == "bm25":
            return rank_by_bm25(q, a.mlg, a.indexes, cfg.top_n), []
        cs = select_candidates(q, a.mlg, a.indexes, a.centralities, cfg.selection())
        if not cs.candidates:
            return [], []
        fm = extract_features(q, cs, a.mlg, a.centralities, a.train.users, a.activity)
        fm = fm.select(a.model.feature_names)
        return score_and_rank(a.model, fm.experts, fm.X), cs.candidates

    def _compute_eval(self):
        a = self.art
        queries = test_queries(a.test, a.experts.experts, self.cfg.test_limit)
        rankings, relevant, cands = {}, {}, {}
        for q in queries:
            rankings[q.id], cands[q.id] = self.rank_question(q)
            relevant[q.id] = a.test.best_answerer(q.id)
        a.run = RunResult(rankings, relevant)
        a.report = compute_metrics(a.run)
        a.candidates = cands
        logger.info("%s: %s", MODE_LABELS[self.cfg.mode],
                    " ".join(f"{k}={v:.3f}" for k, v in a.report.means.items()))

    def _save_eval(self):
        a = self.art
        save_report(a.report, self.root / "report.json")
        a.report.write_csv(self.root / "per_query.csv")
        cands = a.candidates or {}
        with (self.root / "rankings.jsonl").open("w") as fh:
            for qid in sorted(a.run.rankings):
                fh.write(json.dumps({"query_id": qid, "relevant": a.run.relevant[qid],
                                     "ranking": a.run.rankings[qid],
                                     "candidates": cands.get(qid, [])}) + "\n")
        return ["report.json", "per_query.csv", "rankings.jsonl"]

    def _load_eval(self):
        rows = [json.loads(x) for x in (self.root / "rankings.jsonl").read_text().splitlines()]
        self.art.run = RunResult({r["query_id"]: r["ranking"] for r in rows},
                                 {r["query_id"]: r["relevant"] for r in rows})
        self.art.report = compute_metrics(self.art.run)


def _query_layers(q, mlg: MultiLayerGraph) -> list[int]:
    return sorted(mlg.layers_of(q.tags)) or [L.layer_id for L in mlg.layers]


def rank_by_betweenness(q, mlg: MultiLayerGraph, centralities: Sequence[CentralityTable]) -> list[int]:
    """Experts of the question's layers by their best betweenness, ids break ties."""
    best: dict[int, float] = {}
    for lid in _query_layers(q, mlg):
        layer, table = mlg.layers[lid], centralities[lid]
        for j in np.flatnonzero(layer.is_expert):
            u = int(layer.nodes[j])
            best[u] = max(best.get(u, -1.0), float(table.betweenness[j]))
    return sorted(best, key=lambda u: (-best[u], u))


def rank_by_bm25(q, mlg: MultiLayerGraph, indexes, top_n: int) -> list[int]:
    allowed = set()
    for lid in _query_layers(q, mlg):
        L = mlg.layers[lid]
        allowed.update(int(u) for u in L.nodes[L.is_expert])
    tag_res, text_res = retrieve(q, *indexes, top_n)
    return [u for u in content_order(tag_res, text_res, None) if u in allowed]


def run_pipeline(cfg: PipelineConfig, force: bool = False, resume: bool = False,
                 shared: dict | None = None) -> EvalReport:
    return Pipeline(cfg, force=force, shared=shared).run(resume=resume)


def run_ablation(cfg: PipelineConfig, modes: Sequence[str] = MODES, baseline: str = "cb",
                 force: bool = False) -> tuple[ComparisonTable, dict[str, EvalReport]]:
    """Run each mode into ``<artifacts>/<mode>`` and compare against ``baseline``."""
    if baseline not in modes:
        raise ValueError(f"baseline {baseline!r} is not among the modes")
    root = Path(cfg.artifacts)
    shared: dict = {}
    reports = {}
    for mode in modes:
        sub = cfg.replace(mode=mode, artifacts=str(root / mode))
        reports[MODE_LABELS[mode]] = run_pipeline(sub, force=force, shared=shared)
    table = compare_runs(reports, MODE_LABELS[baseline])
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.txt").write_text(table.to_text() + "\n")
    _dump_json(root / "ablation.json", table.to_json())
    return table, reports
