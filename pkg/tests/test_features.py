import copy

import numpy as np
import pytest

from expertfind.centrality import auxiliary_centralities
from expertfind.features import (CONTENT_FEATURES, FEATURE_NAMES, NETWORK_FEATURES, SENTINEL,
                                 activity_stats, extract_features, read_feature_table,
                                 write_feature_table)
from expertfind.ingest import Question, UserStats
from expertfind.mlg import MultiLayerGraph
from expertfind.retrieval import RankedQuestions
from expertfind.selection import CandidateSet, TraceEntry
from expertfind.topics import TagClustering

from conftest import make_dataset, make_layer


def test_feature_names():
    assert len(FEATURE_NAMES) == 23 and len(set(FEATURE_NAMES)) == 23
    assert set(NETWORK_FEATURES) <= set(FEATURE_NAMES)
    assert set(CONTENT_FEATURES) <= set(FEATURE_NAMES)
    assert "ScoreIndexTag" not in NETWORK_FEATURES and "StepsNetwork" not in CONTENT_FEATURES


def test_activity_stats():
    h = 3600
    ds = make_dataset([(1, 1, 0, ["a"], [(11, 7)], 11), (2, 1, 2 * h, ["a"], [(12, 7)], 12),
                       (3, 1, 4 * h, ["a"], [(13, 7), (14, 8)], 13)])
    act = activity_stats(ds)
    assert act[7] == pytest.approx((2.0, 0.0))
    assert act[8] == (SENTINEL, SENTINEL)


def _fixture():
    L0 = make_layer(3, [(0, 1, 0.4), (1, 2, 0.8)], nodes=[10, 11, 12])
    L0.answers_in_layer[:] = [3, 6, 2]
    L0.accepted_in_layer[:] = [1, 3, 2]
    L1 = make_layer(2, [(0, 1, 0.5)], nodes=[11, 13], layer_id=1)
    L1.answers_in_layer[:] = [4, 1]
    L1.accepted_in_layer[:] = [4, 1]
    clus = TagClustering(2, {"a": 0, "b": 1}, np.zeros((2, 0)), {}, ())
    g = MultiLayerGraph([L0, L1], clus, 1, 0.0, 1)
    cents = [auxiliary_centralities(L) for L in g.layers]
    cs = CandidateSet(5, layers_used=[0, 1])
    cs.traces = {
        (0, "network"): {11: TraceEntry(1, 1, True), 10: TraceEntry(3, 2, False)},
        (0, "content"): {12: TraceEntry(1, 1, True)},
        (1, "network"): {11: TraceEntry(2, 3, True)},
        (1, "content"): {11: TraceEntry(4, 1, False), 13: TraceEntry(1, 1, True)},
    }
    cs.tag_results = RankedQuestions(np.array([1, 2, 3]), np.array([2.0, 3.5, 1.0]),
                                     np.array([11, 11, 10]))
    cs.text_results = RankedQuestions(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))
    users = {u: UserStats(u, answers=4, accepted=1, reputation=100 + u) for u in (10, 11, 12, 13)}
    activity = {11: (2.0, 0.0)}
    q = Question(5, 1, 0.0, "t", "", ("a", "b"), None)
    return q, cs, g, cents, users, activity


def test_extract_hand_values():
    q, cs, g, cents, users, act = _fixture()
    fm = extract_features(q, cs, g, cents, users, act)
    assert fm.experts.tolist() == [10, 11, 12, 13]
    r = dict(zip(FEATURE_NAMES, fm.X[1]))
    assert r["Reputation"] == 111 and r["Ratio"] == 0.25
    assert (r["AvgActivity"], r["StdActivity"]) == (2.0, 0.0)
    assert r["LayerCount"] == 2
    assert r["QueryKnowledge"] == pytest.approx(6 / 3 + 4 / 4)
    assert r["VisitCountNetwork"] == 4 and r["StepsNetwork"] == 1
    assert r["VisitCountContent"] == 1 and r["StepsContent"] == 4
    assert r["BetweennessPos"] == 1 and r["BetweennessScore"] == 1.0
    assert r["Degree"] == 3 and r["AvgWeights"] == pytest.approx(0.6 + 0.5)
    assert r["ScoreIndexTag"] == 5.5 and r["FrequencyIndexTag"] == 2
    assert r["ScoreIndexText"] == 0 and r["FrequencyIndexText"] == 0
    assert r["Closeness"] == pytest.approx(1.0)  # max(1.0 in the path, 1.0 in the pair)

    r10 = dict(zip(FEATURE_NAMES, fm.X[0]))
    assert r10["StepsContent"] == SENTINEL and r10["VisitCountContent"] == 0
    assert r10["AvgActivity"] == SENTINEL
    assert r10["FrequencyIndexTag"] == 1 and r10["ScoreIndexTag"] == 1.0
    assert r10["LayerCount"] == 1 and r10["StepsNetwork"] == 3
    # ranks in layer 0: 11 (centre) then 10, 12 by id
    assert r10["BetweennessPos"] == 2
    r12 = dict(zip(FEATURE_NAMES, fm.X[2]))
    assert r12["StepsNetwork"] == SENTINEL and r12["BetweennessPos"] == 3


def test_extract_is_pure():
    q, cs, g, cents, users, act = _fixture()
    before = copy.deepcopy(cs.to_json())
    a = extract_features(q, cs, g, cents, users, act)
    b = extract_features(q, cs, g, cents, users, act)
    assert np.array_equal(a.X, b.X)
    assert cs.to_json() == before
    assert np.all(np.isfinite(a.X))


def test_select_and_column():
    q, cs, g, cents, users, act = _fixture()
    fm = extract_features(q, cs, g, cents, users, act)
    sub = fm.select(CONTENT_FEATURES)
    assert sub.X.shape == (4, len(CONTENT_FEATURES))
    assert np.array_equal(sub.column("Degree"), fm.column("Degree"))


def test_feature_table_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    rows = [(7, 10 + i, int(i == 0), rng.random(23)) for i in range(4)]
    write_feature_table(tmp_path / "f.tsv", rows)
    names, X, groups = read_feature_table(tmp_path / "f.tsv")
    assert names == list(FEATURE_NAMES)
    assert np.array_equal(X, np.array([r[3] for r in rows]))
    assert groups.tolist() == [[7, 10, 1], [7, 11, 0], [7, 12, 0], [7, 13, 0]]
