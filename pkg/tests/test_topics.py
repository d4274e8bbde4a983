import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import silhouette_score

from expertfind.topics import (CoMatrix, TagClustering, build_cooccurrence, cluster_tags, kmeans,
                               silhouette, single_cluster)

from conftest import make_dataset


def _ds(tag_sets):
    return make_dataset([(i + 1, 1, i, tags, [(100 + i, 2)], 100 + i)
                         for i, tags in enumerate(tag_sets)])


def test_cooccurrence_hand_count():
    ds = _ds([["a", "b"], ["a", "b"], ["a", "c"]])
    m = build_cooccurrence(ds, lam=1, normalize=False)
    assert m.cols == ["a"]
    got = dict(zip(m.rows, m.values[:, 0]))
    assert got == {"a": 3.0, "b": 2.0, "c": 1.0}


def test_cooccurrence_zero_row_and_normalization():
    ds = _ds([["a", "b"], ["a", "c"], ["a", "b"], ["z"]])
    m = build_cooccurrence(ds, lam=2)
    z = m.rows.index("z")
    assert np.all(m.values[z] == 0)
    sums = m.values.sum(axis=1)
    assert np.allclose(sums[sums > 0], 1.0, atol=1e-9)


def test_cooccurrence_lambda_bounds():
    ds = _ds([["a", "b"]])
    with pytest.raises(ValueError):
        build_cooccurrence(ds, lam=3)


def test_feature_ties_lexicographic():
    ds = _ds([["b", "a"], ["c"]])
    assert build_cooccurrence(ds, lam=2).cols == ["a", "b"]


@given(arrays(np.float64, (12, 3), elements=st.floats(0, 1)), st.integers(1, 4), st.integers(0, 99))
def test_kmeans_objective_non_increasing(X, k, seed):
    res = kmeans(X, k, np.random.default_rng(seed))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-9 * (1 + h[:-1]))
    assert len(np.unique(res.labels)) == k or len(np.unique(X, axis=0)) < k


def test_kmeans_reseeds_empty_clusters():
    X = np.zeros((5, 2))
    res = kmeans(X, 2, np.random.default_rng(0))
    assert sorted(np.bincount(res.labels, minlength=2)) in ([1, 4], [2, 3])


@given(st.integers(0, 10_000))
def test_silhouette_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    X = rng.random((n, 3))
    labels = rng.integers(0, 3, n)
    if len(np.unique(labels)) < 2 or len(np.unique(labels)) == n:
        return
    assert silhouette(X, labels, chunk=7) == pytest.approx(silhouette_score(X, labels), abs=1e-9)


def test_silhouette_bounds_and_degenerate():
    X = np.ones((6, 2))
    assert silhouette(X, np.array([0, 0, 0, 1, 1, 1])) <= 0.0
    assert silhouette(X, np.zeros(6, int)) == 0.0


def _two_groups():
    rows = ["a1", "a2", "a3", "b1", "b2", "b3"]
    v = np.array([[0.5, 0.5, 0, 0]] * 3 + [[0, 0, 0.5, 0.5]] * 3)
    return CoMatrix(rows, ["f1", "f2", "f3", "f4"], v, normalized=True)


def test_cluster_two_orthogonal_groups():
    res = cluster_tags(_two_groups(), [2, 3], seed=0)
    assert res.k == 2
    assert {t for t, c in res.assignment.items() if c == 0} == {"a1", "a2", "a3"}
    assert res.silhouette_by_k[2] == pytest.approx(1.0)


def test_cluster_ties_pick_smallest_k():
    m = _two_groups()
    res = cluster_tags(m, [2, 2, 3], seed=1)
    assert res.k == 2


def test_cluster_errors():
    with pytest.raises(ValueError):
        cluster_tags(_two_groups(), [])
    with pytest.raises(ValueError):
        cluster_tags(_two_groups(), [1, 2])
    with pytest.raises(ValueError):
        cluster_tags(_two_groups(), [7])


@given(st.permutations(range(6)), st.integers(0, 50))
def test_cluster_permutation_invariant(perm, seed):
    m = _two_groups()
    rng = np.random.default_rng(seed)
    m = CoMatrix(m.rows, m.cols, m.values + rng.random(m.values.shape) * 0.05, True)
    p = CoMatrix([m.rows[i] for i in perm], m.cols, m.values[list(perm)], True)
    a = cluster_tags(m, [2, 3], seed=seed)
    b = cluster_tags(p, [2, 3], seed=seed)
    assert a.assignment == b.assignment and a.k == b.k


def test_clustering_json_roundtrip(tmp_path):
    res = cluster_tags(_two_groups(), [2, 3])
    res.save(tmp_path / "c.json")
    back = TagClustering.load(tmp_path / "c.json")
    assert back.assignment == res.assignment and back.k == res.k
    assert np.array_equal(back.centroids, res.centroids)
    assert back.silhouette_by_k == res.silhouette_by_k


def test_single_cluster():
    ds = _ds([["a", "b"], ["c"]])
    sc = single_cluster(ds)
    assert sc.k == 1 and set(sc.assignment.values()) == {0}
    assert set(sc.assignment) == {"a", "b", "c"}
