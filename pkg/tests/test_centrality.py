import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from expertfind import kernels
from expertfind.centrality import (auxiliary_centralities, betweenness_scores, eigenvector,
                                   load_tables, pagerank, save_tables)

from conftest import make_layer, random_graph


def enumerate_shortest_paths(n, edges):
    """Every shortest path between every unordered pair, listed explicitly."""
    adj = {i: set() for i in range(n)}
    for a, b, _ in edges:
        adj[a].add(b)
        adj[b].add(a)
    paths = {}
    for s in range(n):
        frontier, found, seen = [[s]], {}, {s}
        while frontier:
            nxt = []
            reached = set()
            for p in frontier:
                for v in sorted(adj[p[-1]]):
                    if v in seen:
                        continue
                    q = p + [v]
                    found.setdefault(v, []).append(q)
                    nxt.append(q)
                    reached.add(v)
            seen |= reached
            frontier = nxt
        for t, ps in found.items():
            if s < t:
                paths[(s, t)] = ps
    return paths


def betweenness_oracle(n, edges):
    bc = [0.0] * n
    for ps in enumerate_shortest_paths(n, edges).values():
        for p in ps:
            for v in p[1:-1]:
                bc[v] += 1.0 / len(ps)
    return bc


def test_path_star_complete():
    path = make_layer(3, [(0, 1, 1.0), (1, 2, 1.0)])
    assert betweenness_scores(path) == {0: 0.0, 1: 1.0, 2: 0.0}
    star = make_layer(4, [(0, i, 1.0) for i in (1, 2, 3)])
    assert betweenness_scores(star) == {0: 3.0, 1: 0.0, 2: 0.0, 3: 0.0}
    k4 = make_layer(4, [(i, j, 1.0) for i, j in itertools.combinations(range(4), 2)])
    assert set(betweenness_scores(k4).values()) == {0.0}
    assert betweenness_scores(make_layer(0, [])) == {}


@pytest.mark.parametrize("use_numba", [True, False])
def test_brandes_matches_path_enumeration(use_numba, backend):
    backend(use_numba)
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(1, 13))
        edges = random_graph(rng, n, float(rng.uniform(0.1, 0.7)))
        got = betweenness_scores(make_layer(n, edges))
        assert [got[i] for i in range(n)] == pytest.approx(betweenness_oracle(n, edges), abs=1e-9)


def _nx(n, edges):
    G = nx.Graph()
    G.add_nodes_from(range(n))
    G.add_weighted_edges_from(edges)
    return G


@given(st.integers(0, 10_000))
def test_against_networkx(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 15))
    edges = random_graph(rng, n, 0.3)
    layer = make_layer(n, edges)
    G = _nx(n, edges)
    t = auxiliary_centralities(layer)
    bc = nx.betweenness_centrality(G, normalized=False)
    assert t.betweenness.tolist() == pytest.approx([bc[i] for i in range(n)], abs=1e-9)
    pr = nx.pagerank(G, alpha=0.85, weight="weight", tol=1e-12, max_iter=10_000)
    assert t.pagerank.tolist() == pytest.approx([pr[i] for i in range(n)], abs=1e-6)
    hc = nx.harmonic_centrality(G)
    assert t.closeness.tolist() == pytest.approx([hc[i] / (n - 1) for i in range(n)], abs=1e-12)
    assert t.degree.tolist() == [G.degree(i) for i in range(n)]
    for i in range(n):
        ws = [d["weight"] for _, _, d in G.edges(i, data=True)]
        assert t.avg_weight[i] == pytest.approx(np.mean(ws) if ws else 0.0)


def test_eigenvector_against_networkx():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(3, 12))
        edges = random_graph(rng, n, 0.5)
        if not edges:
            continue
        G = _nx(n, edges)
        ev = nx.eigenvector_centrality(G, weight="weight", tol=1e-12, max_iter=10_000)
        vec, ok = eigenvector(make_layer(n, edges))
        assert ok
        assert vec.tolist() == pytest.approx([ev[i] for i in range(n)], abs=1e-6)


def test_small_examples():
    two = auxiliary_centralities(make_layer(2, [(0, 1, 0.7)]))
    assert two.pagerank.tolist() == pytest.approx([0.5, 0.5])
    iso = auxiliary_centralities(make_layer(3, [(0, 1, 0.7)]))
    assert iso.closeness[2] == 0 and iso.degree[2] == 0 and iso.avg_weight[2] == 0
    tri, ok = eigenvector(make_layer(3, [(0, 1, 0.6), (1, 2, 0.6), (0, 2, 0.6)]))
    assert ok and np.ptp(tri) < 1e-12


def test_eigenvector_nonconvergence_flag():
    vec, ok = eigenvector(make_layer(3, [(0, 1, 1.0), (1, 2, 0.5)]), max_iter=1)
    assert not ok and not vec.any()


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_pagerank_scale_invariant_and_normalised(seed, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    edges = random_graph(rng, n, 0.4)
    a = pagerank(make_layer(n, edges))
    b = pagerank(make_layer(n, [(i, j, w * c) for i, j, w in edges]))
    assert a.sum() == pytest.approx(1.0, abs=1e-6)
    assert a == pytest.approx(b, abs=1e-9)


@given(st.integers(0, 10_000))
def test_relabeling_permutes_scores(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    edges = random_graph(rng, n, 0.4)
    perm = rng.permutation(n)
    t = auxiliary_centralities(make_layer(n, edges))
    u = auxiliary_centralities(make_layer(n, [(perm[i], perm[j], w) for i, j, w in edges]))
    for name in ("betweenness", "pagerank", "closeness", "degree", "avg_weight", "eigenvector"):
        assert getattr(u, name)[perm] == pytest.approx(getattr(t, name), abs=1e-9)


def test_expert_ranks_are_permutation():
    layer = make_layer(5, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)],
                       experts={10, 12, 13, 14},
                       nodes=[10, 11, 12, 13, 14])
    t = auxiliary_centralities(layer)
    assert t.expert_order.tolist() == [12, 13, 10, 14]
    assert sorted(t.betweenness_rank.values()) == [1, 2, 3, 4]


def test_backends_agree(backend):
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 30))
        layer = make_layer(n, random_graph(rng, n, 0.2))
        backend(True)
        a = kernels.brandes(layer.indptr, layer.indices, n)
        backend(False)
        b = kernels.brandes(layer.indptr, layer.indices, n)
        for x, y in zip(a, b):
            assert np.allclose(x, y, rtol=0, atol=1e-12)


def test_tables_roundtrip(tmp_path):
    t = auxiliary_centralities(make_layer(4, [(0, 1, 0.7), (1, 2, 0.9)], experts={0, 1}))
    save_tables([t], tmp_path / "c.bin")
    (back,), meta = load_tables(tmp_path / "c.bin")
    assert meta["betweenness_weighting"] == "unweighted"
    for f in ("betweenness", "eigenvector", "pagerank", "closeness", "degree", "avg_weight",
              "expert_order"):
        assert np.array_equal(getattr(back, f), getattr(t, f))
    assert back.betweenness_rank == t.betweenness_rank
