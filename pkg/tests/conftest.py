import os

import numpy as np
import pytest
from hypothesis import settings
from scipy import sparse

from expertfind.ingest import RawPost, clean
from expertfind.mlg import Layer

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def make_dataset(items, reputation=None):
    """items: (qid, asker, ts, tags, [(aid, answerer), ...], accepted_aid[, title, body])."""
    raw = []
    for it in items:
        qid, asker, ts, tags, answers, acc = it[:6]
        title = it[6] if len(it) > 6 else f"question {qid}"
        body = it[7] if len(it) > 7 else ""
        raw.append(RawPost(qid, "question", asker, float(ts), title, body, tuple(tags),
                           accepted_answer_id=acc))
        for k, (aid, u) in enumerate(answers):
            raw.append(RawPost(aid, "answer", u, float(ts) + 1 + k, None, "", parent_id=qid))
    return clean(raw, reputation)


def make_layer(n, edges, experts=None, mu=None, nodes=None, layer_id=0):
    """Layer over positions 0..n-1 (ids ``nodes``) from (i, j, w) edges."""
    nodes = np.arange(n, dtype=np.int64) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if edges:
        src, dst, w = (np.array(c) for c in zip(*edges))
        a = sparse.coo_matrix((np.r_[w, w].astype(float), (np.r_[src, dst], np.r_[dst, src])),
                              shape=(n, n)).tocsr()
        a.sort_indices()
        indptr, indices, weights = a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data
    else:
        indptr, indices, weights = np.zeros(n + 1, np.int64), np.zeros(0, np.int64), np.zeros(0)
    is_exp = np.ones(n, bool) if experts is None else np.isin(nodes, list(experts))
    mu = np.full(n, 0.5) if mu is None else np.asarray(mu, dtype=float)
    return Layer(layer_id, nodes, [], sparse.csr_matrix((n, 0)), indptr, indices,
                 np.asarray(weights, dtype=float), is_exp, np.ones(n, np.int64),
                 np.ones(n, np.int64), mu)


def random_graph(rng, n, p):
    edges = [(i, j, float(rng.uniform(0.5, 1.0)))
             for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return edges


@pytest.fixture
def backend():
    """Yields a setter that switches the kernel backend; restores it afterwards."""
    from expertfind import _backend

    prev = _backend.use_numba()
    yield _backend.set_numba
    _backend.set_numba(prev)


ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str = "") -> bool:
    """Print and remember one PASS/FAIL line for the acceptance summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
