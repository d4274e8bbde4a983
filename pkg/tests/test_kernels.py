import os
import subprocess
import sys

import numpy as np
import pytest

from expertfind import _backend, kernels
from expertfind.ranker import HyperParams, LtrDataset, train_lambdamart

from conftest import make_layer, random_graph


def both(backend, fn):
    backend(True)
    a = fn()
    backend(False)
    b = fn()
    return a, b


def test_random_walks_identical(backend):
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        L = make_layer(n, random_graph(rng, n, 0.15))
        starts = rng.integers(0, n, size=int(rng.integers(1, 5)))
        u = rng.random((starts.size, 4, 7))
        a, b = both(backend, lambda: kernels.random_walks(L.indptr, L.indices, L.cumw, starts, u))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_lambdas_agree(backend):
    rng = np.random.default_rng(1)
    sizes = rng.integers(1, 15, size=30)
    ptr = np.r_[0, np.cumsum(sizes)]
    labels = np.zeros(ptr[-1])
    for g in range(30):
        labels[ptr[g] + rng.integers(sizes[g])] = 1
    scores = rng.normal(size=ptr[-1]).round(1)  # rounding forces score ties
    a, b = both(backend, lambda: kernels.lambdarank_gradients(scores, labels, ptr, 5, 1.5))
    assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12)


def test_histogram_and_predict_agree(backend):
    rng = np.random.default_rng(2)
    bins = rng.integers(0, 16, size=(200, 5)).astype(np.uint8)
    rows = rng.choice(200, 120, replace=False)
    g, h = rng.normal(size=200), rng.random(200)
    a, b = both(backend, lambda: kernels.histogram(bins, rows, g, h, 16))
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-12)

    X = rng.normal(size=(300, 3))
    groups = [(q, np.arange(10), X[10 * q:10 * q + 10], np.eye(10)[q % 10]) for q in range(30)]
    ds = LtrDataset.from_groups(groups, ["a", "b", "c"])
    m = train_lambdamart(ds, HyperParams(n_estimators=5, num_leaves=6, min_data_in_leaf=3))
    p, q = both(backend, lambda: m.predict(X))
    assert np.allclose(p, q, atol=1e-12)


def test_env_flag_selects_numpy():
    code = "from expertfind import _backend; print(_backend.use_numba())"
    env = dict(os.environ, EXPERTFIND_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "False"


def test_set_numba_returns_previous():
    prev = _backend.set_numba(False)
    try:
        assert _backend.set_numba(prev) is False
    finally:
        _backend.set_numba(prev)


@pytest.mark.skipif(not _backend.HAS_NUMBA, reason="numba not installed")
def test_numba_path_available():
    assert _backend.HAS_NUMBA
