"""Time each kernel on the numba path and on the numpy path.

    python benchmarks/bench_kernels.py [--repeat 5] [--nodes 400]
"""
import argparse
import time

import numpy as np
from scipy import sparse

from expertfind import _backend, kernels


def random_csr(n, p, rng):
    a = sparse.random(n, n, density=p, random_state=np.random.RandomState(rng.integers(2**31)))
    a = sparse.triu(a, k=1)
    a = (a + a.T).tocsr()
    a.sort_indices()
    return a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data + 0.1


def cases(n, rng):
    indptr, indices, w = random_csr(n, 8.0 / n, rng)
    cumw = np.cumsum(w)
    starts = rng.integers(0, n, 50)
    u = rng.random((50, 5, 10))

    sizes = rng.integers(5, 60, 2000)
    ptr = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    scores = rng.normal(size=ptr[-1])
    labels = np.zeros(ptr[-1])
    labels[ptr[:-1] + (rng.random(sizes.size) * sizes).astype(np.int64)] = 1

    bins = rng.integers(0, 255, size=(ptr[-1], 23)).astype(np.uint8)
    grad, hess = rng.normal(size=ptr[-1]), rng.random(ptr[-1])
    rows = np.arange(ptr[-1])

    depth = 6
    n_nodes = 2 ** (depth + 1) - 1
    feat = np.where(np.arange(n_nodes) < 2 ** depth - 1, rng.integers(0, 23, n_nodes), -1)
    left = np.where(feat >= 0, 2 * np.arange(n_nodes) + 1, -1)
    right = np.where(feat >= 0, 2 * np.arange(n_nodes) + 2, -1)
    n_trees = 100
    forest = (np.tile(feat, n_trees), rng.normal(size=n_nodes * n_trees),
              np.tile(left, n_trees), np.tile(right, n_trees), rng.normal(size=n_nodes * n_trees),
              np.arange(0, n_nodes * (n_trees + 1), n_nodes, dtype=np.int64))
    X = rng.normal(size=(20_000, 23))

    return {
        "brandes": lambda: kernels.brandes(indptr, indices, n),
        "random_walks": lambda: kernels.random_walks(indptr, indices, cumw, starts, u),
        "lambdarank_gradients": lambda: kernels.lambdarank_gradients(scores, labels, ptr),
        "histogram": lambda: kernels.histogram(bins, rows, grad, hess, 256),
        "predict_trees": lambda: kernels.predict_trees(X, *forest),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _backend.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    todo = cases(args.nodes, np.random.default_rng(args.seed))
    print(f"{'kernel':<22}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for name, fn in todo.items():
        _backend.set_numba(True)
        fn()  # compile
        t_nb = best_of(fn, args.repeat)
        _backend.set_numba(False)
        t_np = best_of(fn, args.repeat)
        print(f"{name:<22}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
