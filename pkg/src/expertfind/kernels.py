"""Hot inner loops, each in two flavours.

``_nb_*`` functions are numba-compiled scalar loops; ``_np_*`` functions are
vectorised numpy equivalents. The public wrappers dispatch on
:func:`expertfind._backend.use_numba` at call time. Graphs are passed as CSR
arrays (``indptr``, ``indices``) of an undirected adjacency.
"""
import numpy as np

from . import _backend
from ._backend import njit

NEVER = np.int64(2**62)


# ---------------------------------------------------------------------------
# Brandes betweenness + harmonic closeness (unweighted, undirected)
# ---------------------------------------------------------------------------

@njit
def _nb_brandes(indptr, indices, n):
    bc = np.zeros(n)
    harmonic = np.zeros(n)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        head = 0
        tail = 1
        queue[0] = s
        count = 0
        while head < tail:
            v = queue[head]
            head += 1
            order[count] = v
            count += 1
            dv = dist[v]
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        for c in range(count - 1, 0, -1):
            w = order[c]
            harmonic[s] += 1.0 / dist[w]
            coeff = (1.0 + delta[w]) / sigma[w]
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] * coeff
            bc[w] += delta[w]
    return bc / 2.0, harmonic


def _gather_edges(indptr, indices, nodes):
    """All (source, neighbour) pairs leaving ``nodes``."""
    starts = indptr[nodes]
    counts = indptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    src = np.repeat(nodes, counts)
    offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
    nbr = indices[np.arange(total) + offsets]
    return src, nbr


def _np_brandes(indptr, indices, n):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    bc = np.zeros(n)
    harmonic = np.zeros(n)
    for s in range(n):
        dist = np.full(n, -1, dtype=np.int64)
        sigma = np.zeros(n)
        dist[s] = 0
        sigma[s] = 1.0
        levels = [np.array([s], dtype=np.int64)]
        d = 0
        while True:
            src, nbr = _gather_edges(indptr, indices, levels[-1])
            fresh = np.unique(nbr[dist[nbr] < 0])
            if fresh.size == 0:
                break
            dist[fresh] = d + 1
            on_path = dist[nbr] == d + 1
            np.add.at(sigma, nbr[on_path], sigma[src[on_path]])
            levels.append(fresh)
            d += 1
        delta = np.zeros(n)
        for lvl in range(len(levels) - 2, -1, -1):
            src, nbr = _gather_edges(indptr, indices, levels[lvl])
            down = dist[nbr] == lvl + 1
            src, nbr = src[down], nbr[down]
            np.add.at(delta, src, sigma[src] * (1.0 + delta[nbr]) / sigma[nbr])
        delta[s] = 0.0
        bc += delta
        reached = dist > 0
        harmonic[s] = np.sum(1.0 / dist[reached])
    return bc / 2.0, harmonic


def brandes(indptr, indices, n):
    """Exact unnormalised betweenness and harmonic-closeness sums."""
    if n == 0:
        return np.zeros(0), np.zeros(0)
    if _backend.use_numba():
        return _nb_brandes(np.asarray(indptr, dtype=np.int64),
                           np.asarray(indices, dtype=np.int64), n)
    return _np_brandes(indptr, indices, n)


# ---------------------------------------------------------------------------
# Weighted random walks
# ---------------------------------------------------------------------------

@njit
def _nb_random_walks(indptr, indices, cumw, starts, uniforms):
    n = indptr.shape[0] - 1
    visits = np.zeros(n, dtype=np.int64)
    first = np.full(n, NEVER, dtype=np.int64)
    n_starts, n_walks, n_steps = uniforms.shape
    for a in range(n_starts):
        for b in range(n_walks):
            cur = starts[a]
            for step in range(n_steps):
                lo = indptr[cur]
                hi = indptr[cur + 1]
                if hi == lo:
                    break
                base = cumw[lo - 1] if lo > 0 else 0.0
                target = base + uniforms[a, b, step] * (cumw[hi - 1] - base)
                # first j in [lo, hi) with cumw[j] > target
                left = lo
                right = hi - 1
                while left < right:
                    mid = (left + right) // 2
                    if cumw[mid] > target:
                        right = mid
                    else:
                        left = mid + 1
                cur = indices[left]
                visits[cur] += 1
                if step + 1 < first[cur]:
                    first[cur] = step + 1
    return visits, first


def _np_random_walks(indptr, indices, cumw, starts, uniforms):
    n = indptr.shape[0] - 1
    visits = np.zeros(n, dtype=np.int64)
    first = np.full(n, NEVER, dtype=np.int64)
    n_starts, n_walks, n_steps = uniforms.shape
    cur = np.repeat(np.asarray(starts, dtype=np.int64), n_walks)
    u = uniforms.reshape(n_starts * n_walks, n_steps)
    alive = np.ones(cur.shape[0], dtype=bool)
    for step in range(n_steps):
        lo = indptr[cur]
        hi = indptr[cur + 1]
        alive &= hi > lo
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        lo, hi = lo[idx], hi[idx]
        base = np.where(lo > 0, cumw[np.maximum(lo - 1, 0)], 0.0)
        target = base + u[idx, step] * (cumw[hi - 1] - base)
        j = np.searchsorted(cumw, target, side="right")
        j = np.clip(j, lo, hi - 1)
        nxt = indices[j]
        cur[idx] = nxt
        np.add.at(visits, nxt, 1)
        np.minimum.at(first, nxt, step + 1)
    return visits, first


def random_walks(indptr, indices, cumw, starts, uniforms):
    """Run ``uniforms.shape[1]`` walks of ``uniforms.shape[2]`` steps per start.

    ``cumw`` is the running sum of the CSR edge weights, so that each row's
    transition law is ``w_ij / sum_j w_ij``. Returns per-node visit counts and
    the 1-based step of first visit (``NEVER`` if unvisited). A walk standing
    on an isolated node stops.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    starts = np.asarray(starts, dtype=np.int64)
    if _backend.use_numba():
        return _nb_random_walks(indptr, indices, cumw, starts, uniforms)
    return _np_random_walks(indptr, indices, cumw, starts, uniforms)


# ---------------------------------------------------------------------------
# LambdaRank gradients
# ---------------------------------------------------------------------------

@njit
def _nb_lambdas(scores, labels, group_ptr, truncation, sigma):
    n = scores.shape[0]
    lambdas = np.zeros(n)
    hess = np.zeros(n)
    for g in range(group_ptr.shape[0] - 1):
        a = group_ptr[g]
        b = group_ptr[g + 1]
        m = b - a
        s = scores[a:b]
        lab = labels[a:b]
        order = np.argsort(-s, kind="mergesort")
        rank = np.empty(m, dtype=np.int64)
        for p in range(m):
            rank[order[p]] = p
        ideal = np.sort(lab)[::-1]
        max_dcg = 0.0
        for p in range(min(m, truncation)):
            max_dcg += (2.0 ** ideal[p] - 1.0) / np.log2(p + 2.0)
        if max_dcg <= 0.0:
            continue
        for i in range(m):
            for j in range(m):
                if lab[i] <= lab[j]:
                    continue
                if rank[i] >= truncation and rank[j] >= truncation:
                    continue
                gain = (2.0 ** lab[i]) - (2.0 ** lab[j])
                disc = abs(1.0 / np.log2(rank[i] + 2.0) - 1.0 / np.log2(rank[j] + 2.0))
                delta = gain * disc / max_dcg
                rho = 1.0 / (1.0 + np.exp(sigma * (s[i] - s[j])))
                lam = sigma * delta * rho
                h = sigma * sigma * delta * rho * (1.0 - rho)
                lambdas[a + i] += lam
                lambdas[a + j] -= lam
                hess[a + i] += h
                hess[a + j] += h
    return lambdas, hess


def _np_lambdas(scores, labels, group_ptr, truncation, sigma):
    n = scores.shape[0]
    lambdas = np.zeros(n)
    hess = np.zeros(n)
    for g in range(group_ptr.shape[0] - 1):
        a, b = group_ptr[g], group_ptr[g + 1]
        s = scores[a:b]
        lab = labels[a:b]
        order = np.argsort(-s, kind="mergesort")
        rank = np.empty(b - a, dtype=np.int64)
        rank[order] = np.arange(b - a)
        ideal = np.sort(lab)[::-1][:truncation]
        max_dcg = np.sum((2.0 ** ideal - 1.0) / np.log2(np.arange(ideal.size) + 2.0))
        if max_dcg <= 0.0:
            continue
        inv_disc = 1.0 / np.log2(rank + 2.0)
        pair = (lab[:, None] > lab[None, :]) & (
            (rank[:, None] < truncation) | (rank[None, :] < truncation))
        gain = 2.0 ** lab[:, None] - 2.0 ** lab[None, :]
        delta = gain * np.abs(inv_disc[:, None] - inv_disc[None, :]) / max_dcg
        rho = 1.0 / (1.0 + np.exp(sigma * (s[:, None] - s[None, :])))
        lam = np.where(pair, sigma * delta * rho, 0.0)
        h = np.where(pair, sigma * sigma * delta * rho * (1.0 - rho), 0.0)
        lambdas[a:b] = lam.sum(axis=1) - lam.sum(axis=0)
        hess[a:b] = h.sum(axis=1) + h.sum(axis=0)
    return lambdas, hess


def lambdarank_gradients(scores, labels, group_ptr, truncation=10, sigma=1.0):
    """Per-document lambdas (ascent direction) and Newton weights.

    Pairs are kept when at least one member currently ranks inside the
    truncation window; each pair is weighted by the |NDCG change| of
    swapping the two documents.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    group_ptr = np.asarray(group_ptr, dtype=np.int64)
    if _backend.use_numba():
        return _nb_lambdas(scores, labels, group_ptr, int(truncation), float(sigma))
    return _np_lambdas(scores, labels, group_ptr, int(truncation), float(sigma))


# ---------------------------------------------------------------------------
# Gradient histograms for tree growth
# ---------------------------------------------------------------------------

@njit
def _nb_histogram(bins, rows, grad, hess, n_bins):
    n_feat = bins.shape[1]
    hg = np.zeros((n_feat, n_bins))
    hh = np.zeros((n_feat, n_bins))
    hc = np.zeros((n_feat, n_bins), dtype=np.int64)
    for r in rows:
        g = grad[r]
        h = hess[r]
        for f in range(n_feat):
            b = bins[r, f]
            hg[f, b] += g
            hh[f, b] += h
            hc[f, b] += 1
    return hg, hh, hc


def _np_histogram(bins, rows, grad, hess, n_bins):
    n_feat = bins.shape[1]
    sub = bins[rows].astype(np.int64) + np.arange(n_feat, dtype=np.int64) * n_bins
    flat = sub.ravel()
    size = n_feat * n_bins
    g = np.repeat(grad[rows], n_feat)
    h = np.repeat(hess[rows], n_feat)
    hg = np.bincount(flat, weights=g, minlength=size).reshape(n_feat, n_bins)
    hh = np.bincount(flat, weights=h, minlength=size).reshape(n_feat, n_bins)
    hc = np.bincount(flat, minlength=size).reshape(n_feat, n_bins).astype(np.int64)
    return hg, hh, hc


def histogram(bins, rows, grad, hess, n_bins):
    """Per-feature, per-bin sums of gradient, hessian and row count."""
    rows = np.asarray(rows, dtype=np.int64)
    if _backend.use_numba():
        return _nb_histogram(bins, rows, grad, hess, int(n_bins))
    return _np_histogram(bins, rows, grad, hess, int(n_bins))


# ---------------------------------------------------------------------------
# Tree-ensemble prediction
# ---------------------------------------------------------------------------

@njit
def _nb_predict(X, feature, threshold, left, right, value, tree_ptr):
    n = X.shape[0]
    out = np.zeros(n)
    for t in range(tree_ptr.shape[0] - 1):
        base = tree_ptr[t]
        for r in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[r] += value[base + node]
    return out


def _np_predict(X, feature, threshold, left, right, value, tree_ptr):
    n = X.shape[0]
    out = np.zeros(n)
    rows = np.arange(n)
    for t in range(tree_ptr.shape[0] - 1):
        base = tree_ptr[t]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[base + node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            nd = node[inner]
            go_left = X[r, f[inner]] <= threshold[base + nd]
            node[inner] = np.where(go_left, left[base + nd], right[base + nd])
        out += value[base + node]
    return out


def predict_trees(X, feature, threshold, left, right, value, tree_ptr):
    """Sum of leaf values over a flattened forest (node ids local per tree)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _backend.use_numba():
        return _nb_predict(X, feature, threshold, left, right, value, tree_ptr)
    return _np_predict(X, feature, threshold, left, right, value, tree_ptr)
