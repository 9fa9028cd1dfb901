"""Mining in the compressed domain: k-NN by distance bounds and k-Means.

Every compressed object only yields an interval ``[lb, ub]`` for its distance
to a query, so we rank with a proxy: the lower bound, the upper bound or the
midpoint (the default, usually the most accurate).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bounds import BoundPair, bounds_vs_uncompressed, distance_bounds
from .compress import CompressedSeq
from .errors import InvalidInputError
from .workers import ordered_map


class Proxy(enum.Enum):
    LB = "LB"
    UB = "UB"
    AVG = "AVG"
    POINT = "POINT"

    @classmethod
    def parse(cls, value) -> "Proxy":
        if isinstance(value, Proxy):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise InvalidInputError(f"unknown proxy {value!r}") from None


@dataclass(frozen=True)
class KnnResult:
    indices: np.ndarray
    proxy_used: Proxy
    proxy_values: np.ndarray


def proxy_value(b: BoundPair, proxy) -> float:
    proxy = Proxy.parse(proxy)
    if proxy == Proxy.LB:
        return b.lb
    if proxy == Proxy.UB:
        return b.ub
    if proxy == Proxy.AVG:
        return 0.5 * (b.lb + b.ub)
    raise InvalidInputError("POINT proxy applies to projected data only")


def all_bounds(db: Sequence[CompressedSeq], query: CompressedSeq, threads=None) -> np.ndarray:
    """``(len(db), 2)`` array of ``lb, ub`` against the query."""
    res = ordered_map(lambda c: distance_bounds(query, c), db, threads)
    return np.array([(b.lb, b.ub) for b in res]).reshape(-1, 2)


def _check_k(k, m):
    if m == 0:
        raise InvalidInputError("database is empty")
    if not 1 <= k <= m:
        raise InvalidInputError(f"k must be in [1, {m}], got {k}")


def rank(values, k: int, proxy=Proxy.AVG) -> KnnResult:
    """k smallest values; equal values go to the lower id."""
    values = np.asarray(values, dtype=np.float64)
    _check_k(k, values.size)
    ids = np.arange(values.size)
    order = np.lexsort((ids, values))[:k]
    return KnnResult(order, Proxy.parse(proxy), values[order])


def proxies_from_bounds(bounds: np.ndarray, proxy) -> np.ndarray:
    proxy = Proxy.parse(proxy)
    if proxy == Proxy.LB:
        return bounds[:, 0]
    if proxy == Proxy.UB:
        return bounds[:, 1]
    if proxy == Proxy.AVG:
        return 0.5 * (bounds[:, 0] + bounds[:, 1])
    raise InvalidInputError("POINT proxy applies to projected data only")


def knn_search(db: Sequence[CompressedSeq], query: CompressedSeq, k: int,
               proxy=Proxy.AVG, bounds: Optional[np.ndarray] = None) -> KnnResult:
    """Rank every database object by a bound-based proxy distance to ``query``."""
    _check_k(k, len(db))
    if bounds is None:
        bounds = all_bounds(db, query)
    return rank(proxies_from_bounds(bounds, proxy), k, proxy)


def knn_projected(db_projected, query_projected, k: int) -> KnnResult:
    P = np.asarray(db_projected, dtype=np.float64)
    q = np.asarray(query_projected, dtype=np.float64)
    if P.ndim != 2 or q.shape != (P.shape[1],):
        raise InvalidInputError("projected query and database dimensions differ")
    return rank(np.linalg.norm(P - q, axis=1), k, Proxy.POINT)


def exact_knn(data, query, k: int) -> np.ndarray:
    """Ids of the true k nearest rows (ties to the lower id)."""
    return rank(np.linalg.norm(np.asarray(data) - np.asarray(query), axis=1), k).indices


def recall_at_k(found, truth) -> float:
    f = found.indices if isinstance(found, KnnResult) else np.asarray(found)
    t = np.asarray(list(truth))
    if len(set(f.tolist())) != f.size or len(set(t.tolist())) != t.size:
        raise InvalidInputError("result and truth must not contain duplicates")
    if f.size != t.size:
        raise InvalidInputError(f"size mismatch: {f.size} found vs {t.size} true neighbours")
    return len(set(f.tolist()) & set(t.tolist())) / t.size


# k-Means ----------------------------------------------------------------------

@dataclass
class Clustering:
    assignment: np.ndarray
    centroids: np.ndarray
    iterations: int
    converged: bool
    objective: List[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])


def kmeans_objective(data, assignment) -> float:
    """Sum over clusters of squared distances to the cluster mean."""
    X = np.asarray(data, dtype=np.float64)
    a = np.asarray(assignment)
    total = 0.0
    for c in np.unique(a):
        pts = X[a == c]
        total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


def kmeanspp_indices(dist_fn, m: int, k: int, seed: int) -> np.ndarray:
    """k-Means++ seeding; ``dist_fn(i)`` returns distances from object ``i`` to all."""
    if not 1 <= k <= m:
        raise InvalidInputError(f"k must be in [1, {m}]")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(m))]
    d2 = np.asarray(dist_fn(chosen[0]), dtype=np.float64) ** 2
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(m), chosen)
            nxt = int(rest[0])
        else:
            nxt = int(rng.choice(m, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.asarray(dist_fn(nxt), dtype=np.float64) ** 2)
    return np.array(chosen)


def _fix_empty(assign, dist_own, k):
    """Move the objects farthest from their centroids into empty clusters."""
    counts = np.bincount(assign, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return assign, []
    assign = assign.copy()
    order = np.lexsort((np.arange(assign.size), -dist_own))
    moved = []
    taken = 0
    for c in empty:
        while taken < order.size:
            i = order[taken]
            taken += 1
            if np.sum(assign == assign[i]) > 1:
                assign[i] = c
                moved.append(int(i))
                break
    return assign, moved


def _run_lloyd(assign_fn, update_fn, init_centroids, k, max_iter, objective_fn=None):
    C = init_centroids
    assign = None
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new, dist_own = assign_fn(C)
        new, _ = _fix_empty(new, dist_own, k)
        if objective_fn is not None:
            history.append(objective_fn(new))
        if assign is not None and np.array_equal(new, assign):
            converged = True
            break
        assign = new
        C = update_fn(assign)
    return Clustering(assign, C, it, converged, history)


def _init_indices(m, k, seed_indices, seed, dist_fn):
    if seed_indices is not None:
        idx = np.asarray(seed_indices, dtype=np.int64)
        if idx.shape != (k,) or idx.min() < 0 or idx.max() >= m or np.unique(idx).size != k:
            raise InvalidInputError("seed indices must be k distinct object ids")
        return idx
    return kmeanspp_indices(dist_fn, m, k, 0 if seed is None else seed)


def kmeans_compressed(db: Sequence[CompressedSeq], k: int, seed_indices=None, seed=None,
                      max_iter: int = 100, data=None, threads=None) -> Clustering:
    """k-Means where object-centroid distances are interval midpoints.

    Centroids are dense bin arrays (no residual): the mean of the members'
    kept coefficients with zeros where a member kept nothing.  ``data``
    (uncompressed rows) is only used to record the objective per iteration.
    """
    m = len(db)
    if m == 0 or not 1 <= k <= m:
        raise InvalidInputError(f"k must be in [1, {m}]")
    dense = np.array([c.dense for c in db])

    def dist_fn(i):
        return np.array([distance_bounds(db[i], c).mid for c in db])

    init = _init_indices(m, k, seed_indices, seed, dist_fn)

    def assign_fn(C):
        def row(c):
            return [bounds_vs_uncompressed(c, C[j]).mid for j in range(k)]
        D = np.array(ordered_map(row, db, threads))
        a = np.argmin(D, axis=1)
        return a, D[np.arange(m), a]

    def update_fn(assign):
        return np.array([dense[assign == j].mean(axis=0) for j in range(k)])

    obj = None if data is None else (lambda a: kmeans_objective(data, a))
    return _run_lloyd(assign_fn, update_fn, dense[init].copy(), k, max_iter, obj)


def lloyd(data, k: int, seed_indices=None, seed=None, max_iter: int = 100) -> Clustering:
    """Textbook Lloyd iterations on uncompressed rows (same policies as above)."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if m == 0 or not 1 <= k <= m:
        raise InvalidInputError(f"k must be in [1, {m}]")

    def dist_fn(i):
        return np.linalg.norm(X - X[i], axis=1)

    init = _init_indices(m, k, seed_indices, seed, dist_fn)

    def assign_fn(C):
        D = np.sqrt(np.maximum(((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2), 0.0))
        a = np.argmin(D, axis=1)
        return a, D[np.arange(m), a]

    def update_fn(assign):
        return np.array([X[assign == j].mean(axis=0) for j in range(k)])

    return _run_lloyd(assign_fn, update_fn, X[init].copy(), k, max_iter,
                      lambda a: kmeans_objective(X, a))


def _labels(c):
    return np.asarray(c.assignment if isinstance(c, Clustering) else c)


def cluster_agreement(a, b) -> float:
    """Fraction of objects whose labels agree under the best label matching."""
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise InvalidInputError("clusterings cover different object sets")
    ua, ia = np.unique(la, return_inverse=True)
    ub, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ua.size, ub.size))
    np.add.at(table, (ia, ib), 1)
    r, c = linear_sum_assignment(-table)
    return float(table[r, c].sum() / la.size)


def rand_index(a, b) -> float:
    """Fraction of object pairs on which the two clusterings agree."""
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise InvalidInputError("clusterings cover different object sets")
    n = la.size
    if n < 2:
        return 1.0
    same_a = la[:, None] == la[None, :]
    same_b = lb[:, None] == lb[None, :]
    iu = np.triu_indices(n, 1)
    return float(np.mean(same_a[iu] == same_b[iu]))
