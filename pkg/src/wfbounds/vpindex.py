"""Vantage-point tree over compressed objects.

The tree is built on midpoint distances.  Each child subtree also records
the range of the vantage's lower and upper bounds to its members (its
"shell") and the range of midpoints.

Search is depth-first, nearer side first, keeping the best ``k`` midpoints.
For a query with interval ``[lq, uq]`` to the vantage, every member ``o`` of
a child with shell ``[lo, hi]`` has true distance at least
``L = max(lq - hi, lo - uq)`` (triangle inequality on interval ends).

* conservative: since any object's midpoint is at least half its upper
  bound, hence at least ``d / 2``, a child is skipped only when
  ``L / 2 > kth-best midpoint``.  Nothing skipped could enter the answer,
  so the result equals the linear-scan midpoint ranking.
* aggressive: treats midpoints as exact distances and skips when
  ``max(mq - mid_hi, mid_lo - mq) > kth-best midpoint``.  Much faster, may
  miss answers.
"""
from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bounds import distance_bounds
from .compress import CompressedSeq
from .errors import ConsistencyError, InvalidInputError, TruncatedError
from .mining import KnnResult, Proxy, rank

TREE_MAGIC = b"VPT1"
SAMPLE_CAP = 64
PRUNE_MARGIN = 1e-9


@dataclass
class VpNode:
    # leaf if ``bucket`` is not None
    bucket: Optional[np.ndarray] = None
    vantage: int = -1
    mu: float = 0.0
    inside: int = -1
    outside: int = -1
    # (lb_lo, ub_hi, mid_lo, mid_hi) for inside and outside children
    shell_in: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    shell_out: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    @property
    def is_leaf(self) -> bool:
        return self.bucket is not None


@dataclass
class VpTree:
    nodes: List[VpNode]
    size: int
    bucket_size: int
    seed: int
    db: Optional[Sequence[CompressedSeq]] = field(default=None, repr=False)

    def objects(self, node: int = 0) -> List[int]:
        """Ids stored under ``node`` in depth-first order."""
        out, stack = [], [node]
        while stack:
            nd = self.nodes[stack.pop()]
            if nd.is_leaf:
                out.extend(int(i) for i in nd.bucket)
            else:
                out.append(nd.vantage)
                stack.extend((nd.outside, nd.inside))
        return out

    def depth(self, node: int = 0) -> int:
        nd = self.nodes[node]
        if nd.is_leaf:
            return 0
        return 1 + max(self.depth(nd.inside), self.depth(nd.outside))


@dataclass(frozen=True)
class PruningStats:
    evaluated: int
    total: int
    nodes_visited: int

    @property
    def pruning_power(self) -> float:
        return 1.0 - self.evaluated / self.total


def _shell(lb, ub, mid):
    return (float(lb.min()), float(ub.max()), float(mid.min()), float(mid.max()))


def vptree_build(db: Sequence[CompressedSeq], seed: int = 0, bucket_size: int = 8,
                 sample_cap: int = SAMPLE_CAP) -> VpTree:
    if len(db) < 1:
        raise InvalidInputError("cannot index an empty database")
    if bucket_size < 1:
        raise InvalidInputError("bucket_size must be >= 1")
    rng = np.random.default_rng(seed)
    nodes: List[VpNode] = []

    def bounds_from(v, ids):
        b = [distance_bounds(db[v], db[i]) for i in ids]
        lb = np.array([x.lb for x in b])
        ub = np.array([x.ub for x in b])
        return lb, ub, 0.5 * (lb + ub)

    def build(ids: np.ndarray) -> int:
        me = len(nodes)
        nodes.append(VpNode(bucket=ids))
        if ids.size <= bucket_size:
            return me
        n_cand = max(1, math.isqrt(ids.size - 1) + 1)      # ceil(sqrt(m))
        cands = rng.choice(ids, size=min(n_cand, ids.size), replace=False)
        best, best_var = None, -1.0
        for c in cands:
            rest = ids[ids != c]
            sample = rest if rest.size <= sample_cap else rng.choice(rest, size=sample_cap, replace=False)
            var = float(np.var(bounds_from(c, sample)[2]))
            if var > best_var:
                best, best_var = int(c), var
        rest = ids[ids != best]
        lb, ub, mid = bounds_from(best, rest)
        mu = float(np.median(mid))
        inner = mid <= mu
        if inner.all() or not inner.any():
            return me
        node = nodes[me]
        node.bucket = None
        node.vantage = best
        node.mu = mu
        node.shell_in = _shell(lb[inner], ub[inner], mid[inner])
        node.shell_out = _shell(lb[~inner], ub[~inner], mid[~inner])
        node.inside = build(rest[inner])
        node.outside = build(rest[~inner])
        return me

    build(np.arange(len(db), dtype=np.int64))
    return VpTree(nodes, len(db), bucket_size, seed, db)


class _Best:
    """Running k best ``(mid, id)`` pairs."""

    def __init__(self, k):
        self.k = k
        self.heap: List[Tuple[float, int]] = []    # max-heap via negation

    def push(self, value, idx):
        item = (-value, -idx)
        if len(self.heap) < self.k:
            heapq.heappush(self.heap, item)
        elif item > self.heap[0]:
            heapq.heapreplace(self.heap, item)

    @property
    def tau(self) -> float:
        return -self.heap[0][0] if len(self.heap) == self.k else math.inf


def vptree_search(tree: VpTree, query: CompressedSeq, k: int, mode: str = "conservative",
                  db: Optional[Sequence[CompressedSeq]] = None):
    db = db if db is not None else tree.db
    if db is None or len(db) != tree.size:
        raise InvalidInputError("tree needs the database it was built on")
    if not 1 <= k <= tree.size:
        raise InvalidInputError(f"k must be in [1, {tree.size}], got {k}")
    if mode not in ("conservative", "aggressive"):
        raise InvalidInputError(f"unknown search mode {mode!r}")
    aggressive = mode == "aggressive"
    best = _Best(k)
    mids = {}
    visited = 0

    def evaluate(i):
        if i not in mids:
            b = distance_bounds(query, db[i])
            mids[i] = (b.lb, b.ub, 0.5 * (b.lb + b.ub))
            best.push(mids[i][2], i)
        return mids[i]

    def skip(shell, lq, uq, mq):
        tau = best.tau
        if math.isinf(tau):
            return False
        if aggressive:
            gap = max(mq - shell[3], shell[2] - mq)
            return gap > tau
        gap = max(lq - shell[1], shell[0] - uq)
        return 0.5 * gap > tau + PRUNE_MARGIN * (1.0 + gap)

    def visit(n):
        nonlocal visited
        visited += 1
        nd = tree.nodes[n]
        if nd.is_leaf:
            for i in nd.bucket:
                evaluate(int(i))
            return
        lq, uq, mq = evaluate(nd.vantage)
        order = [(nd.inside, nd.shell_in), (nd.outside, nd.shell_out)]
        if mq > nd.mu:
            order.reverse()
        for child, shell in order:
            if not skip(shell, lq, uq, mq):
                visit(child)

    visit(0)
    ids = np.array(sorted(mids))
    vals = np.array([mids[i][2] for i in ids])
    top = rank(vals, k, Proxy.AVG)
    result = KnnResult(ids[top.indices], Proxy.AVG, top.proxy_values)
    return result, PruningStats(len(mids), tree.size, visited)


# serialisation -------------------------------------------------------------------

_HEAD = struct.Struct("<IIQ")
_LEAF = struct.Struct("<BI")
_INNER = struct.Struct("<BIdii8d")


def tree_to_bytes(tree: VpTree) -> bytes:
    parts = [_HEAD.pack(len(tree.nodes), tree.bucket_size, tree.seed & 0xFFFFFFFFFFFFFFFF),
             struct.pack("<Q", tree.size)]
    for nd in tree.nodes:
        if nd.is_leaf:
            parts.append(_LEAF.pack(0, nd.bucket.size))
            parts.append(nd.bucket.astype("<u4").tobytes())
        else:
            parts.append(_INNER.pack(1, nd.vantage, nd.mu, nd.inside, nd.outside,
                                     *nd.shell_in, *nd.shell_out))
    return b"".join(parts)


def tree_from_bytes(payload: bytes, db=None) -> VpTree:
    view = memoryview(payload)
    pos = 0

    def take(k):
        nonlocal pos
        if pos + k > len(view):
            raise TruncatedError("tree block ends early")
        out = view[pos:pos + k]
        pos += k
        return out

    count, bucket_size, seed = _HEAD.unpack(take(_HEAD.size))
    (size,) = struct.unpack("<Q", take(8))
    nodes = []
    for _ in range(count):
        kind = take(1)[0]
        pos -= 1
        if kind == 0:
            _, m = _LEAF.unpack(take(_LEAF.size))
            nodes.append(VpNode(bucket=np.frombuffer(take(4 * m), dtype="<u4").astype(np.int64)))
        elif kind == 1:
            f = _INNER.unpack(take(_INNER.size))
            nodes.append(VpNode(None, f[1], f[2], f[3], f[4], tuple(f[5:9]), tuple(f[9:13])))
        else:
            raise ConsistencyError(f"unknown tree node kind {kind}")
    if pos != len(view):
        raise ConsistencyError("trailing bytes after tree nodes")
    tree = VpTree(nodes, int(size), int(bucket_size), int(seed), db)
    if sorted(tree.objects()) != list(range(tree.size)):
        raise ConsistencyError("tree does not cover every object exactly once")
    return tree


def save_index(path, db, tree: VpTree) -> None:
    from .dbformat import save
    save(path, db, blocks={TREE_MAGIC: tree_to_bytes(tree)})


def load_index(path):
    from .dbformat import load
    db, blocks = load(path)
    if TREE_MAGIC not in blocks:
        raise ConsistencyError("file holds no VP-tree block")
    return db, tree_from_bytes(blocks[TREE_MAGIC], db)
