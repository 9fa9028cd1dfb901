"""Command line front end.

Input sequences are CSV, one per row, with an optional header row.  Results
are long-format CSV on stdout: ``method,s,id,metric,value``.  Every random
choice is drawn from ``--seed``, so identical invocations print identical
bytes.  ``CM_THREADS`` caps the worker count of the per-pair loops.

Exit codes: 0 success, 1 ``verify`` found a violated invariant, 2 usage or
input error, 3 malformed database or index file, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from typing import Iterable, List, Optional

import numpy as np

from . import dbformat
from .baselines import ProjectionKind, baseline_dimension, gen_projection, pca_basis, project
from .bounds import distance_bounds, solve_cross_term
from .compress import compress_first, compress_top, first_coeff_count, n_bins
from .errors import ConvergenceError, FormatError, InvalidInputError, PreconditionError
from .mining import (Proxy, all_bounds, cluster_agreement, exact_knn, kmeans_compressed,
                     kmeans_objective, knn_projected, knn_search, lloyd, recall_at_k)
from .oracle import alternating_solve, grid_slack, grid_solve, kkt_check, random_problem
from .synthetic import KINDS, gen_synthetic, image_signature
from .transform import Basis, forward
from .vpindex import load_index, save_index, vptree_build, vptree_search
from .workers import ordered_map

HEADER = ("method", "s", "id", "metric", "value")
DEFAULT_S = (8, 16, 32, 64)
BASELINES = ("GRP", "BRP", "ARP", "PCA")


class UsageError(Exception):
    pass


# csv helpers ------------------------------------------------------------------

def _open_text(path):
    if path in (None, "-"):
        return sys.stdin
    return open(path, newline="")


def read_rows(path) -> List[List[str]]:
    fh = _open_text(path)
    try:
        return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    finally:
        if fh is not sys.stdin:
            fh.close()


def read_matrix(path) -> np.ndarray:
    """Rows of floats; a first row that does not parse is taken as a header."""
    rows = read_rows(path)
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise InvalidInputError(f"no sequences in {path or 'stdin'}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidInputError("rows have different lengths")
    try:
        return np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InvalidInputError(f"non-numeric CSV field: {exc}") from None


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Emitter:
    def __init__(self, out):
        self.w = csv.writer(out, lineterminator="\n")
        self.w.writerow(HEADER)

    def row(self, method, s, ident, metric, value):
        self.w.writerow((method, fmt(s), fmt(ident), metric, fmt(value)))


def _write_matrix(rows: Iterable[Iterable[float]], out):
    w = csv.writer(out, lineterminator="\n")
    for r in rows:
        w.writerow([fmt(float(v)) for v in r])


# shared plumbing ----------------------------------------------------------------

def _compress_all(data, basis, s, method="top"):
    nb = n_bins(data.shape[1], basis == Basis.DFT)
    if not 1 <= s <= nb:
        raise InvalidInputError(f"s must be in [1, {nb}] for sequences of length {data.shape[1]}")
    fn = compress_top if method == "top" else compress_first
    return [fn(forward(x, basis), s) for x in data]


def _projector(kind, d, data, seed):
    """Projection at ``d`` words, or None when the raw sequence already fits."""
    kind = ProjectionKind.parse(kind)
    n = data.shape[1]
    if d >= n:
        return None
    if kind == ProjectionKind.PCA:
        return pca_basis(data, min(d, data.shape[0]), seed=seed)
    return gen_projection(kind, d, n, seed)


def _apply(proj, X):
    return np.asarray(X, dtype=np.float64) if proj is None else project(proj, X)


def _pairs(m, count, rng):
    if m < 2:
        raise InvalidInputError("need at least two sequences")
    total = m * (m - 1) // 2
    if count is None or count >= total:
        return [(i, j) for i in range(m) for j in range(i + 1, m)]
    seen, out = set(), []
    while len(out) < count:
        i, j = (int(v) for v in rng.choice(m, 2, replace=False))
        key = (min(i, j), max(i, j))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def _s_list(text) -> List[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad coefficient list {text!r}") from None
    if not vals or min(vals) < 1:
        raise UsageError("coefficient counts must be positive")
    return vals


def _opt_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


# commands ---------------------------------------------------------------------

def cmd_gen(args):
    data = gen_synthetic(args.kind, args.n, args.N, s=args.s, seed=args.seed)
    out = _opt_out(args.out)
    _write_matrix(data, out)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_compress(args):
    data = read_matrix(args.input)
    basis = Basis.parse(args.basis)
    db = _compress_all(data, basis, args.s, args.method)
    payload = dbformat.serialize(db, basis)
    if args.out in (None, "-"):
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
    else:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    return 0


def _load_db(path):
    with open(path, "rb") as fh:
        db, _ = dbformat.read_container(fh.read())
    if not db:
        raise InvalidInputError("database is empty")
    return db


def cmd_bounds(args):
    db = _load_db(args.db)
    data = read_matrix(args.data) if args.data else None
    if data is not None and len(data) != len(db):
        raise InvalidInputError("--data must hold one row per database object")
    pairs = _pairs(len(db), args.pairs, np.random.default_rng(args.seed))
    res = ordered_map(lambda ij: distance_bounds(db[ij[0]], db[ij[1]]), pairs)
    em = Emitter(sys.stdout)
    for (i, j), b in zip(pairs, res):
        ident = f"{i}:{j}"
        s = f"{db[i].s}:{db[j].s}"
        em.row("optimal", s, ident, "lb", b.lb)
        em.row("optimal", s, ident, "ub", b.ub)
        if data is not None:
            em.row("optimal", s, ident, "exact", float(np.linalg.norm(data[i] - data[j])))
    return 0


def cmd_tightness(args):
    data = read_matrix(args.input)
    basis = Basis.parse(args.basis)
    rng = np.random.default_rng(args.seed)
    m, N = data.shape
    nb = n_bins(N, basis == Basis.DFT)
    pairs = [p for p in _pairs(m, args.pairs, rng)
             if np.linalg.norm(data[p[0]] - data[p[1]]) > 0]
    truth = [float(np.linalg.norm(data[i] - data[j])) for i, j in pairs]
    methods = [t.strip().upper() for t in args.methods.split(",") if t.strip()]
    em = Emitter(sys.stdout)
    for s in _s_list(args.s):
        if s > nb:
            raise InvalidInputError(f"s={s} exceeds the {nb} storable coefficients")
        budget = baseline_dimension(s, basis)
        for method in methods:
            if method in ("OPTIMAL", "FIRST"):
                if method == "OPTIMAL":
                    db, label = _compress_all(data, basis, s), "optimal"
                else:
                    c = first_coeff_count(budget, basis, limit=nb)
                    db, label = _compress_all(data, basis, c, "first"), "first"
                res = ordered_map(lambda ij: distance_bounds(db[ij[0]], db[ij[1]]), pairs)
                lo = [b.lb / d for b, d in zip(res, truth)]
                hi = [b.ub / d for b, d in zip(res, truth)]
                for (i, j), a, b in zip(pairs, lo, hi):
                    em.row(label, s, f"{i}:{j}", "lb", a)
                    em.row(label, s, f"{i}:{j}", "ub", b)
                em.row(label, s, "mean", "lb", float(np.mean(lo)))
                em.row(label, s, "mean", "ub", float(np.mean(hi)))
                em.row(label, s, "mean", "width", float(np.mean(np.subtract(hi, lo))))
            elif method in BASELINES:
                proj = _projector(method, budget, data, args.seed + s)
                P = _apply(proj, data)
                est = [float(np.linalg.norm(P[i] - P[j])) / d for (i, j), d in zip(pairs, truth)]
                for (i, j), e in zip(pairs, est):
                    em.row(method, s, f"{i}:{j}", "estimate", e)
                em.row(method, s, "mean", "estimate", float(np.mean(est)))
            else:
                raise UsageError(f"unknown method {method!r}")
    return 0


def _queries(args, data):
    if args.queries:
        q = read_matrix(args.queries)
        if q.shape[1] != data.shape[1]:
            raise InvalidInputError("queries and database differ in length")
        return data, q
    # hold out the last rows as queries
    nq = args.n_queries
    if not 1 <= nq < len(data):
        raise InvalidInputError("--n-queries must leave a non-empty database")
    return data[:-nq], data[-nq:]


def cmd_knn(args):
    data, queries = _queries(args, read_matrix(args.input))
    basis = Basis.parse(args.basis)
    k = args.k
    truth = [exact_knn(data, q, k) for q in queries]
    em = Emitter(sys.stdout)
    methods = [t.strip().upper() for t in args.methods.split(",") if t.strip()]
    budget = baseline_dimension(args.s, basis)
    for method in methods:
        if method == "OPTIMAL":
            db = _compress_all(data, basis, args.s)
            qc = _compress_all(queries, basis, args.s)
            proxies = [Proxy.parse(p) for p in args.proxy.split(",")]

            def one(t):
                bnds = all_bounds(db, qc[t], threads=1)
                return [knn_search(db, qc[t], k, p, bounds=bnds) for p in proxies]
            found = ordered_map(one, range(len(queries)))
            for pi, p in enumerate(proxies):
                label = f"optimal-{p.value}"
                recalls = []
                for t, rs in enumerate(found):
                    r = recall_at_k(rs[pi], truth[t])
                    recalls.append(r)
                    em.row(label, args.s, t, "recall", r)
                    for rank_, idx in enumerate(rs[pi].indices):
                        em.row(label, args.s, t, f"nn{rank_ + 1}", int(idx))
                em.row(label, args.s, "mean", "recall", float(np.mean(recalls)))
        elif method in BASELINES:
            proj = _projector(method, budget, data, args.seed)
            P, Q = _apply(proj, data), _apply(proj, queries)
            recalls = []
            for t in range(len(queries)):
                res = knn_projected(P, Q[t], k)
                r = recall_at_k(res, truth[t])
                recalls.append(r)
                em.row(method, args.s, t, "recall", r)
                for rank_, idx in enumerate(res.indices):
                    em.row(method, args.s, t, f"nn{rank_ + 1}", int(idx))
            em.row(method, args.s, "mean", "recall", float(np.mean(recalls)))
        else:
            raise UsageError(f"unknown method {method!r}")
    return 0


def cmd_kmeans(args):
    data = read_matrix(args.input)
    basis = Basis.parse(args.basis)
    m = len(data)
    if not 1 <= args.k <= m:
        raise InvalidInputError(f"k must be in [1, {m}]")
    seeds = np.random.default_rng(args.seed).choice(m, args.k, replace=False)
    ref = lloyd(data, args.k, seed_indices=seeds, max_iter=args.max_iter)
    em = Emitter(sys.stdout)
    budget = baseline_dimension(args.s, basis)

    def report(label, cl):
        em.row(label, args.s, "all", "agreement", cluster_agreement(cl, ref))
        em.row(label, args.s, "all", "objective", kmeans_objective(data, cl.assignment))
        em.row(label, args.s, "all", "iterations", cl.iterations)
        for i, c in enumerate(cl.assignment):
            em.row(label, args.s, i, "cluster", int(c))

    report("exact", ref)
    for method in (t.strip().upper() for t in args.methods.split(",") if t.strip()):
        if method == "OPTIMAL":
            db = _compress_all(data, basis, args.s)
            cl = kmeans_compressed(db, args.k, seed_indices=seeds, max_iter=args.max_iter)
            report("optimal", cl)
        elif method in BASELINES:
            proj = _projector(method, budget, data, args.seed)
            cl = lloyd(_apply(proj, data), args.k, seed_indices=seeds, max_iter=args.max_iter)
            report(method, cl)
        else:
            raise UsageError(f"unknown method {method!r}")
    return 0


def cmd_index(args):
    if bool(args.db) == bool(args.index):
        raise UsageError("give exactly one of --db (build) or --index (load)")
    if args.db:
        db = _load_db(args.db)
        tree = vptree_build(db, seed=args.seed, bucket_size=args.bucket)
        if args.out:
            save_index(args.out, db, tree)
    else:
        db, tree = load_index(args.index)
    if not args.queries:
        return 0
    queries = read_matrix(args.queries)
    basis, s = db[0].basis, db[0].s
    if queries.shape[1] != db[0].n:
        raise InvalidInputError("queries and database differ in length")
    qc = [compress_top(forward(q, basis), s) for q in queries]
    modes = ("conservative", "aggressive") if args.mode == "both" else (args.mode,)
    em = Emitter(sys.stdout)
    for mode in modes:
        powers = []
        for t, q in enumerate(qc):
            res, stats = vptree_search(tree, q, args.k, mode=mode, db=db)
            powers.append(stats.pruning_power)
            em.row(mode, s, t, "pruning_power", stats.pruning_power)
            em.row(mode, s, t, "evaluated", stats.evaluated)
            for rank_, idx in enumerate(res.indices):
                em.row(mode, s, t, f"nn{rank_ + 1}", int(idx))
        em.row(mode, s, "mean", "pruning_power", float(np.mean(powers)))
    return 0


def _sandwich_violations(rng, count):
    bad = 0
    for t in range(count):
        basis = Basis.DFT if t % 2 == 0 else Basis.HAAR
        N = int(rng.choice([64, 128]))
        s = int(rng.choice([4, 8, 16]))
        x, q = np.cumsum(rng.standard_normal((2, N)), axis=1)
        cx, cq = compress_top(forward(x, basis), s), compress_top(forward(q, basis), s)
        b = distance_bounds(cx, cq)
        d = float(np.linalg.norm(x - q))
        if not (b.lb - 1e-9 <= d <= b.ub + 1e-9):
            bad += 1
    return bad


def cmd_verify(args):
    rng = np.random.default_rng(args.seed)
    dev_max, kkt_fail, kkt_checked = 0.0, 0, 0
    for _ in range(args.instances):
        p = random_problem(rng, max_unknowns=args.max_unknowns)
        r = solve_cross_term(p)
        o = alternating_solve(p)
        dev_max = max(dev_max, abs(r.v_opt - o.v_opt) / max(1.0, abs(r.v_opt)))
        rep = kkt_check(r)
        if rep.applicable:
            kkt_checked += 1
            kkt_fail += int(not rep.passed)
    grid_bad = 0
    for _ in range(args.grid):
        p = random_problem(rng, max_unknowns=4)
        v = solve_cross_term(p).v_opt
        g = grid_solve(p)
        if not (v <= g + 1e-9 and -v <= -g + grid_slack(p) + 1e-9):
            grid_bad += 1
    sandwich_bad = _sandwich_violations(rng, args.pairs)
    em = Emitter(sys.stdout)
    em.row("verify", "", "all", "instances", args.instances)
    em.row("verify", "", "all", "max_oracle_deviation", dev_max)
    em.row("verify", "", "all", "kkt_checked", kkt_checked)
    em.row("verify", "", "all", "kkt_failures", kkt_fail)
    em.row("verify", "", "all", "grid_instances", args.grid)
    em.row("verify", "", "all", "grid_violations", grid_bad)
    em.row("verify", "", "all", "sandwich_pairs", args.pairs)
    em.row("verify", "", "all", "sandwich_violations", sandwich_bad)
    ok = dev_max <= 1e-6 and kkt_fail == 0 and grid_bad == 0 and sandwich_bad == 0
    em.row("verify", "", "all", "passed", ok)
    return 0 if ok else 1


def cmd_signature(args):
    rows = read_rows(args.input)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise InvalidInputError("ragged image rows")
    try:
        img = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise InvalidInputError(f"non-numeric pixel: {exc}") from None
    _write_matrix([image_signature(img)], sys.stdout)
    return 0


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wfbounds", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=0)
        return p

    p = seeded(sub.add_parser("gen", help="write synthetic sequences as CSV"))
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--n", type=int, required=True, help="number of sequences")
    p.add_argument("--N", type=int, required=True, help="sequence length")
    p.add_argument("--s", type=int, default=16, help="sparsified kind keeps 3s bins")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("compress", help="CSV sequences to a binary database")
    p.add_argument("--input", default="-")
    p.add_argument("--basis", default="dft")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--method", choices=("top", "first"), default="top")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_compress)

    p = seeded(sub.add_parser("bounds", help="distance bounds between database objects"))
    p.add_argument("--db", required=True)
    p.add_argument("--pairs", type=int, help="random subset of pairs (default: all)")
    p.add_argument("--data", help="uncompressed CSV rows, adds exact distances")
    p.set_defaults(fn=cmd_bounds)

    p = seeded(sub.add_parser("tightness", help="normalised bounds per method and s"))
    p.add_argument("--input", default="-")
    p.add_argument("--basis", default="dft")
    p.add_argument("--s", default=",".join(map(str, DEFAULT_S)))
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--methods", default="optimal,first," + ",".join(BASELINES))
    p.set_defaults(fn=cmd_tightness)

    p = seeded(sub.add_parser("knn", help="k-NN recall per method"))
    p.add_argument("--input", default="-")
    p.add_argument("--queries")
    p.add_argument("--n-queries", type=int, default=10)
    p.add_argument("--basis", default="dft")
    p.add_argument("--s", type=int, default=16)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--proxy", default="AVG,LB,UB")
    p.add_argument("--methods", default="optimal," + ",".join(BASELINES))
    p.set_defaults(fn=cmd_knn)

    p = seeded(sub.add_parser("kmeans", help="k-Means agreement with uncompressed Lloyd"))
    p.add_argument("--input", default="-")
    p.add_argument("--basis", default="dft")
    p.add_argument("--s", type=int, default=16)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--methods", default="optimal,BRP")
    p.set_defaults(fn=cmd_kmeans)

    p = seeded(sub.add_parser("index", help="build, save or query a VP-tree"))
    p.add_argument("--db")
    p.add_argument("--index")
    p.add_argument("--out")
    p.add_argument("--bucket", type=int, default=8)
    p.add_argument("--queries")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=("conservative", "aggressive", "both"), default="both")
    p.set_defaults(fn=cmd_index)

    p = seeded(sub.add_parser("verify", help="cross-check the solver against the oracles"))
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--max-unknowns", type=int, default=6)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--pairs", type=int, default=200)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("signature", help="column sums of a binary image CSV")
    p.add_argument("--input", default="-")
    p.set_defaults(fn=cmd_signature)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        ap.error(str(exc))
    except FormatError as exc:
        print(f"wfbounds: bad file: {exc}", file=sys.stderr)
        return 3
    except (InvalidInputError, PreconditionError, OSError) as exc:
        print(f"wfbounds: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"wfbounds: numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
