import numpy as np
import pytest

from wfbounds.baselines import gen_projection, project
from wfbounds.compress import CompressedSeq, compress_top, storage_budget
from wfbounds.errors import InvalidInputError
from wfbounds.mining import (Clustering, Proxy, _fix_empty, all_bounds, cluster_agreement,
                             exact_knn, kmeans_compressed, kmeans_objective, kmeanspp_indices,
                             knn_projected, knn_search, lloyd, proxy_value, rand_index, rank,
                             recall_at_k)
from wfbounds.synthetic import periodic_mixture
from wfbounds.transform import dft_forward


def lossless(X):
    return [compress_top(dft_forward(x), x.size // 2 + 1) for x in X]


def test_identical_lossless_query_first(rng):
    X = rng.standard_normal((10, 32))
    db = lossless(X)
    for proxy in (Proxy.LB, Proxy.UB, Proxy.AVG):
        res = knn_search(db, db[4], 3, proxy)
        assert res.indices[0] == 4 and res.proxy_values[0] == pytest.approx(0.0, abs=1e-9)
        assert res.proxy_used == proxy


def test_interval_dominance():
    q = CompressedSeq.from_parts(8, "dft", [0, 1], [1.0, 1.0], 0.0, symmetric=True)
    near = CompressedSeq.from_parts(8, "dft", [0, 1], [1.1, 1.0], 0.01, symmetric=True)
    far = CompressedSeq.from_parts(8, "dft", [0, 1], [5.0, 4.0], 0.01, symmetric=True)
    b = all_bounds([far, near], q)
    assert b[1, 1] < b[0, 0]
    for proxy in ("LB", "UB", "AVG"):
        assert knn_search([far, near], q, 1, proxy).indices.tolist() == [1]


def test_avg_proxy_recall_on_periodic_data():
    X = periodic_mixture(250, 128, seed=0)
    D, Q = X[:200], X[200:]
    db = [compress_top(dft_forward(x), 16) for x in D]
    rec = {p: [] for p in (Proxy.LB, Proxy.UB, Proxy.AVG)}
    for q in Q:
        qc = compress_top(dft_forward(q), 16)
        b = all_bounds(db, qc)
        truth = exact_knn(D, q, 10)
        for p in rec:
            rec[p].append(recall_at_k(knn_search(db, qc, 10, p, bounds=b), truth))
    avg = np.mean(rec[Proxy.AVG])
    assert avg >= np.mean(rec[Proxy.LB]) and avg >= np.mean(rec[Proxy.UB])


def test_projected_identity_and_ties():
    X = np.array([[0.0, 0], [1, 0], [1, 0], [3, 0]])
    res = knn_projected(X, np.array([1.0, 0]), 2)
    assert res.indices.tolist() == [1, 2] and res.proxy_used == Proxy.POINT
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((30, 8))
    q = rng.standard_normal(8)
    assert knn_projected(Y, q, 5).indices.tolist() == exact_knn(Y, q, 5).tolist()
    with pytest.raises(InvalidInputError):
        knn_projected(Y, q[:4], 2)


def test_rank_and_k_checks():
    assert rank([3.0, 1.0, 1.0], 2).indices.tolist() == [1, 2]
    with pytest.raises(InvalidInputError):
        rank([1.0], 2)
    with pytest.raises(InvalidInputError):
        rank([], 1)
    with pytest.raises(InvalidInputError):
        proxy_value(None, "POINT")
    with pytest.raises(InvalidInputError):
        Proxy.parse("MEDIAN")


def test_recall():
    assert recall_at_k(np.array([1, 2, 3]), {3, 4, 1}) == pytest.approx(2 / 3)
    with pytest.raises(InvalidInputError):
        recall_at_k(np.array([1, 1]), [1, 2])
    with pytest.raises(InvalidInputError):
        recall_at_k(np.array([1, 2]), [1])


def test_threads_do_not_change_results(rng, monkeypatch):
    X = np.cumsum(rng.standard_normal((40, 64)), axis=1)
    db = [compress_top(dft_forward(x), 6) for x in X]
    one = all_bounds(db, db[0], threads=1)
    monkeypatch.setenv("CM_THREADS", "3")
    np.testing.assert_array_equal(all_bounds(db, db[0]), one)


# k-Means --------------------------------------------------------------------------

def test_two_clouds_recovered(rng):
    a = rng.standard_normal((10, 16)) * 0.1
    b = rng.standard_normal((10, 16)) * 0.1 + 20
    X = np.vstack([a, b])
    cl = kmeans_compressed(lossless(X), 2, seed_indices=[0, 10])
    assert cl.converged
    assert cl.assignment.tolist() == [0] * 10 + [1] * 10


def test_single_cluster_centroid_is_mean(rng):
    X = rng.standard_normal((12, 16))
    db = [compress_top(dft_forward(x), 4) for x in X]
    cl = kmeans_compressed(db, 1, seed_indices=[3])
    assert np.all(cl.assignment == 0)
    np.testing.assert_allclose(cl.centroids[0], np.mean([c.dense for c in db], axis=0), atol=1e-12)


def test_agreement_beats_brp():
    ours, brp = [], []
    d = storage_budget(16, "dft")
    for seed in range(20):
        X = periodic_mixture(100, 128, seed=seed, n_templates=4)
        seeds = np.random.default_rng(seed).choice(100, 4, replace=False)
        ref = lloyd(X, 4, seed_indices=seeds)
        db = [compress_top(dft_forward(x), 16) for x in X]
        ours.append(cluster_agreement(kmeans_compressed(db, 4, seed_indices=seeds), ref))
        P = project(gen_projection("BRP", d, 128, seed), X)
        brp.append(cluster_agreement(lloyd(P, 4, seed_indices=seeds), ref))
    assert np.mean(ours) >= np.mean(brp)


def test_lloyd_objective_non_increasing(rng):
    X = rng.standard_normal((60, 4))
    cl = lloyd(X, 3, seed=1)
    assert all(b <= a + 1e-9 for a, b in zip(cl.objective, cl.objective[1:]))
    assert cl.objective[-1] == pytest.approx(kmeans_objective(X, cl.assignment))


def test_kmeanspp_distinct(rng):
    X = rng.standard_normal((20, 3))
    idx = kmeanspp_indices(lambda i: np.linalg.norm(X - X[i], axis=1), 20, 5, seed=2)
    assert len(set(idx.tolist())) == 5
    # all-identical points still give distinct seeds
    same = kmeanspp_indices(lambda i: np.zeros(4), 4, 3, seed=0)
    assert len(set(same.tolist())) == 3


def test_empty_cluster_gets_farthest_object():
    assign = np.array([0, 0, 0, 1])
    new, moved = _fix_empty(assign, np.array([0.1, 5.0, 0.2, 0.0]), 3)
    assert moved == [1] and new.tolist() == [0, 2, 0, 1]


def test_agreement_metrics():
    a = np.array([0, 0, 1, 1, 2])
    assert cluster_agreement(a, np.array([2, 2, 0, 0, 1])) == 1.0
    assert cluster_agreement(a, np.array([0, 0, 0, 0, 0])) == pytest.approx(2 / 5)
    assert rand_index(a, a) == 1.0
    cl = Clustering(a, np.zeros((3, 1)), 1, True)
    assert cluster_agreement(cl, a) == 1.0 and cl.k == 3
    with pytest.raises(InvalidInputError):
        cluster_agreement(a, a[:3])


def test_kmeans_validation(rng):
    db = [compress_top(dft_forward(x), 4) for x in rng.standard_normal((5, 16))]
    with pytest.raises(InvalidInputError):
        kmeans_compressed(db, 6)
    with pytest.raises(InvalidInputError):
        kmeans_compressed(db, 2, seed_indices=[1, 1])
