import numpy as np
import pytest

from wfbounds.baselines import (ProjectionKind, baseline_dimension, gen_projection, pca_basis,
                                project, projected_distance)
from wfbounds.errors import InvalidInputError


def jacobi_singular_values(X, sweeps=60):
    """One-sided Jacobi SVD: rotate column pairs until orthogonal."""
    U = np.array(X, dtype=float, copy=True)
    n = U.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                a, b = U[:, i] @ U[:, i], U[:, j] @ U[:, j]
                c = U[:, i] @ U[:, j]
                off = max(off, abs(c) / max(np.sqrt(a * b), 1e-300))
                if abs(c) < 1e-15 * np.sqrt(a * b):
                    continue
                zeta = (b - a) / (2 * c)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta ** 2)) if zeta != 0 else 1.0
                cs = 1 / np.sqrt(1 + t * t)
                sn = cs * t
                ui = U[:, i].copy()
                U[:, i] = cs * ui - sn * U[:, j]
                U[:, j] = sn * ui + cs * U[:, j]
        if off < 1e-14:
            break
    return np.sort(np.linalg.norm(U, axis=0))[::-1]


def test_brp_support():
    m = gen_projection("BRP", 4, 4, seed=3)
    assert set(np.unique(m.entries).tolist()) <= {0.5, -0.5}


def test_arp_zero_fraction():
    fr = [np.mean(gen_projection("ARP", 64, 1024, seed=s).entries == 0) for s in range(100)]
    assert abs(np.mean(fr) - 2 / 3) <= 0.02
    vals = np.unique(gen_projection("ARP", 8, 64, seed=0).entries)
    np.testing.assert_allclose(np.abs(vals[vals != 0]), np.sqrt(3 / 8))


def test_grp_isometry_on_average(rng):
    x = rng.standard_normal(256)
    ratios = [np.sum(project(gen_projection("GRP", 32, 256, s), x) ** 2) / np.sum(x ** 2)
              for s in range(200)]
    assert 0.8 <= np.mean(ratios) <= 1.2


def test_seed_reproducible():
    a = gen_projection("GRP", 8, 32, 5)
    b = gen_projection("GRP", 8, 32, 5)
    np.testing.assert_array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, gen_projection("GRP", 8, 32, 6).entries)


def test_project_zero_and_batch(rng):
    m = gen_projection("GRP", 4, 16, 0)
    assert np.all(project(m, np.zeros(16)) == 0)
    X = rng.standard_normal((5, 16))
    np.testing.assert_allclose(project(m, X)[2], m.project(X[2]))
    with pytest.raises(InvalidInputError):
        project(m, np.zeros(15))


def test_jl_concentration(rng):
    X = rng.standard_normal((40, 512))
    m = gen_projection("GRP", 256, 512, 1)
    P = project(m, X)
    errs = [abs(projected_distance(P[i], P[j]) / np.linalg.norm(X[i] - X[j]) - 1)
            for i in range(20) for j in range(20, 40)]
    assert np.median(errs) < 0.1 and max(errs) < 0.35


def test_pca_full_rank_isometry(rng):
    X = rng.standard_normal((30, 12))
    m = pca_basis(X, 12)
    P = project(m, X)
    for i in range(5):
        for j in range(5, 10):
            assert abs(np.linalg.norm(P[i] - P[j]) - np.linalg.norm(X[i] - X[j])) < 1e-8
    np.testing.assert_allclose(m.entries @ m.entries.T, np.eye(12), atol=1e-8)


def test_pca_exact_subspace(rng):
    basis = np.linalg.qr(rng.standard_normal((64, 2)))[0].T
    X = rng.standard_normal((40, 2)) @ basis + 3.0
    P = project(pca_basis(X, 2), X)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    DP = np.linalg.norm(P[:, None] - P[None], axis=2)
    assert np.max(np.abs(D - DP)) < 1e-6


def test_pca_single_direction(rng):
    v = rng.standard_normal(16)
    X = rng.standard_normal(30)[:, None] * v
    row = pca_basis(X, 1).entries[0]
    assert abs(abs(row @ v) / np.linalg.norm(v) - 1) < 1e-8


def test_pca_singular_values_vs_jacobi(rng):
    X = rng.standard_normal((50, 64))
    m = pca_basis(X, 8)
    ref = jacobi_singular_values((X - X.mean(axis=0)).T)[:8]
    np.testing.assert_allclose(m.singular_values, ref, rtol=1e-6)
    np.testing.assert_allclose(m.entries @ m.entries.T, np.eye(8), atol=1e-8)


def test_pca_rank_deficient_completion(rng):
    X = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 10))
    m = pca_basis(X, 5)
    np.testing.assert_allclose(m.entries @ m.entries.T, np.eye(5), atol=1e-8)


def test_validation():
    with pytest.raises(InvalidInputError):
        gen_projection("GRP", 0, 8, 0)
    with pytest.raises(InvalidInputError):
        gen_projection("GRP", 9, 8, 0)
    with pytest.raises(InvalidInputError):
        gen_projection("PCA", 2, 8, 0)
    with pytest.raises(InvalidInputError):
        ProjectionKind.parse("SVD")
    with pytest.raises(InvalidInputError):
        pca_basis(np.ones((2, 8)), 3)


def test_baseline_dimension_matches_budget():
    assert baseline_dimension(16, "dft") == 41
    assert baseline_dimension(16, "haar") == 21
