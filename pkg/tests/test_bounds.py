import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import wfbounds.bounds as bounds_mod
from conftest import compressed_pair
from wfbounds.bounds import (DEGENERATE, DISJOINT, FIXED_POINT, IDENTICAL, ZERO_SPLIT,
                             CrossTermProblem, bounds_vs_uncompressed, build_partition,
                             distance_bounds, double_waterfill, fixed_point_gamma, gamma_window,
                             solve_cross_term)
from wfbounds.compress import CompressedSeq, compress_first, compress_top
from wfbounds.errors import InvalidPairError, PreconditionError
from wfbounds.oracle import alternating_solve, grid_slack, grid_solve, kkt_check, random_problem
from wfbounds.transform import Spectrum, dft_forward, forward, haar_forward
from wfbounds.waterfill import waterfill


def record(n, pos, vals, e):
    return CompressedSeq.from_parts(n, "dft", pos, vals, e)


# partition ----------------------------------------------------------------------

def test_partition_identical_support():
    a = record(8, [1, 4], [2, 3], 1.0)
    b = record(8, [1, 4], [1, 5], 2.0)
    p = build_partition(a, b)
    assert p.P1.size == 0 and p.P2.size == 0
    assert p.P0.tolist() == [1, 4]
    assert p.P3.tolist() == [0, 2, 3, 5, 6, 7]


def test_partition_disjoint_cover():
    a = record(4, [0, 1], [2, 3], 0.0)
    b = record(4, [2, 3], [1, 5], 0.0)
    p = build_partition(a, b)
    assert p.P3.size == 0 and p.P0.size == 0
    assert p.P1.tolist() == [2, 3] and p.P2.tolist() == [0, 1]


def test_partition_set_algebra(rng):
    for _ in range(50):
        px = set(rng.choice(32, 8, replace=False).tolist())
        pq = set(rng.choice(32, 8, replace=False).tolist())
        a = record(32, sorted(px), np.ones(8), 1.0)
        b = record(32, sorted(pq), np.ones(8), 1.0)
        p = build_partition(a, b)
        every = set(range(32))
        assert set(p.P0.tolist()) == px & pq
        assert set(p.P1.tolist()) == (every - px) & pq
        assert set(p.P2.tolist()) == px - pq
        assert set(p.P3.tolist()) == every - px - pq
        assert set(p.x_unknown.tolist()) == every - px
        assert set(p.q_unknown.tolist()) == every - pq


def test_pair_checks():
    with pytest.raises(InvalidPairError):
        build_partition(record(8, [1], [1], 0), record(16, [1], [1], 0))
    h = CompressedSeq.from_parts(8, "haar", [1], [1.0], 0)
    with pytest.raises(InvalidPairError):
        distance_bounds(record(8, [1], [1], 0), h)


# energy split -------------------------------------------------------------------

@pytest.mark.parametrize("e_x,e_q,expected", [
    (1.5, 1.5, (1.0, 0.5, 0.5)),
    (2.0, 3.0, (2 / 3, 4 / 3, 2.0)),
    (2.0, 2.0, (1.0, 1.0, 1.0)),
])
def test_fixed_point_gamma_examples(e_x, e_q, expected):
    got = fixed_point_gamma([1.0], [1.0], e_x, e_q, 1.0, 1.0)
    np.testing.assert_allclose(got, expected, atol=1e-12)


def _bisect_gamma(b1, a2, e_x, e_q, A, B):
    """Independent root of h(g) = e_x - S1(g) - g (e_q - S2(g)) by bisection."""
    b1, a2 = np.asarray(b1), np.asarray(a2)

    def h(g):
        s1 = np.sum(np.minimum(b1 ** 2 * g, A * A))
        s2 = np.sum(np.minimum(a2 ** 2 / g, B * B))
        return (e_x - s1) - g * (e_q - s2)
    lo, hi = 1e-12, 1e12
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def test_fixed_point_gamma_against_bisection(rng):
    for _ in range(200):
        n1, n2 = rng.integers(0, 5, 2)
        A, B = rng.uniform(0.5, 2, 2)
        b1 = rng.uniform(B, 3 * B, n1)
        a2 = rng.uniform(A, 3 * A, n2)
        e_x = n1 * A * A + rng.uniform(0.1, 3)
        e_q = n2 * B * B + rng.uniform(0.1, 3)
        g, ex_s, eq_s = fixed_point_gamma(b1, a2, e_x, e_q, A, B)
        assert g == pytest.approx(_bisect_gamma(b1, a2, e_x, e_q, A, B), rel=1e-7)
        assert ex_s / eq_s == pytest.approx(g, rel=1e-9)
        lo, hi = gamma_window(b1, a2, e_x, e_q, A, B)
        assert lo - 1e-12 <= g <= hi * (1 + 1e-12)
        assert 0 <= ex_s <= e_x and 0 <= eq_s <= e_q


def test_fixed_point_gamma_preconditions():
    with pytest.raises(PreconditionError):
        fixed_point_gamma([1.0], [1.0], 0.5, 0.5, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        fixed_point_gamma([1.0], [1.0], 0.0, 3.0, 1.0, 1.0)


# closed-form cases and examples ---------------------------------------------------

def test_disjoint_example():
    p = CrossTermProblem.create(b1=[2.0], a2=[3.0], e_x=1.0, e_q=4.0, A=2.0, B=3.0)
    r = solve_cross_term(p)
    assert r.branch == DISJOINT and r.v_opt == pytest.approx(-8.0, abs=1e-12)
    ref = waterfill([2.0], 1.0, 2.0).v_opt + waterfill([3.0], 4.0, 3.0).v_opt
    assert r.v_opt == ref


def test_identical_support_example():
    p = CrossTermProblem.create(e_x=4.0, e_q=9.0, A=5.0, B=5.0, n3=3)
    r = solve_cross_term(p)
    assert r.branch == IDENTICAL and r.v_opt == -6.0


def test_symmetric_fixed_point_example():
    p = CrossTermProblem.create(b1=[1.0], a2=[1.0], e_x=1.5, e_q=1.5, A=1.0, B=1.0, n3=2)
    r = solve_cross_term(p)
    assert r.branch == FIXED_POINT
    assert r.v_opt == pytest.approx(-2.5, abs=1e-12)
    assert r.ex_split == pytest.approx(0.5) and r.eq_split == pytest.approx(0.5)
    np.testing.assert_allclose(r.a_p1, [1.0])
    np.testing.assert_allclose(r.b_p2, [1.0])
    assert r.a_p3 == pytest.approx(0.5) and r.b_p3 == pytest.approx(0.5)
    assert r.lam * r.mu == pytest.approx(1.0, abs=1e-9)
    assert alternating_solve(p).v_opt == pytest.approx(-2.5, abs=1e-8)
    assert grid_solve(p, 8) >= r.v_opt - 1e-12


def test_zero_split_example():
    p = CrossTermProblem.create(b1=[2.0], a2=[2.0], e_x=1.0, e_q=1.0, A=3.0, B=3.0, n3=1)
    r = solve_cross_term(p)
    assert r.branch == ZERO_SPLIT and r.v_opt == pytest.approx(-4.0, abs=1e-12)
    assert r.a_p3 == 0.0 and r.b_p3 == 0.0
    # A = B = 3 with 3 steps puts the optimum a = b = 1 on the grid
    assert grid_solve(p, 3) == pytest.approx(-4.0, abs=1e-12)


def test_degenerate_branch():
    # X has no residual energy, so nothing Q puts on P3 pays off
    p = CrossTermProblem.create(b1=[1.0], a2=[1.0], e_x=0.0, e_q=3.0, A=1.0, B=1.0, n3=2)
    r = solve_cross_term(p)
    assert r.branch == DEGENERATE and r.v_opt == pytest.approx(-1.0)
    assert alternating_solve(p).v_opt == pytest.approx(-1.0)


def test_one_sided_compression_is_single_waterfill(rng):
    x, q = rng.standard_normal((2, 64))
    cx = compress_top(dft_forward(x), 8)
    cq = compress_top(dft_forward(q), 33)      # lossless
    r = double_waterfill(cx, cq)
    unknown = cx.unknown_mask
    ref = waterfill(np.abs(cq.dense[unknown]), cx.residual_energy, cx.ceiling, cx.weights[unknown])
    assert r.branch == DISJOINT and r.v_opt == ref.v_opt
    b = distance_bounds(cx, cq)
    b2 = bounds_vs_uncompressed(cx, dft_forward(q))
    assert b.lb == pytest.approx(b2.lb, rel=1e-12) and b.ub == pytest.approx(b2.ub, rel=1e-12)


# oracle agreement -----------------------------------------------------------------

def test_agrees_with_alternating_and_kkt(rng):
    for _ in range(300):
        p = random_problem(rng, max_unknowns=6)
        r = solve_cross_term(p)
        o = alternating_solve(p)
        assert abs(r.v_opt - o.v_opt) <= 1e-6 * max(1.0, abs(r.v_opt))
        rep = kkt_check(r)
        assert rep.passed or not rep.applicable, rep.violations


def test_agrees_with_grid(rng):
    for _ in range(25):
        p = random_problem(rng, max_unknowns=3)
        r = solve_cross_term(p)
        g = grid_solve(p, 12)
        assert r.v_opt <= g + 1e-9
        assert -r.v_opt <= -g + grid_slack(p, grid_steps=12) + 1e-9


def test_array_and_scalar_split_paths_agree(rng, monkeypatch):
    problems = [random_problem(rng, max_unknowns=8) for _ in range(200)]
    short = [solve_cross_term(p) for p in problems]
    monkeypatch.setattr(bounds_mod, "SHORT_SPLIT", -1)
    for p, r in zip(problems, short):
        v = solve_cross_term(p)
        assert v.branch == r.branch
        assert v.v_opt == pytest.approx(r.v_opt, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(v.a_p1, r.a_p1, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(v.beta_p2, r.beta_p2, rtol=1e-10, atol=1e-12)


def test_real_pairs_match_alternating(rng):
    for basis in ("dft", "haar"):
        for _ in range(30):
            _, _, cx, cq = compressed_pair(rng, n=64, s=6, basis=basis)
            r = double_waterfill(cx, cq)
            o = alternating_solve(CrossTermProblem.from_pair(cx, cq))
            assert abs(r.v_opt - o.v_opt) <= 1e-6 * max(1.0, abs(r.v_opt))


def test_from_pair_matches_partition(rng):
    _, _, cx, cq = compressed_pair(rng, n=64, s=8)
    a = CrossTermProblem.from_pair(cx, cq)
    b = CrossTermProblem.from_pair(cx, cq, build_partition(cx, cq))
    for f in ("b1", "a2", "w1", "w2", "w3"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


# bounds ---------------------------------------------------------------------------

def test_identical_lossless_objects():
    c = record(8, range(8), np.arange(1, 9), 0.0)
    b = distance_bounds(c, c)
    assert b.lb == 0.0 and b.ub == 0.0


def test_lossless_pair_exact(rng):
    x, q = rng.standard_normal((2, 32))
    cx, cq = compress_top(dft_forward(x), 17), compress_top(dft_forward(q), 17)
    b = distance_bounds(cx, cq)
    d = np.linalg.norm(x - q)
    assert abs(b.lb - d) <= 1e-9 and abs(b.ub - d) <= 1e-9


def test_sandwich_random_pairs(rng):
    for _ in range(100):
        x, q, cx, cq = compressed_pair(rng, n=64, s=8)
        b = distance_bounds(cx, cq)
        d = np.linalg.norm(x - q)
        assert b.lb - 1e-9 <= d <= b.ub + 1e-9
        assert 0 <= b.lb <= b.ub
        assert b.lb ** 2 + b.ub ** 2 == pytest.approx(2 * b.d_hat, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([8, 16, 32, 64]), st.integers(1, 8), st.sampled_from(["dft", "haar"]),
       st.integers(0, 2 ** 32 - 1))
def test_sandwich_property(n, s, basis, seed):
    x, q, cx, cq = compressed_pair(np.random.default_rng(seed), n=n, s=min(s, n // 2), basis=basis)
    b = distance_bounds(cx, cq)
    d = float(np.linalg.norm(x - q))
    assert b.lb - 1e-9 <= d <= b.ub + 1e-9
    # swapping the arguments gives bit-identical bounds
    assert distance_bounds(cq, cx) == b
    assert double_waterfill(cq, cx).v_opt == double_waterfill(cx, cq).v_opt


def test_swapped_result_orientation(rng):
    _, _, cx, cq = compressed_pair(rng, n=64, s=8)
    r, s_ = double_waterfill(cx, cq), double_waterfill(cq, cx)
    np.testing.assert_array_equal(r.a_p1, s_.b_p2)
    assert r.ex_split == s_.eq_split and r.lam == s_.mu


def test_uncompressed_query_examples(rng):
    x = rng.standard_normal(32)
    cx = compress_top(dft_forward(x), 5)
    # query equal to the kept part, no residual
    lossless = compress_top(dft_forward(x), 17)
    b = bounds_vs_uncompressed(lossless, dft_forward(x))
    assert b.lb == pytest.approx(0.0, abs=1e-9) and b.ub == pytest.approx(0.0, abs=1e-9)
    # query zero on the discarded bins: cross term vanishes
    dense = np.zeros(32, dtype=complex)
    dense[: cx.n_bins] = cx.dense
    dense[cx.n_bins:] = np.conj(cx.dense[1:16][::-1])
    dense[cx.positions] *= 1.5
    m = np.arange(1, 16)
    dense[32 - m] = np.conj(dense[m])
    q_spec = Spectrum(dense, conjugate_symmetric=True)
    b = bounds_vs_uncompressed(cx, q_spec)
    w = cx.weights[cx.positions]
    d_known = float(np.sum(w * np.abs(0.5 * cx.values) ** 2))
    expected = math.sqrt(d_known + cx.residual_energy)
    assert b.lb == pytest.approx(expected, rel=1e-9) and b.ub == pytest.approx(expected, rel=1e-9)
    # random query
    for _ in range(50):
        x, q = np.cumsum(rng.standard_normal((2, 64)), axis=1)
        cx = compress_top(dft_forward(x), 6)
        b = bounds_vs_uncompressed(cx, dft_forward(q))
        d = np.linalg.norm(x - q)
        assert b.lb - 1e-9 <= d <= b.ub + 1e-9


def test_uncompressed_query_checks():
    cx = record(8, [1], [1.0], 0.5)
    with pytest.raises(InvalidPairError):
        bounds_vs_uncompressed(cx, np.zeros(3))
    with pytest.raises(InvalidPairError):
        bounds_vs_uncompressed(cx, haar_forward(np.ones(8)))


def test_first_coefficient_objects(rng):
    x, q = np.cumsum(rng.standard_normal((2, 64)), axis=1)
    cx, cq = compress_first(dft_forward(x), 6), compress_first(dft_forward(q), 6)
    b = distance_bounds(cx, cq)
    d = np.linalg.norm(x - q)
    assert b.lb - 1e-9 <= d <= b.ub + 1e-9
    # aligned supports reduce to Cauchy-Schwarz on the residual energies
    r = double_waterfill(cx, cq)
    assert r.branch == IDENTICAL
    assert r.v_opt == -math.sqrt(cx.residual_energy * cq.residual_energy)
    other = compress_first(dft_forward(q), 7)
    with pytest.raises(InvalidPairError):
        distance_bounds(cx, other)


def test_haar_pairs(rng):
    for _ in range(50):
        x, q = np.cumsum(rng.standard_normal((2, 128)), axis=1)
        cx, cq = (compress_top(forward(v, "haar"), 10) for v in (x, q))
        b = distance_bounds(cx, cq)
        assert b.lb - 1e-9 <= np.linalg.norm(x - q) <= b.ub + 1e-9


def test_tighter_than_ignoring_ceilings(rng):
    # dropping the magnitude ceilings can only widen the interval
    for _ in range(30):
        _, _, cx, cq = compressed_pair(rng, n=64, s=8)
        p = CrossTermProblem.from_pair(cx, cq)
        loose = -math.sqrt(cx.residual_energy * (cq.residual_energy + float(np.dot(p.w1, p.b1 ** 2)))) \
            if p.W2 == 0 else None
        v = solve_cross_term(p).v_opt
        cs = -math.sqrt((cx.residual_energy) * (cq.norm_sq)) - math.sqrt(cq.residual_energy * cx.norm_sq)
        assert v >= cs - 1e-9
        assert loose is None or v >= loose - 1e-9
