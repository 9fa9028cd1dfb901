"""Tightest Euclidean distance bounds between two compressed objects.

Write the squared distance as ``D_hat - 2 * cross`` where ``D_hat`` collects
everything known (total energies and the inner product over bins kept by
both objects) and ``cross`` is the inner product over bins where at least one
side is unknown.  Only magnitudes of the unknown coefficients are
constrained, phases are free, so ``cross`` ranges over ``[-M, M]`` with

    M = max  sum_P1 w a b + sum_P2 w a b + sum_P3 w a b
        s.t. sum w a^2 <= e_x over X's unknowns,  a <= A
             sum w b^2 <= e_q over Q's unknowns,  b <= B

where P1 are bins unknown only for X, P2 unknown only for Q and P3 unknown
for both.  ``double_waterfill`` computes ``v_opt = -M`` exactly:

1. ``P3`` empty: two independent waterfills.
2. ``P1`` and ``P2`` empty: Cauchy-Schwarz, ``-sqrt(e_x e_q)``.
3. Both energies fit in ``P1`` / ``P2``: two waterfills, ``P3`` left empty.
4. Otherwise split each energy between its private set and ``P3``; the split
   ratio ``gamma = e_x' / e_q'`` is the unique root of a piecewise-linear
   function, found by scanning its breakpoints.

Bin multiplicities ``w`` come from the compression (conjugate pairs count
twice) so the same code serves Haar and half-spectrum DFT objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compress import CompressedSeq, storable
from .errors import InvalidInputError, InvalidPairError, PreconditionError
from .transform import Spectrum
from .waterfill import fill, waterfill

RADICAND_TOL = 1e-9

DISJOINT = "disjoint"
IDENTICAL = "identical-support"
ZERO_SPLIT = "zero-residual-split"
FIXED_POINT = "fixed-point"
# one side has no residual energy but the other overflows its private bins
DEGENERATE = "degenerate"


@dataclass(frozen=True)
class Partition:
    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    weights: np.ndarray

    @property
    def x_unknown(self) -> np.ndarray:
        return np.union1d(self.P1, self.P3)

    @property
    def q_unknown(self) -> np.ndarray:
        return np.union1d(self.P2, self.P3)


def _check_pair(cx: CompressedSeq, cq: CompressedSeq):
    if cx.n != cq.n or cx.basis != cq.basis or cx.symmetric != cq.symmetric:
        raise InvalidPairError(
            f"cannot compare n={cx.n}/{cx.basis.name} with n={cq.n}/{cq.basis.name}")


def build_partition(cx: CompressedSeq, cq: CompressedSeq) -> Partition:
    _check_pair(cx, cq)
    kx, kq = cx.known_mask, cq.known_mask
    return Partition(
        np.flatnonzero(kx & kq),
        np.flatnonzero(~kx & kq),
        np.flatnonzero(kx & ~kq),
        np.flatnonzero(~kx & ~kq),
        cx.weights,
    )


@dataclass(frozen=True)
class CrossTermProblem:
    """Magnitude-only view of a pair: everything the optimisation needs."""

    b1: np.ndarray          # |Q| on P1
    a2: np.ndarray          # |X| on P2
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray          # multiplicities of the P3 bins
    e_x: float
    e_q: float
    A: float
    B: float

    @classmethod
    def create(cls, b1=(), a2=(), e_x=0.0, e_q=0.0, A=1.0, B=1.0, n3=0,
               w1=None, w2=None, w3=None) -> "CrossTermProblem":
        b1 = np.asarray(b1, dtype=np.float64).reshape(-1)
        a2 = np.asarray(a2, dtype=np.float64).reshape(-1)
        w1 = np.ones_like(b1) if w1 is None else np.asarray(w1, dtype=np.float64)
        w2 = np.ones_like(a2) if w2 is None else np.asarray(w2, dtype=np.float64)
        w3 = np.ones(int(n3)) if w3 is None else np.asarray(w3, dtype=np.float64)
        if np.any(b1 < 0) or np.any(a2 < 0) or e_x < 0 or e_q < 0 or A < 0 or B < 0:
            raise InvalidInputError("magnitudes, energies and ceilings must be >= 0")
        return cls(b1, a2, w1, w2, w3, float(e_x), float(e_q), float(A), float(B))

    @classmethod
    def from_pair(cls, cx: CompressedSeq, cq: CompressedSeq,
                  part: Optional[Partition] = None) -> "CrossTermProblem":
        if part is not None:
            m1, m2, m3 = part.P1, part.P2, part.P3
        else:
            _check_pair(cx, cq)
            ux, uq = cx.unknown_mask, cq.unknown_mask
            # P1 / P2 are subsets of the short kept-position lists
            m1 = cq.positions[ux[cq.positions]]
            m2 = cx.positions[uq[cx.positions]]
            m3 = ux & uq
        w = cx.weights
        return cls(
            cq.magnitudes[m1], cx.magnitudes[m2], w[m1], w[m2], w[m3],
            cx.residual_energy, cq.residual_energy, cx.ceiling, cq.ceiling,
        )

    @property
    def W1(self) -> float:
        return float(np.add.reduce(self.w1))

    @property
    def W2(self) -> float:
        return float(np.add.reduce(self.w2))

    @property
    def W3(self) -> float:
        return float(np.add.reduce(self.w3))

    def swapped(self) -> "CrossTermProblem":
        return CrossTermProblem(self.a2, self.b1, self.w2, self.w1, self.w3,
                                self.e_q, self.e_x, self.B, self.A)


@dataclass(frozen=True)
class DoubleWaterfillResult:
    v_opt: float
    a_p1: np.ndarray         # X magnitudes on P1
    b_p2: np.ndarray         # Q magnitudes on P2
    a_p3: float              # uniform X magnitude on every P3 bin
    b_p3: float
    lam: float
    mu: float
    alpha_p1: np.ndarray
    beta_p2: np.ndarray
    ex_split: float          # X energy placed on P3
    eq_split: float
    branch: str
    problem: Optional[CrossTermProblem] = field(default=None, repr=False)

    def swapped(self) -> "DoubleWaterfillResult":
        return DoubleWaterfillResult(
            self.v_opt, self.b_p2, self.a_p1, self.b_p3, self.a_p3, self.mu, self.lam,
            self.beta_p2, self.alpha_p1, self.eq_split, self.ex_split, self.branch,
            None if self.problem is None else self.problem.swapped())


# fixed-point energy split ---------------------------------------------------

def _level(c2, w, cap2, energy) -> float:
    """sup{t >= 0 : sum w * min(c2 * t, cap2) <= energy}; inf if never exceeded."""
    pos = c2 > 0
    c2, w = c2[pos], w[pos]
    # bins with a zero partner never take energy
    if energy >= float(np.sum(w)) * cap2:
        return math.inf
    t = cap2 / c2
    order = np.argsort(t, kind="stable")
    t, c2, w = t[order], c2[order], w[order]
    sat = np.concatenate(([0.0], np.cumsum(w * cap2)))           # saturated mass before j
    slope = np.concatenate((np.cumsum((w * c2)[::-1])[::-1], [0.0]))  # unsaturated slope from j
    S = sat[1:] + t * slope[1:]                                 # S at each breakpoint
    j = int(np.searchsorted(S, energy, side="right"))
    return (energy - sat[j]) / slope[j]


def gamma_window(b1, a2, e_x, e_q, A, B, w1=None, w2=None):
    """``(gamma_a, gamma_b)``: the split ratio must lie in this interval.

    Below ``gamma_a`` P2 alone could absorb Q's energy, above ``gamma_b`` P1
    alone could absorb X's; ``gamma_b`` is infinite when ``e_x > W1 A^2``.
    """
    b1 = np.asarray(b1, dtype=np.float64).reshape(-1)
    a2 = np.asarray(a2, dtype=np.float64).reshape(-1)
    w1 = np.ones_like(b1) if w1 is None else np.asarray(w1, dtype=np.float64)
    w2 = np.ones_like(a2) if w2 is None else np.asarray(w2, dtype=np.float64)
    gamma_b = _level(b1 * b1, w1, float(A) ** 2, e_x)
    u = _level(a2 * a2, w2, float(B) ** 2, e_q)
    return (0.0 if math.isinf(u) else 1.0 / u), gamma_b


def _split(b1, w1, a2, w2, e_x, e_q, A2, B2):
    """Root of the split equation; returns ``(gamma, s1, t2)``.

    ``f(g) = e_x - S1(g) - g e_q + T2(g)`` with ``S1(g) = sum w min(b^2 g, A^2)``
    and ``T2(g) = g S2(g) = sum w min(a^2, g B^2)``.  ``f`` is piecewise linear,
    starts at ``e_x > 0`` and changes sign once, so the root sits between the
    largest breakpoint with ``f > 0`` and the smallest with ``f <= 0``.
    Each breakpoint changes the slope and intercept by a fixed amount, so one
    sort and two running sums give ``f`` at every breakpoint.
    """
    b1sq = b1 * b1
    a2sq = a2 * a2
    keep = b1sq > 0
    if not keep.all():
        b1sq, w1 = b1sq[keep], w1[keep]
    wb2 = w1 * b1sq
    W2 = float(np.sum(w2))
    pts = np.concatenate((A2 / b1sq, a2sq / B2))
    # crossing a P1 breakpoint: slope +w b^2, intercept -w A^2; P2: slope -w B^2, intercept +w a^2
    dslope = np.concatenate((wb2, -w2 * B2))
    dconst = np.concatenate((-A2 * w1, w2 * a2sq))
    order = np.argsort(pts, kind="stable")
    pts = pts[order]
    slope0 = W2 * B2 - float(np.sum(wb2)) - e_q
    slope = slope0 + np.cumsum(dslope[order])
    const = e_x + np.cumsum(dconst[order])
    vals = const + slope * pts
    neg = vals <= 0.0
    j = int(np.argmax(neg)) if pts.size else 0
    if pts.size and neg[j]:
        g_hi, f_hi = float(pts[j]), float(vals[j])
        g_lo, f_lo = (float(pts[j - 1]), float(vals[j - 1])) if j > 0 else (0.0, e_x)
        if f_hi == 0.0:
            gamma = g_hi
        else:
            gamma = g_lo - (g_hi - g_lo) * f_lo / (f_hi - f_lo)
    else:
        # past the last breakpoint f is linear with slope -e_q
        gamma = float(const[-1]) / e_q if pts.size else e_x / e_q
    s1 = float(np.dot(w1, np.minimum(b1sq * gamma, A2)))
    t2 = float(np.dot(w2, np.minimum(a2sq, gamma * B2)))
    return gamma, s1, t2


def _split_short(b1, w1, a2, w2, e_x, e_q, A, B):
    """Scalar version of :func:`_split` plus the objective, for short lists.

    Same breakpoint scan on Python floats: for a few dozen breakpoints this
    is several times cheaper than the array version.  Returns
    ``(gamma, v, e_x', e_q', a1, b2)``.
    """
    A2, B2 = A * A, B * B
    wb2 = [wt * b * b for b, wt in zip(b1, w1)]
    items = [(A2 * wt / v, v, -A2 * wt) for v, wt in zip(wb2, w1) if v > 0.0]
    items += [(a * a / B2, -wt * B2, wt * a * a) for a, wt in zip(a2, w2)]
    items.sort()
    slope = B2 * sum(w2) - sum(wb2) - e_q
    const = e_x
    g_lo, f_lo = 0.0, e_x
    gamma = None
    for g, ds, dc in items:
        slope += ds
        const += dc
        fv = const + slope * g
        if fv <= 0.0:
            gamma = g if fv == 0.0 else g_lo - (g - g_lo) * f_lo / (fv - f_lo)
            break
        g_lo, f_lo = g, fv
    if gamma is None:
        gamma = const / e_q
    rg = math.sqrt(gamma)
    a1 = [min(b * rg, A) for b in b1]
    b2 = [min(a / rg, B) for a in a2]
    s1 = cross1 = 0.0
    for b, a, wt in zip(b1, a1, w1):
        s1 += wt * a * a
        cross1 += wt * b * a
    t2 = cross2 = 0.0
    for a, bb, wt in zip(a2, b2, w2):
        t2 += wt * bb * bb
        cross2 += wt * a * bb
    ex_s = max(e_x - s1, 0.0)
    eq_s = max(e_q - t2, 0.0)
    return gamma, -(cross1 + cross2 + math.sqrt(ex_s * eq_s)), ex_s, eq_s, a1, b2


SHORT_SPLIT = 64


def _solve_split(b1, w1, a2, w2, e_x, e_q, A, B, full=False):
    """``(gamma, v, e_x', e_q')`` on whichever path suits the size.

    With ``full`` also the private allocations and their multipliers
    ``(a1, b2, alpha, beta)``.
    """
    if b1.size + a2.size <= SHORT_SPLIT:
        lists = (b1.tolist(), w1.tolist(), a2.tolist(), w2.tolist())
        gamma, v, ex_s, eq_s, a1, b2 = _split_short(*lists, e_x, e_q, A, B)
        if not full:
            return gamma, v, ex_s, eq_s
        rg = math.sqrt(gamma)
        lam, mu = math.sqrt(eq_s / ex_s), math.sqrt(ex_s / eq_s)
        alpha = [max(b / A - lam, 0.0) if b * rg >= A else 0.0 for b in lists[0]]
        beta = [max(a / B - mu, 0.0) if a / rg >= B else 0.0 for a in lists[2]]
        return gamma, v, ex_s, eq_s, (np.array(a1), np.array(b2), np.array(alpha), np.array(beta))
    gamma, s1, t2 = _split(b1, w1, a2, w2, e_x, e_q, A * A, B * B)
    v, ex_s, eq_s = _fp_value(b1, w1, a2, w2, e_x, e_q, A, B, gamma, s1, t2)
    if not full:
        return gamma, v, ex_s, eq_s
    rg = math.sqrt(gamma)
    lam, mu = math.sqrt(eq_s / ex_s), math.sqrt(ex_s / eq_s)
    alpha = np.where(b1 * rg >= A, b1 / A - lam, 0.0)
    beta = np.where(a2 / rg >= B, a2 / B - mu, 0.0)
    return gamma, v, ex_s, eq_s, (np.minimum(b1 * rg, A), np.minimum(a2 / rg, B),
                                  np.maximum(alpha, 0.0), np.maximum(beta, 0.0))


def _split_checked(b1, w1, a2, w2, e_x, e_q, A, B):
    W1A2, W2B2 = float(np.sum(w1)) * A * A, float(np.sum(w2)) * B * B
    if not (e_x > W1A2 or e_q > W2B2):
        raise PreconditionError("energy split needs e_x > |P1| A^2 or e_q > |P2| B^2")
    if not (e_x > 0 and e_q > 0):
        raise PreconditionError("energy split needs both residual energies positive")
    gamma, _, ex_s, eq_s = _solve_split(b1, w1, a2, w2, e_x, e_q, A, B)
    return gamma, ex_s, eq_s


def fixed_point_gamma(b1, a2, e_x, e_q, A, B, w1=None, w2=None):
    """Energy split ``(gamma, e_x', e_q')`` with ``gamma = e_x' / e_q'``.

    Only valid when at least one energy overflows its private bins
    (``e_x > W1 A^2`` or ``e_q > W2 B^2``).  ``e_x'`` and ``e_q'`` are the
    energies each side puts on the shared unknown bins; the private bins get
    ``S1(gamma) = sum w min(b^2 gamma, A^2)`` and
    ``S2(gamma) = sum w min(a^2 / gamma, B^2)``.
    """
    b1 = np.asarray(b1, dtype=np.float64).reshape(-1)
    a2 = np.asarray(a2, dtype=np.float64).reshape(-1)
    w1 = np.ones_like(b1) if w1 is None else np.asarray(w1, dtype=np.float64)
    w2 = np.ones_like(a2) if w2 is None else np.asarray(w2, dtype=np.float64)
    return _split_checked(b1, w1, a2, w2, float(e_x), float(e_q), float(A), float(B))


# double waterfilling ---------------------------------------------------------

def _branch(n1, n2, W3, W1, W2, e_x, e_q, A, B) -> str:
    if W3 == 0:
        return DISJOINT
    if n1 == 0 and n2 == 0:
        return IDENTICAL
    if not (math.isfinite(A) and math.isfinite(B)):
        raise InvalidPairError(
            "objects without a magnitude ceiling can only be compared on aligned supports")
    if e_x <= W1 * A * A and e_q <= W2 * B * B:
        return ZERO_SPLIT
    if e_x == 0.0 or e_q == 0.0:
        return DEGENERATE
    return FIXED_POINT


def _fp_value(b1, w1, a2, w2, e_x, e_q, A, B, gamma, s1, t2):
    """Objective of the fixed-point allocation ``a = min(b sqrt(g), A)``, ``b = min(a / sqrt(g), B)``."""
    rg = math.sqrt(gamma)
    cross1 = float(np.dot(w1 * b1, np.minimum(b1 * rg, A)))
    cross2 = float(np.dot(w2 * a2, np.minimum(a2 / rg, B)))
    ex_s = max(e_x - s1, 0.0)
    eq_s = max(e_q - t2 / gamma, 0.0)
    return -(cross1 + cross2 + math.sqrt(ex_s * eq_s)), ex_s, eq_s


def _cross_value(b1, w1, a2, w2, W3, e_x, e_q, A, B) -> float:
    """``v_opt`` alone; the branch logic of :func:`solve_cross_term`."""
    W1 = float(np.sum(w1))
    W2 = float(np.sum(w2))
    br = _branch(b1.size, a2.size, W3, W1, W2, e_x, e_q, A, B)
    if br == IDENTICAL:
        return -math.sqrt(e_x * e_q)
    if br == FIXED_POINT:
        return _solve_split(b1, w1, a2, w2, e_x, e_q, A, B)[1]
    if br == DEGENERATE:
        e_x, e_q = min(e_x, W1 * A * A), min(e_q, W2 * B * B)
    return fill(b1, e_x, A, w1).v_opt + fill(a2, e_q, B, w2).v_opt


def solve_cross_term(p: CrossTermProblem) -> DoubleWaterfillResult:
    """Exact optimum of the magnitude problem (see module docstring)."""
    e_x, e_q, A, B = p.e_x, p.e_q, p.A, p.B
    W1, W2, W3 = p.W1, p.W2, p.W3
    empty = np.zeros(0)
    br = _branch(p.b1.size, p.a2.size, W3, W1, W2, e_x, e_q, A, B)

    if br == IDENTICAL:
        a3, b3 = math.sqrt(e_x / W3), math.sqrt(e_q / W3)
        lam = math.sqrt(e_q / e_x) if e_x > 0 and e_q > 0 else 0.0
        mu = 1.0 / lam if lam > 0 else 0.0
        return DoubleWaterfillResult(-math.sqrt(e_x * e_q), empty, empty, a3, b3,
                                     lam, mu, empty, empty, e_x, e_q, br, p)

    if br == FIXED_POINT:
        _, v, ex_s, eq_s, (a1, b2, alpha, beta) = _solve_split(
            p.b1, p.w1, p.a2, p.w2, e_x, e_q, A, B, full=True)
        # these are the waterfills of P1 / P2 at energies e_x - e_x', e_q - e_q'
        return DoubleWaterfillResult(v, a1, b2, math.sqrt(ex_s / W3), math.sqrt(eq_s / W3),
                                     math.sqrt(eq_s / ex_s), math.sqrt(ex_s / eq_s),
                                     alpha, beta, ex_s, eq_s, br, p)

    fx, fq = e_x, e_q
    if br == DEGENERATE:
        # the P3 product vanishes; fill each private set as far as it goes
        fx, fq = min(e_x, W1 * A * A), min(e_q, W2 * B * B)
    ra = fill(p.b1, fx, A, p.w1)
    rb = fill(p.a2, fq, B, p.w2)
    ex_s = ey_s = 0.0
    a3 = b3 = 0.0
    if br == DEGENERATE:
        ex_s = max(e_x - float(np.dot(p.w1, ra.a ** 2)), 0.0)
        ey_s = max(e_q - float(np.dot(p.w2, rb.a ** 2)), 0.0)
        a3, b3 = math.sqrt(ex_s / W3), math.sqrt(ey_s / W3)
    return DoubleWaterfillResult(ra.v_opt + rb.v_opt, ra.a, rb.a, a3, b3, ra.lam, rb.lam,
                                 ra.alphas, rb.alphas, ex_s, ey_s, br, p)


def _order_key(c: CompressedSeq):
    return (c.residual_energy, c.norm_sq, c.s, c.positions.tobytes(), c.values.tobytes())


def _canonical(cx, cq) -> bool:
    """True when the pair must be swapped to reach the fixed evaluation order.

    Evaluating every pair in one orientation makes ``f(x, q)`` and ``f(q, x)``
    bit-identical.
    """
    kx = (cx.residual_energy, cx.norm_sq, cx.s)
    kq = (cq.residual_energy, cq.norm_sq, cq.s)
    if kx != kq:
        return kq < kx
    return _order_key(cq) < _order_key(cx)


def double_waterfill(cx: CompressedSeq, cq: CompressedSeq) -> DoubleWaterfillResult:
    _check_pair(cx, cq)
    if _canonical(cx, cq):
        return solve_cross_term(CrossTermProblem.from_pair(cq, cx)).swapped()
    return solve_cross_term(CrossTermProblem.from_pair(cx, cq))


# bounds -------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundPair:
    lb: float
    ub: float
    d_hat: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lb + self.ub)


def _radicand(x, scale):
    if x < 0:
        if x < -RADICAND_TOL * max(1.0, scale):
            raise ArithmeticError(f"negative squared distance {x:g}")
        return 0.0
    return x


def _make_bounds(d_hat, v_opt) -> BoundPair:
    scale = abs(d_hat)
    lo = _radicand(d_hat + 2.0 * v_opt, scale)
    hi = _radicand(d_hat - 2.0 * v_opt, scale)
    return BoundPair(math.sqrt(lo), math.sqrt(hi), d_hat)


def _known_part(diff, w) -> float:
    """``sum w |diff|^2``.

    With zeros on discarded bins this is ``D_hat`` minus both residual energies;
    summing squared differences avoids the cancellation in
    ``|X|^2 + |Q|^2 - 2 Re<X, Q>`` for nearby objects.
    """
    if np.iscomplexobj(diff):
        return float(np.dot(w, diff.real * diff.real + diff.imag * diff.imag))
    return float(np.dot(w * diff, diff))


def distance_bounds(cx: CompressedSeq, cq: CompressedSeq) -> BoundPair:
    _check_pair(cx, cq)
    if _canonical(cx, cq):
        cx, cq = cq, cx
    ux, uq = cx.unknown_mask, cq.unknown_mask
    m1 = cq.positions[ux[cq.positions]]
    m2 = cx.positions[uq[cx.positions]]
    w = cx.weights
    d_hat = _known_part(cx.dense - cq.dense, w) + cx.residual_energy + cq.residual_energy
    v = _cross_value(cq.magnitudes[m1], w[m1], cx.magnitudes[m2], w[m2],
                     float(np.dot(w, ux & uq)), cx.residual_energy, cq.residual_energy,
                     cx.ceiling, cq.ceiling)
    return _make_bounds(d_hat, v)


def _dense_query(cx: CompressedSeq, q) -> np.ndarray:
    if isinstance(q, Spectrum):
        if q.n != cx.n or q.basis != cx.basis or q.conjugate_symmetric != cx.symmetric:
            raise InvalidPairError("spectrum does not match the compressed object")
        return storable(q)
    q = np.asarray(q)
    if q.shape != (cx.n_bins,):
        raise InvalidPairError(f"dense query must have {cx.n_bins} bins")
    return q


def bounds_vs_uncompressed(cx: CompressedSeq, q_spectrum) -> BoundPair:
    """Bounds between a compressed object and a fully known one.

    ``q_spectrum`` is a :class:`Spectrum` or an array of storable bins (the
    representation used for k-means centroids).
    """
    qd = _dense_query(cx, q_spectrum)
    w = cx.weights
    d_hat = _known_part(cx.dense - qd, w) + cx.residual_energy
    unknown = cx.unknown_mask
    res = fill(np.abs(qd[unknown]), cx.residual_energy, cx.ceiling, w[unknown])
    return _make_bounds(d_hat, res.v_opt)


def exact_distance(x, q) -> float:
    x = np.asarray(x)
    q = np.asarray(q)
    return float(np.linalg.norm(x - q))
