"""Independent checks for the double-waterfilling solver.

* ``alternating_bounds``: best-response iteration.  With Q's unknown
  magnitudes fixed, X's best allocation is a single waterfill, and vice
  versa; iterating from a uniform start reaches the global optimum because
  the problem is concave in the squared magnitudes.  Slow but shares no code
  with the fixed-point split.
* ``grid_bruteforce``: exhaustive search over magnitudes on a uniform grid.
* ``kkt_check``: optimality conditions of the squared-magnitude form
  (``z = a^2``, ``y = b^2``, ``Z = A^2``, ``Y = B^2``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .bounds import (DEGENERATE, DISJOINT, CrossTermProblem, DoubleWaterfillResult,
                     build_partition)
from .errors import ConvergenceError, InvalidInputError
from .waterfill import waterfill

ALTERNATING = "alternating"
MAX_GRID_UNKNOWNS = 8


def _problem(cx, cq=None) -> CrossTermProblem:
    if isinstance(cx, CrossTermProblem):
        return cx
    return CrossTermProblem.from_pair(cx, cq, build_partition(cx, cq))


def random_problem(rng, max_unknowns: int = 4) -> CrossTermProblem:
    """Random small instance shaped like a real pair.

    Kept magnitudes are at least the owner's ceiling; multiplicities are 1 or
    2; each residual energy is a uniform fraction of what its unknowns hold.
    """
    n3 = int(rng.integers(0, max_unknowns + 1))
    n1 = int(rng.integers(0, max_unknowns + 1 - n3))
    n2 = int(rng.integers(0, max_unknowns + 1 - n3))
    A, B = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
    b1 = rng.uniform(B, 3 * B, n1)
    a2 = rng.uniform(A, 3 * A, n2)
    w1, w2, w3 = (rng.choice([1.0, 2.0], k) for k in (n1, n2, n3))
    e_x = rng.uniform() * (w1.sum() + w3.sum()) * A * A
    e_q = rng.uniform() * (w2.sum() + w3.sum()) * B * B
    return CrossTermProblem.create(b1, a2, e_x, e_q, A, B, w1=w1, w2=w2, w3=w3)


# alternating best responses -------------------------------------------------

def alternating_solve(p: CrossTermProblem, tol=1e-10, max_iter=100_000) -> DoubleWaterfillResult:
    n1, n2 = p.b1.size, p.a2.size
    wx = np.concatenate((p.w1, p.w3))
    wq = np.concatenate((p.w2, p.w3))
    # uniform start on Q's unknowns
    Wq = float(np.sum(wq))
    b3 = np.full(p.w3.size, math.sqrt(p.e_q / Wq) if Wq > 0 else 0.0)
    if math.isfinite(p.B):
        b3 = np.minimum(b3, p.B)
    prev = None
    for it in range(1, max_iter + 1):
        rx = waterfill(np.concatenate((p.b1, b3)), p.e_x, p.A, wx)
        a3 = rx.a[n1:]
        rq = waterfill(np.concatenate((p.a2, a3)), p.e_q, p.B, wq)
        b3 = rq.a[n2:]
        v = rq.v_opt - float(np.dot(p.w1, rx.a[:n1] * p.b1))
        if prev is not None and abs(prev - v) < tol * max(1.0, abs(v)):
            break
        prev = v
    else:
        raise ConvergenceError(f"alternating waterfill did not settle in {max_iter} rounds",
                               iterations=max_iter, residual=abs(prev - v))
    ex3 = float(np.dot(p.w3, a3 ** 2))
    eq3 = float(np.dot(p.w3, b3 ** 2))
    return DoubleWaterfillResult(
        v, rx.a[:n1], rq.a[:n2],
        float(a3[0]) if a3.size else 0.0, float(b3[0]) if b3.size else 0.0,
        rx.lam, rq.lam, rx.alphas[:n1], rq.alphas[:n2], ex3, eq3, ALTERNATING, p)


def alternating_bounds(cx, cq=None, tol=1e-10, max_iter=100_000) -> DoubleWaterfillResult:
    """Fixed point of alternating waterfills; accepts a pair or a problem."""
    return alternating_solve(_problem(cx, cq), tol, max_iter)


# grid search ------------------------------------------------------------------

def _caps(p: CrossTermProblem):
    """Grid tops; infinite ceilings are replaced by the largest feasible magnitude."""
    wx = np.concatenate((p.w1, p.w3))
    wq = np.concatenate((p.w2, p.w3))
    A = p.A if math.isfinite(p.A) else math.sqrt(p.e_x / wx.min()) if wx.size else 0.0
    B = p.B if math.isfinite(p.B) else math.sqrt(p.e_q / wq.min()) if wq.size else 0.0
    return A, B


def _private_best(partner, w, cap, steps):
    """Sorted energies and running best value over every grid vector."""
    k = partner.size
    if k == 0:
        return np.zeros(1), np.zeros(1)
    levels = np.linspace(0.0, cap, steps + 1)
    grid = np.array(list(itertools.product(levels, repeat=k)))
    energy = (grid ** 2) @ w
    value = grid @ (w * partner)
    order = np.argsort(energy, kind="stable")
    return energy[order], np.maximum.accumulate(value[order])


def _lookup(energies, best, budget):
    idx = np.searchsorted(energies, budget, side="right") - 1
    out = np.full(budget.shape, -np.inf)
    ok = idx >= 0
    out[ok] = best[idx[ok]]
    return out


def _sorted_shared(w3, cap, steps):
    """Grid vectors on P3 that are non-decreasing within each weight class.

    Permuting entries inside a class keeps the energy, and pairing the two
    sides in the same order maximises the inner product, so this loses
    nothing when both sides are restricted the same way.
    """
    levels = np.linspace(0.0, cap, steps + 1)
    groups = [np.flatnonzero(w3 == u) for u in np.unique(w3)]
    per_group = [list(itertools.combinations_with_replacement(range(steps + 1), g.size))
                 for g in groups]
    rows = []
    for combo in itertools.product(*per_group):
        v = np.empty(w3.size)
        for g, c in zip(groups, combo):
            v[g] = levels[list(c)]
        rows.append(v)
    return np.array(rows).reshape(-1, w3.size)


def grid_solve(p: CrossTermProblem, grid_steps=16) -> float:
    n_unknown = p.b1.size + p.a2.size + 2 * p.w3.size
    if n_unknown > MAX_GRID_UNKNOWNS:
        raise InvalidInputError(f"grid search limited to {MAX_GRID_UNKNOWNS} unknowns, got {n_unknown}")
    A, B = _caps(p)
    slack = 1e-12
    e1, best1 = _private_best(p.b1, p.w1, A, grid_steps)
    e2, best2 = _private_best(p.a2, p.w2, B, grid_steps)
    if p.w3.size == 0:
        return -float(_lookup(e1, best1, np.array([p.e_x * (1 + slack)]))[0]
                      + _lookup(e2, best2, np.array([p.e_q * (1 + slack)]))[0])
    a3 = _sorted_shared(p.w3, A, grid_steps)
    b3 = _sorted_shared(p.w3, B, grid_steps)
    ua = _lookup(e1, best1, (p.e_x - (a3 ** 2) @ p.w3) * (1 + slack) + slack)
    vb = _lookup(e2, best2, (p.e_q - (b3 ** 2) @ p.w3) * (1 + slack) + slack)
    a3, ua = a3[np.isfinite(ua)], ua[np.isfinite(ua)]
    b3, vb = b3[np.isfinite(vb)], vb[np.isfinite(vb)]
    bt = (b3 * p.w3).T
    best = -np.inf
    for lo in range(0, a3.shape[0], 1024):
        block = a3[lo:lo + 1024] @ bt + ua[lo:lo + 1024, None] + vb[None, :]
        best = max(best, float(block.max()))
    return -best


def grid_bruteforce(cx, cq=None, grid_steps=16) -> float:
    """Best grid value of ``-sum w a b`` (so it is >= the true ``v_opt``)."""
    return grid_solve(_problem(cx, cq), grid_steps)


def grid_slack(cx, cq=None, grid_steps=16) -> float:
    """Objective lost by rounding an optimal allocation down to the grid."""
    p = _problem(cx, cq)
    A, B = _caps(p)
    da, db = A / grid_steps, B / grid_steps
    return (da * (float(np.dot(p.w1, p.b1)) + p.W3 * B)
            + db * (float(np.dot(p.w2, p.a2)) + p.W3 * A)
            + p.W3 * da * db)


# optimality conditions ----------------------------------------------------------

@dataclass
class KKTReport:
    applicable: bool
    residuals: Dict[str, float] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.applicable and not self.violations


def _rel(x, scale):
    return float(x) / max(1.0, float(scale))


def kkt_check(result: DoubleWaterfillResult, cx=None, cq=None, tol=1e-8) -> KKTReport:
    """Check primal/dual feasibility, complementary slackness and stationarity.

    Stationarity is taken in the squared variables: on every bin with a
    positive allocation ``b / a = lam + alpha`` (X side) and
    ``a / b = mu + beta`` (Q side); a shared bin carries both, which forces
    ``lam * mu = 1``.  When nothing is put on the shared bins, moving energy
    there must not pay off, i.e. the cheapest marginal price on each side
    multiplies to at least one.
    """
    p = result.problem if cx is None else _problem(cx, cq)
    if p is None:
        raise InvalidInputError("result carries no problem; pass the pair explicitly")
    rep = KKTReport(applicable=result.branch != DEGENERATE, tol=tol)
    if not rep.applicable:
        return rep
    A, B = p.A, p.B
    a1, b2 = np.asarray(result.a_p1), np.asarray(result.b_p2)
    a3 = np.full(p.w3.size, result.a_p3)
    b3 = np.full(p.w3.size, result.b_p3)
    lam, mu = result.lam, result.mu
    alpha = np.asarray(result.alpha_p1)
    beta = np.asarray(result.beta_p2)
    zx = float(np.dot(p.w1, a1 ** 2) + np.dot(p.w3, a3 ** 2))
    yq = float(np.dot(p.w2, b2 ** 2) + np.dot(p.w3, b3 ** 2))
    scale_a = A if math.isfinite(A) else math.sqrt(max(p.e_x, 1.0))
    scale_b = B if math.isfinite(B) else math.sqrt(max(p.e_q, 1.0))

    # primal feasibility
    pf = [
        _rel(zx - p.e_x, p.e_x), _rel(yq - p.e_q, p.e_q),
        _rel(-min(a1.min(initial=0.0), a3.min(initial=0.0)), scale_a),
        _rel(-min(b2.min(initial=0.0), b3.min(initial=0.0)), scale_b),
    ]
    if math.isfinite(A):
        pf.append(_rel(max(a1.max(initial=0.0), a3.max(initial=0.0)) ** 2 - A * A, A * A))
    if math.isfinite(B):
        pf.append(_rel(max(b2.max(initial=0.0), b3.max(initial=0.0)) ** 2 - B * B, B * B))
    rep.residuals["PF"] = max(0.0, *pf)

    # dual feasibility
    rep.residuals["DF"] = max(0.0, -lam, -mu, -alpha.min(initial=0.0), -beta.min(initial=0.0))

    # complementary slackness (squared form: alpha (Z - z) = 0, lam (e - sum z) = 0)
    cs = [0.0]
    if alpha.size and math.isfinite(A):
        cs.append(float(np.max(np.abs(alpha * (A * A - a1 ** 2)))) / max(1.0, A * A))
    if beta.size and math.isfinite(B):
        cs.append(float(np.max(np.abs(beta * (B * B - b2 ** 2)))) / max(1.0, B * B))
    cs.append(abs(lam * (p.e_x - zx)) / max(1.0, p.e_x))
    cs.append(abs(mu * (p.e_q - yq)) / max(1.0, p.e_q))
    rep.residuals["CS"] = max(cs)

    # stationarity
    o = [0.0]
    pos1 = a1 > 0
    if pos1.any():
        o.append(float(np.max(np.abs(p.b1[pos1] - (lam + alpha[pos1]) * a1[pos1]) / np.maximum(1.0, p.b1[pos1]))))
    pos2 = b2 > 0
    if pos2.any():
        o.append(float(np.max(np.abs(p.a2[pos2] - (mu + beta[pos2]) * b2[pos2]) / np.maximum(1.0, p.a2[pos2]))))
    shared = p.w3.size > 0 and result.a_p3 > 0 and result.b_p3 > 0
    if shared:
        o.append(abs(result.b_p3 - lam * result.a_p3) / max(1.0, result.b_p3))
        o.append(abs(result.a_p3 - mu * result.b_p3) / max(1.0, result.a_p3))
        o.append(abs(lam * mu - 1.0))
    elif p.w3.size > 0 and result.branch != DISJOINT and p.e_x > 0 and p.e_q > 0:
        price_x = float(np.min((p.b1 / a1)[pos1])) if pos1.any() else 0.0
        price_q = float(np.min((p.a2 / b2)[pos2])) if pos2.any() else 0.0
        o.append(max(0.0, 1.0 - price_x * price_q))
    rep.residuals["O"] = max(o)

    for name, value in rep.residuals.items():
        if not value <= tol:
            rep.violations.append(f"{name} residual {value:.3g} > {tol:g}")
    return rep


__all__ = ["alternating_bounds", "alternating_solve", "grid_bruteforce", "grid_solve", "random_problem",
           "grid_slack", "kkt_check", "KKTReport"]
