"""Single-object waterfilling.

Given the known magnitudes ``b`` of one side and the residual energy ``e`` of
the other side's unknown coefficients (each capped at ``A``), find magnitudes
``a`` maximising ``sum(w * a * b)`` subject to ``sum(w * a**2) <= e`` and
``0 <= a <= A``.  The optimum is ``a = min(b / lam, A)`` for the water level
``lam`` that spends the energy; energy is poured into the unsaturated
coefficients in proportion to ``b`` and coefficients that overflow the ceiling
are clamped and removed, repeatedly.

``w`` are integer bin multiplicities (a conjugate pair of DFT bins counts
twice); ``w = 1`` everywhere reproduces the textbook algorithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleEnergyError, InvalidInputError

FEAS_TOL = 1e-12
SAT_TOL = 1e-12
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class WaterfillResult:
    a: np.ndarray
    lam: float
    alphas: np.ndarray
    v_opt: float
    # energy left unallocated; nonzero only when every coefficient with b > 0
    # is saturated or b is identically zero
    reserve: float
    passes: int = 0


def _prepare(b, e, A, weights):
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    w = np.ones_like(b) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != b.shape:
        raise InvalidInputError("weights and magnitudes differ in shape")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("magnitudes must be finite")
    if np.any(b < 0) or np.any(w <= 0):
        raise InvalidInputError("magnitudes must be >= 0 and weights > 0")
    e = float(e)
    A = float(A)
    if not (e >= 0) or not (A >= 0) or math.isnan(A):
        raise InvalidInputError("energy and ceiling must be non-negative")
    return b, w, e, A


def waterfill(b, e, A, weights=None) -> WaterfillResult:
    b, w, e, A = _prepare(b, e, A, weights)
    cap = float(np.sum(w)) * A * A
    if e > cap * (1 + FEAS_TOL) + FEAS_TOL * (cap == 0):
        raise InfeasibleEnergyError(f"energy {e:g} exceeds capacity {cap:g}")
    return fill(b, e, A, w)


def fill(b: np.ndarray, e: float, A: float, w: np.ndarray) -> WaterfillResult:
    """Unchecked core of :func:`waterfill` for callers with validated arrays."""
    a = np.zeros_like(b)
    active = np.ones(b.shape, dtype=bool)
    saturated = np.zeros(b.shape, dtype=bool)
    lam = 0.0
    R = e
    passes = 0
    limit = b.size + 1
    sat_at = A + SAT_TOL * max(1.0, A)

    while R > 0 and active.any():
        passes += 1
        if passes > limit:
            raise RuntimeError(f"waterfill did not terminate in {limit} passes")
        mass = float(np.dot(w[active], b[active] ** 2))
        if _TINY <= mass < math.inf:
            lam = math.sqrt(mass / R)
            a[active] = b[active] / lam
        else:
            top = float(b[active].max())
            if top == 0.0:
                # only zero-valued partners left; any placement is optimal
                a[active] = 0.0
                break
            # squares under- or overflowed (subnormals lose digits): work relative
            # to the largest partner
            rel = b[active] / top
            lam_rel = math.sqrt(float(np.dot(w[active], rel ** 2)) / R)
            lam = top * lam_rel
            a[active] = rel / lam_rel
        over = active & (a > sat_at)
        if not over.any():
            break
        a[over] = A
        saturated |= over
        active &= ~over
        R = e - float(np.sum(w[saturated])) * A * A
    else:
        if R <= 0:
            # rounding left no reserve for the stragglers
            a[active] = 0.0

    alphas = np.zeros_like(b)
    if saturated.any():
        alphas[saturated] = b[saturated] / A - lam
    v_opt = -float(np.dot(w, a * b))
    reserve = max(0.0, e - float(np.dot(w, a * a)))
    return WaterfillResult(a, lam, alphas, v_opt, reserve, passes)
