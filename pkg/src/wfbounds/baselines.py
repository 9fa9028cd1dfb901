"""Competing distance estimators: random projections and PCA.

Random ensembles scale so that ``E ||Phi x||^2 = ||x||^2``:

* GRP: i.i.d. N(0, 1/d)
* BRP: +-1/sqrt(d) with equal probability
* ARP: sqrt(3/d) * {+1, 0, -1} with probabilities {1/6, 2/3, 1/6}

PCA keeps the top-``d`` principal directions of the centred data, found by
power iteration with deflation on whichever Gram matrix is smaller.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .compress import storage_budget
from .errors import ConvergenceError, InvalidInputError


class ProjectionKind(enum.Enum):
    GRP = "GRP"
    BRP = "BRP"
    ARP = "ARP"
    PCA = "PCA"

    @classmethod
    def parse(cls, value) -> "ProjectionKind":
        if isinstance(value, ProjectionKind):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise InvalidInputError(f"unknown projection kind {value!r}") from None


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    kind: ProjectionKind
    d: int
    n: int
    entries: np.ndarray          # d x n
    seed: Optional[int] = None
    mean: Optional[np.ndarray] = None      # PCA centring vector
    singular_values: Optional[np.ndarray] = None

    def project(self, seq) -> np.ndarray:
        return project(self, seq)


def _check_dims(d, n):
    if not (isinstance(d, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise InvalidInputError("dimensions must be integers")
    if not 1 <= d <= n:
        raise InvalidInputError(f"need 1 <= d <= n, got d={d}, n={n}")


def gen_projection(kind, d: int, n: int, seed: int) -> ProjectionMatrix:
    kind = ProjectionKind.parse(kind)
    if kind == ProjectionKind.PCA:
        raise InvalidInputError("PCA bases are fitted with pca_basis")
    _check_dims(d, n)
    rng = np.random.default_rng(seed)
    if kind == ProjectionKind.GRP:
        m = rng.standard_normal((d, n)) / math.sqrt(d)
    elif kind == ProjectionKind.BRP:
        m = np.where(rng.random((d, n)) < 0.5, 1.0, -1.0) / math.sqrt(d)
    else:
        u = rng.random((d, n))
        m = np.zeros((d, n))
        m[u < 1 / 6] = 1.0
        m[u >= 5 / 6] = -1.0
        m *= math.sqrt(3.0 / d)
    return ProjectionMatrix(kind, int(d), int(n), m, seed)


def project(m: ProjectionMatrix, seq) -> np.ndarray:
    """Project one sequence (1-D) or a batch of rows (2-D)."""
    x = np.asarray(seq, dtype=np.float64)
    if x.shape[-1] != m.n:
        raise InvalidInputError(f"sequence length {x.shape[-1]} does not match projection width {m.n}")
    if m.mean is not None:
        x = x - m.mean
    return x @ m.entries.T


def _power_eigs(G, d, rng, tol, max_iter):
    """Top-``d`` eigenpairs of a PSD matrix by power iteration and deflation."""
    n = G.shape[0]
    vecs = np.zeros((d, n))
    vals = np.zeros(d)
    top = None
    for k in range(d):
        basis = vecs[:k]
        v = rng.standard_normal(n)
        v -= basis.T @ (basis @ v)
        v /= np.linalg.norm(v)
        lam = 0.0
        for it in range(1, max_iter + 1):
            w = G @ v
            w -= basis.T @ (basis @ w)
            lam = float(v @ w)
            scale = top if top is not None else max(lam, 0.0)
            norm = np.linalg.norm(w)
            if norm == 0.0 or (top is not None and norm <= 1e-13 * top):
                # remaining spectrum is numerically zero: any orthonormal completion works
                lam = 0.0
                break
            resid = float(np.linalg.norm(w - lam * v))
            v = w / norm
            if resid <= tol * max(scale, np.finfo(float).tiny):
                break
        else:
            raise ConvergenceError(
                f"power iteration for component {k} did not converge in {max_iter} iterations",
                iterations=max_iter, residual=resid)
        # one Gram-Schmidt pass keeps the rows orthonormal to working precision
        v -= basis.T @ (basis @ v)
        v /= np.linalg.norm(v)
        vecs[k] = v
        vals[k] = max(lam, 0.0)
        if top is None:
            top = vals[0] if vals[0] > 0 else 1.0
    return vals, vecs


def _complete(rows, n, k, rng):
    """Orthonormal directions ``k..`` that extend ``rows[:k]``."""
    for j in range(k, rows.shape[0]):
        basis = rows[:j]
        v = rng.standard_normal(n)
        for _ in range(2):
            v -= basis.T @ (basis @ v)
        rows[j] = v / np.linalg.norm(v)
    return rows


def pca_basis(data, d: int, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000) -> ProjectionMatrix:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("data must be a 2-D array, one sequence per row")
    m, n = X.shape
    _check_dims(d, n)
    if m < d:
        raise InvalidInputError(f"need at least d={d} sequences, got {m}")
    mean = X.mean(axis=0)
    Xc = X - mean
    rng = np.random.default_rng(seed)
    if n <= m:
        vals, rows = _power_eigs(Xc.T @ Xc, d, rng, tol, max_iter)
    else:
        vals, u = _power_eigs(Xc @ Xc.T, d, rng, tol, max_iter)
        sig = np.sqrt(vals)
        rows = np.zeros((d, n))
        good = sig > 1e-12 * max(sig[0], 1e-300)
        rows[good] = (u[good] @ Xc) / sig[good, None]
    k = int(np.sum(vals > 1e-12 * max(vals[0], 1e-300)))
    rows = _complete(rows, n, k, rng)
    return ProjectionMatrix(ProjectionKind.PCA, int(d), n, rows, None, mean, np.sqrt(vals))


def baseline_dimension(s: int, basis) -> int:
    """Real dimensions a projection baseline gets at the same storage as ``s`` coefficients."""
    return storage_budget(s, basis)


def projected_distance(px, pq) -> float:
    return float(np.linalg.norm(np.asarray(px) - np.asarray(pq)))
