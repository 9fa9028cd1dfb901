"""Per-object compressed representations.

A compressed object keeps ``s`` coefficients (positions and values) plus the
energy of everything it threw away.  For real-input DFT spectra only the half
spectrum ``0..N//2`` is stored; every half-spectrum bin carries a multiplicity
(2 for a conjugate pair, 1 for DC and Nyquist) and all energy fields are kept
in full-spectrum units, so downstream code never sees the pairing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .transform import Basis, Spectrum, inverse

_REL_TOL = 1e-9


def n_bins(n: int, symmetric: bool) -> int:
    """Number of storable bins for a length-``n`` object."""
    return n // 2 + 1 if symmetric else n


def bin_weights(n: int, symmetric: bool) -> np.ndarray:
    nb = n_bins(n, symmetric)
    if not symmetric:
        return np.ones(nb)
    w = np.full(nb, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def storable(spec: Spectrum) -> np.ndarray:
    """The coefficients a compressed object may keep (half spectrum if paired)."""
    return spec.coeffs[: n_bins(spec.n, spec.conjugate_symmetric)]


@dataclass(frozen=True, eq=False)
class CompressedSeq:
    n: int
    basis: Basis
    positions: np.ndarray
    values: np.ndarray
    residual_energy: float
    norm_sq: float
    symmetric: bool = False
    # False for first-s compression: the smallest kept magnitude is then no
    # ceiling on the discarded ones.
    floor_valid: bool = True

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        dtype = np.float64 if self.basis == Basis.HAAR else np.complex128
        vals = np.asarray(self.values).astype(dtype).reshape(-1)
        nb = n_bins(self.n, self.symmetric)
        if pos.size != vals.size:
            raise InvalidInputError("positions and values differ in length")
        if pos.size and (pos[0] < 0 or pos[-1] >= nb or np.any(np.diff(pos) <= 0)):
            raise InvalidInputError("positions must be strictly increasing within the bin range")
        if not self.residual_energy >= 0:
            raise InvalidInputError("residual energy must be non-negative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "basis", Basis(self.basis))
        object.__setattr__(self, "residual_energy", float(self.residual_energy))
        object.__setattr__(self, "norm_sq", float(self.norm_sq))

    @classmethod
    def from_parts(cls, n, basis, positions, values, residual_energy, symmetric=False,
                   floor_valid=True) -> "CompressedSeq":
        """Build a record and derive ``norm_sq`` from its parts."""
        pos = np.asarray(positions, dtype=np.int64).reshape(-1)
        if pos.size and (pos.min() < 0 or pos.max() >= n_bins(n, symmetric)):
            raise InvalidInputError("positions outside the bin range")
        w = bin_weights(n, symmetric)[pos]
        kept = float(np.sum(w * np.abs(np.asarray(values)) ** 2))
        return cls(n, Basis.parse(basis), pos, values, residual_energy,
                   kept + float(residual_energy), symmetric, floor_valid)

    @property
    def s(self) -> int:
        return int(self.positions.size)

    @property
    def n_bins(self) -> int:
        return n_bins(self.n, self.symmetric)

    @cached_property
    def weights(self) -> np.ndarray:
        return bin_weights(self.n, self.symmetric)

    @cached_property
    def floor(self) -> float:
        """Smallest kept magnitude."""
        if self.s == 0:
            return math.inf
        return float(np.min(np.abs(self.values)))

    @property
    def ceiling(self) -> float:
        """Upper bound on any discarded magnitude; infinite when unknown."""
        return self.floor if self.floor_valid else math.inf

    @cached_property
    def known_mask(self) -> np.ndarray:
        m = np.zeros(self.n_bins, dtype=bool)
        m[self.positions] = True
        return m

    @cached_property
    def dense(self) -> np.ndarray:
        """Kept coefficients scattered into a zero-filled bin array."""
        out = np.zeros(self.n_bins, dtype=self.values.dtype)
        out[self.positions] = self.values
        return out

    @cached_property
    def unknown_mask(self) -> np.ndarray:
        return ~self.known_mask

    @cached_property
    def magnitudes(self) -> np.ndarray:
        """``|dense|``: kept magnitudes, zero on discarded bins."""
        return np.abs(self.dense)

    def kept_energy(self) -> float:
        return float(np.sum(self.weights[self.positions] * np.abs(self.values) ** 2))

    def check_consistency(self, rel_tol: float = _REL_TOL) -> bool:
        total = self.kept_energy() + self.residual_energy
        return abs(total - self.norm_sq) <= rel_tol * max(1.0, abs(self.norm_sq))

    def reconstruct(self, haar_level=None) -> np.ndarray:
        """Time-domain sequence using only the kept coefficients."""
        full = np.zeros(self.n, dtype=self.values.dtype)
        full[self.positions] = self.values
        if self.symmetric:
            mirror = self.positions[(self.positions > 0) & (self.n - self.positions != self.positions)]
            full[self.n - mirror] = np.conj(self.dense[mirror])
        spec = Spectrum(full, self.basis, self.symmetric, haar_level)
        return inverse(spec)

    def _key(self):
        return (self.n, int(self.basis), self.symmetric, self.floor_valid,
                self.positions.tobytes(), self.values.tobytes(),
                np.float64(self.residual_energy).tobytes(), np.float64(self.norm_sq).tobytes())

    def __eq__(self, other):
        if not isinstance(other, CompressedSeq):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (f"CompressedSeq(n={self.n}, basis={self.basis.name}, s={self.s}, "
                f"e={self.residual_energy:.6g}, norm_sq={self.norm_sq:.6g})")


def _check_count(s, nb):
    if not isinstance(s, (int, np.integer)) or not 1 <= s <= nb:
        raise InvalidInputError(f"coefficient count must be in [1, {nb}], got {s!r}")


def _build(spec: Spectrum, keep: np.ndarray, floor_valid: bool) -> CompressedSeq:
    coeffs = storable(spec)
    w = bin_weights(spec.n, spec.conjugate_symmetric)
    energy = w * np.abs(coeffs) ** 2
    mask = np.zeros(coeffs.size, dtype=bool)
    mask[keep] = True
    e = float(np.sum(energy[~mask]))
    total = float(np.sum(energy))
    pos = np.flatnonzero(mask)
    return CompressedSeq(spec.n, spec.basis, pos, coeffs[pos], e, total,
                         spec.conjugate_symmetric, floor_valid)


def compress_top(spec: Spectrum, s: int) -> CompressedSeq:
    """Keep the ``s`` largest-magnitude storable bins (lower index wins ties)."""
    coeffs = storable(spec)
    _check_count(s, coeffs.size)
    # stable sort on -|X| keeps lower indices first among equal magnitudes
    order = np.argsort(-np.abs(coeffs), kind="stable")
    return _build(spec, order[:s], floor_valid=True)


def compress_first(spec: Spectrum, s: int) -> CompressedSeq:
    """Keep bins ``0..s-1``; the kept floor is not a ceiling for the rest."""
    coeffs = storable(spec)
    _check_count(s, coeffs.size)
    return _build(spec, np.arange(s), floor_valid=False)


def storage_budget(s: int, basis) -> int:
    """64-bit words per object: values, 32-bit positions and the residual energy."""
    basis = Basis.parse(basis)
    if s < 1:
        raise InvalidInputError("s must be >= 1")
    if basis == Basis.DFT:
        return 2 * s + 1 + (s + 1) // 2          # ceil(2s + s/2 + 1)
    return (5 * s + 2 + 3) // 4                    # ceil(s + s/4 + 1/2)


def first_coeff_count(budget: int, basis, limit=None) -> int:
    """How many leading coefficients (plus residual energy) fit in ``budget`` words."""
    basis = Basis.parse(basis)
    per = 2 if basis == Basis.DFT else 1
    s = max(1, (budget - 1) // per)
    return s if limit is None else min(s, limit)


def dense_half(spec: Spectrum) -> np.ndarray:
    """Storable bins of an uncompressed spectrum (for centroids and queries)."""
    return storable(spec).copy()


def serialize(db, basis=None) -> bytes:
    """Binary encoding of a database; see :mod:`wfbounds.dbformat`."""
    from .dbformat import serialize as _ser
    return _ser(db, basis)


def deserialize(data: bytes):
    from .dbformat import deserialize as _de
    return _de(data)
