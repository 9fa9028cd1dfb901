"""Orthonormal transforms: unitary DFT and orthonormal Haar DWT.

Both transforms preserve energy (Parseval), so Euclidean distances computed on
spectra equal distances between the original sequences.

The DFT uses the standard sign convention, ``exp(-2j*pi*k*l/N)`` forward and
``exp(+2j*pi*k*l/N)`` inverse, with a ``1/sqrt(N)`` factor in both
directions.  The bounds machinery only looks at magnitudes and conjugated
inner products, so it is indifferent to the sign choice.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

#: Coarsest Haar scale kept by default: 2**2 scaling coefficients remain.
HAAR_MIN_LEVEL = 2


class Basis(enum.IntEnum):
    DFT = 0
    HAAR = 1

    @classmethod
    def parse(cls, value) -> "Basis":
        if isinstance(value, Basis):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise InvalidInputError(f"unknown basis {value!r}") from None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Transform-domain coefficients of one sequence.

    ``coeffs`` always holds all N coefficients.  ``conjugate_symmetric`` is set
    when the spectrum came from a real-valued DFT input; compression then works
    on the half spectrum ``0..N//2`` only.
    """

    coeffs: np.ndarray
    basis: Basis = Basis.DFT
    conjugate_symmetric: bool = False
    haar_level: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        c = c.astype(np.float64) if self.basis == Basis.HAAR else c.astype(np.complex128)
        if c.ndim != 1 or c.size < 1:
            raise InvalidInputError("spectrum must be a non-empty 1-D array")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return int(self.coeffs.size)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))


def as_sequence(values, require_real: bool = False) -> np.ndarray:
    x = np.asarray(values)
    if x.ndim != 1:
        raise InvalidInputError("sequence must be one-dimensional")
    if x.size < 2:
        raise InvalidInputError(f"sequence length must be >= 2, got {x.size}")
    if require_real and np.iscomplexobj(x):
        raise InvalidInputError("sequence must be real-valued")
    if np.iscomplexobj(x):
        x = x.astype(np.complex128)
    else:
        x = x.astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("sequence contains non-finite values")
    return x


def dft_forward(seq) -> Spectrum:
    x = as_sequence(seq)
    coeffs = np.fft.fft(x, norm="ortho")
    return Spectrum(coeffs, Basis.DFT, conjugate_symmetric=not np.iscomplexobj(x))


def dft_inverse(spec: Spectrum) -> np.ndarray:
    if spec.basis != Basis.DFT:
        raise InvalidInputError("dft_inverse needs a DFT spectrum")
    x = np.fft.ifft(spec.coeffs, norm="ortho")
    if spec.conjugate_symmetric:
        return x.real.copy()
    return x


def naive_dft(seq) -> np.ndarray:
    """O(N^2) direct summation; reference for the FFT path."""
    x = np.asarray(seq, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return kernel @ x / np.sqrt(n)


def _check_pow2(n: int) -> int:
    if n < 2 or n & (n - 1):
        raise InvalidInputError(f"Haar transform needs a power-of-two length, got {n}")
    return n.bit_length() - 1


def haar_forward(seq, level: int = HAAR_MIN_LEVEL) -> Spectrum:
    """Orthonormal Haar DWT down to ``2**level`` scaling coefficients.

    Output layout is ``[scaling | coarsest details | ... | finest details]``;
    ``level=0`` is the full decomposition with a single scaling coefficient.
    """
    x = as_sequence(seq, require_real=True)
    j = _check_pow2(x.size)
    if level < 0:
        raise InvalidInputError("level must be non-negative")
    level = min(level, j)
    out = x.copy()
    m = x.size
    r = np.sqrt(0.5)
    while m > (1 << level):
        head = out[:m]
        even, odd = head[0::2], head[1::2]
        approx = (even + odd) * r
        detail = (even - odd) * r
        out[: m // 2] = approx
        out[m // 2 : m] = detail
        m //= 2
    return Spectrum(out, Basis.HAAR, conjugate_symmetric=False, haar_level=level)


def haar_inverse(spec: Spectrum) -> np.ndarray:
    if spec.basis != Basis.HAAR:
        raise InvalidInputError("haar_inverse needs a Haar spectrum")
    c = np.asarray(spec.coeffs, dtype=np.float64)
    j = _check_pow2(c.size)
    level = HAAR_MIN_LEVEL if spec.haar_level is None else spec.haar_level
    level = min(level, j)
    out = c.copy()
    m = 1 << level
    r = np.sqrt(0.5)
    while m < c.size:
        approx = out[:m].copy()
        detail = out[m : 2 * m].copy()
        out[0 : 2 * m : 2] = (approx + detail) * r
        out[1 : 2 * m : 2] = (approx - detail) * r
        m *= 2
    return out


def forward(seq, basis: Basis, **kw) -> Spectrum:
    """Dispatch on ``basis``."""
    basis = Basis.parse(basis)
    if basis == Basis.DFT:
        return dft_forward(seq)
    return haar_forward(seq, **kw)


def inverse(spec: Spectrum) -> np.ndarray:
    if spec.basis == Basis.DFT:
        return dft_inverse(spec)
    return haar_inverse(spec)
