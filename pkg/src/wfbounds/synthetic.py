"""Synthetic datasets and the binary-image column signature."""
from __future__ import annotations

import numpy as np

from .compress import n_bins
from .errors import InvalidInputError

KINDS = ("random_walk", "periodic_mixture", "sparsified")


def random_walk(n: int, N: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.cumsum(rng.standard_normal((n, N)), axis=1)


def periodic_mixture(n: int, N: int, seed: int = 0, n_templates: int = 4, n_tones: int = 3,
                     noise: float = 0.1, jitter: float = 0.2, max_freq=None,
                     return_labels: bool = False):
    """Noisy copies of a few multi-tone templates.

    Each template is a sum of ``n_tones`` sinusoids at random frequencies
    (anywhere below Nyquist unless ``max_freq`` is given);
    members get multiplicative amplitude jitter, a small phase shift per tone
    and white noise.  Objects cycle through the templates.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(N)
    top = max(2, N // 2 - 1 if max_freq is None else int(max_freq))
    freqs = [rng.choice(np.arange(1, top + 1), size=n_tones, replace=False) for _ in range(n_templates)]
    amps = [rng.uniform(0.5, 2.0, size=n_tones) for _ in range(n_templates)]
    phases = [rng.uniform(0, 2 * np.pi, size=n_tones) for _ in range(n_templates)]
    labels = np.arange(n) % n_templates
    out = np.empty((n, N))
    for i, c in enumerate(labels):
        amp = amps[c] * (1 + jitter * rng.standard_normal(n_tones))
        ph = phases[c] + jitter * rng.standard_normal(n_tones)
        x = (amp[:, None] * np.cos(2 * np.pi * freqs[c][:, None] * t / N + ph[:, None])).sum(axis=0)
        out[i] = x + noise * rng.standard_normal(N)
    return (out, labels) if return_labels else out


def sparsify(data, keep: int) -> np.ndarray:
    """Zero all but the ``keep`` largest half-spectrum DFT bins of each row."""
    data = np.asarray(data, dtype=np.float64)
    N = data.shape[1]
    nb = n_bins(N, True)
    if not 1 <= keep <= nb:
        raise InvalidInputError(f"keep must be in [1, {nb}]")
    X = np.fft.rfft(data, axis=1)
    order = np.argsort(-np.abs(X), axis=1, kind="stable")
    mask = np.zeros_like(X, dtype=bool)
    np.put_along_axis(mask, order[:, :keep], True, axis=1)
    return np.fft.irfft(np.where(mask, X, 0), n=N, axis=1)


def gen_synthetic(kind: str, n: int, N: int, s: int = 16, seed: int = 0, **kw) -> np.ndarray:
    """``n`` sequences of length ``N``; ``sparsified`` keeps ``3 s`` bins of a random walk."""
    if n < 1 or N < 2 or s < 1:
        raise InvalidInputError("n, N and s must be positive (N >= 2)")
    if kind == "random_walk":
        return random_walk(n, N, seed)
    if kind == "periodic_mixture":
        return periodic_mixture(n, N, seed, **kw)
    if kind == "sparsified":
        return sparsify(random_walk(n, N, seed), min(3 * s, n_bins(N, True)))
    raise InvalidInputError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")


def image_signature(image) -> np.ndarray:
    """Column sums of a binary image (one value per column)."""
    if isinstance(image, (list, tuple)):
        widths = {len(row) for row in image}
        if len(widths) > 1:
            raise InvalidInputError("ragged image rows")
    img = np.asarray(image)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError("image must be a non-empty H x W matrix")
    if not np.all((img == 0) | (img == 1)):
        raise InvalidInputError("image must be binary (0/1)")
    return img.sum(axis=0).astype(np.float64)
