"""Translation-invariant spectra of signals on the cyclic group Z_n.

A signal is a complex vector f indexed by Z_n, the symmetry is circular
shift f^z[x] = f[x - z].  The Fourier transform diagonalises the shift,
the power spectrum discards all phase, and the bispectrum

    b[k1, k2] = conj(fhat[k1]) conj(fhat[k2]) fhat[k1 + k2 mod n]

retains relative phase between frequency pairs, which makes it a complete
shift invariant for generic signals.  Everything here is computed by
direct summation; the intended regime is n <= 256, where the O(n^2)
transform and O(n^3) triple correlation are cheap and the direct form
doubles as its own specification.
"""

import numpy as np

__all__ = [
    "dft",
    "shift",
    "power_spectrum",
    "autocorrelation",
    "triple_correlation",
    "cyclic_bispectrum",
]


def _as_signal(f):
    f = np.asarray(f, dtype=complex)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("expected a non-empty 1-D signal, got shape %r" % (f.shape,))
    return f


def dft(f):
    """Fourier transform fhat[k] = sum_x exp(-2 pi i x k / n) f[x].

    Note the normalisation: no 1/n or 1/sqrt(n) factor, so dft(delta_0)
    is the all-ones vector.
    """
    f = _as_signal(f)
    n = f.size
    xk = np.outer(np.arange(n), np.arange(n))
    return np.exp(-2j * np.pi * xk / n) @ f


def shift(f, z):
    """Translate by z: result[x] = f[(x - z) mod n]."""
    f = _as_signal(f)
    return np.roll(f, int(z) % f.size)


def power_spectrum(fhat):
    """q[k] = |fhat[k]|^2, real and shift invariant (phase-blind)."""
    fhat = _as_signal(fhat)
    return (fhat.conj() * fhat).real


def autocorrelation(f):
    """a[x] = sum_y conj(f[y]) f[y + x].

    Its Fourier transform is the power spectrum.
    """
    f = _as_signal(f)
    n = f.size
    out = np.empty(n, dtype=complex)
    for x in range(n):
        out[x] = np.vdot(f, np.roll(f, -x))
    return out


def triple_correlation(f):
    """a[x1, x2] = sum_y conj(f[y - x1]) conj(f[y - x2]) f[y].

    Shift invariant already in signal space; its 2-D Fourier transform
    is the cyclic bispectrum.  O(n^3), fine for the small n used here.
    """
    f = _as_signal(f)
    n = f.size
    # rolled[x, y] = f[y - x]
    rolled = np.stack([np.roll(f, x) for x in range(n)])
    return np.einsum("ay,by,y->ab", rolled.conj(), rolled.conj(), f)


def cyclic_bispectrum(fhat):
    """b[k1, k2] = conj(fhat[k1]) conj(fhat[k2]) fhat[(k1 + k2) mod n].

    Takes the already-transformed signal.  The result is an n x n complex
    matrix, unchanged under any circular shift of the underlying signal.
    """
    fhat = _as_signal(fhat)
    n = fhat.size
    ksum = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    return np.outer(fhat.conj(), fhat.conj()) * fhat[ksum]
