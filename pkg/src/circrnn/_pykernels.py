"""NumPy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is missing or ``CIRC_RNN_BACKEND=python``.

Spectra passed to the ``spectral_*`` kernels hold only the first
``k//2 + 1`` bins of each block (the rest follow by conjugate symmetry
because every operand is real).  Reductions run in ascending index order.
"""

from functools import lru_cache

import numpy as np

NAME = "python"


@lru_cache(maxsize=None)
def _bit_reversal(k):
    bits = k.bit_length() - 1
    idx = np.arange(k)
    rev = np.zeros(k, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size, inverse):
    ang = (2.0 if inverse else -2.0) * np.pi * np.arange(size // 2) / size
    return np.cos(ang) + 1j * np.sin(ang)


def fft_rows(a, inverse=False):
    """Radix-2 decimation-in-time FFT of every row of a 2-D complex array."""
    a = np.asarray(a, dtype=np.complex128)
    rows, k = a.shape
    out = a[:, _bit_reversal(k)]
    size = 2
    while size <= k:
        half = size // 2
        v = out.reshape(rows, k // size, size)
        even = v[..., :half]
        odd = v[..., half:] * _twiddles(size, inverse)
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(rows, k)
        size *= 2
    if inverse:
        out /= k
    return out


def spectral_matvec(S, X):
    """Y[b, i] = sum_j S[i, j] * X[b, j], elementwise over bins."""
    p, q, nb = S.shape
    Y = np.zeros((X.shape[0], p, nb), dtype=np.complex128)
    for j in range(q):
        Y += S[None, :, j, :] * X[:, None, j, :]
    return Y


def spectral_matvec_t(S, D):
    """Z[b, j] = sum_i conj(S[i, j]) * D[b, i]."""
    p, q, nb = S.shape
    Sc = np.conj(S)
    Z = np.zeros((D.shape[0], q, nb), dtype=np.complex128)
    for i in range(p):
        Z += Sc[None, i, :, :] * D[:, i, None, :]
    return Z


def spectral_outer(D, X):
    """G[i, j] = sum_b D[b, i] * conj(X[b, j])."""
    Xc = np.conj(X)
    G = np.zeros((D.shape[1], X.shape[1], D.shape[2]), dtype=np.complex128)
    for b in range(D.shape[0]):
        G += D[b, :, None, :] * Xc[b, None, :, :]
    return G


def block_matvec(S, segs):
    """Fused FFT -> spectral accumulate -> IFFT on real segments ``(B, q, k)``."""
    B, q, k = segs.shape
    nb = S.shape[2]
    X = fft_rows(segs.reshape(B * q, k))[:, :nb].reshape(B, q, nb)
    Y = spectral_matvec(S, X).reshape(-1, nb)
    full = np.empty((Y.shape[0], k), dtype=np.complex128)
    full[:, :nb] = Y
    if k > 2:
        full[:, nb:] = np.conj(Y[:, nb - 2 : 0 : -1])
    full[:, 0] = full[:, 0].real
    full[:, k // 2] = full[:, k // 2].real
    return fft_rows(full, inverse=True).real.reshape(B, S.shape[0], k)
