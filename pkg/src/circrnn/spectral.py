"""FFT primitives and circular convolution/correlation.

Conventions: the forward transform is unnormalized and the inverse carries
the ``1/k`` factor, so ``ifft(fft(w) * fft(x))`` is the circular convolution
of ``w`` and ``x`` with no extra scaling.

All functions accept a single vector or a 2-D array whose rows are
transformed independently.
"""

import numpy as np

from . import _backend
from .errors import LengthError

IMAG_TOLERANCE = 1e-9


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def check_length(k):
    if not is_power_of_two(k):
        raise LengthError(f"length must be a power of two >= 1, got {k}", length=k)


def _transform(v, inverse):
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim not in (1, 2):
        raise LengthError(f"expected a vector or 2-D array of rows, got ndim={v.ndim}")
    check_length(v.shape[-1])
    rows = np.atleast_2d(v)
    out = _backend.kernels.fft_rows(np.ascontiguousarray(rows), inverse)
    return out[0] if v.ndim == 1 else out


def fft(v):
    """Unnormalized forward DFT: ``X[f] = sum_t v[t] exp(-2 pi i f t / k)``."""
    return _transform(v, inverse=False)


def ifft(v):
    """Inverse DFT with ``1/k`` normalization."""
    return _transform(v, inverse=True)


def half_bins(k):
    """Number of non-redundant bins in the spectrum of a real k-vector."""
    return k // 2 + 1


def real_spectrum(x):
    """First ``k//2 + 1`` DFT bins of each real row of ``x`` (shape ``(..., k)``)."""
    x = np.asarray(x, dtype=np.float64)
    k = x.shape[-1]
    full = fft(x.reshape(-1, k))
    return full[:, : half_bins(k)].reshape(x.shape[:-1] + (half_bins(k),))


def inverse_real_spectrum(half, k):
    """Invert ``real_spectrum``: rebuild the Hermitian spectrum, IFFT, keep real part."""
    half = np.asarray(half, dtype=np.complex128)
    lead = half.shape[:-1]
    h = half.reshape(-1, half.shape[-1])
    full = np.empty((h.shape[0], k), dtype=np.complex128)
    nb = half_bins(k)
    full[:, :nb] = h
    if k > 2:
        # bins k/2+1 .. k-1 are conjugates of bins k/2-1 .. 1
        full[:, nb:] = np.conj(h[:, nb - 2 : 0 : -1])
    # bins 0 and k/2 of a real signal are real
    full[:, 0] = full[:, 0].real
    if k >= 2:
        full[:, k // 2] = full[:, k // 2].real
    return ifft(full).real.reshape(lead + (k,))


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise LengthError("operands must be 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise LengthError(
            f"operand lengths differ: {a.shape[0]} vs {b.shape[0]}", length=b.shape[0]
        )
    check_length(a.shape[0])
    return a, b


def _real_part(c):
    residue = float(np.max(np.abs(c.imag))) if c.size else 0.0
    if residue > IMAG_TOLERANCE:
        raise ArithmeticError(f"imaginary residue {residue:.3e} exceeds {IMAG_TOLERANCE:g}")
    return c.real.copy()


def circular_convolve(a, b):
    """``c[i] = sum_j a[j] * b[(i - j) mod k]`` via ``IFFT(FFT(a) * FFT(b))``."""
    a, b = _pair(a, b)
    return _real_part(ifft(fft(a) * fft(b)))


def circular_correlate(a, b):
    """``c[j] = sum_i a[i] * b[(i - j) mod k]`` via ``IFFT(FFT(a) * conj(FFT(b)))``."""
    a, b = _pair(a, b)
    return _real_part(ifft(fft(a) * np.conj(fft(b))))
