# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()

NAME = "compiled"


cdef void _fft_inplace(double complex[::1] a, double complex[::1] tw,
                       Py_ssize_t[::1] rev, bint inverse) noexcept nogil:
    cdef Py_ssize_t k = a.shape[0]
    cdef Py_ssize_t i, j, start, half, size, step
    cdef double complex u, t, w
    for i in range(k):
        j = rev[i]
        if j > i:
            u = a[i]
            a[i] = a[j]
            a[j] = u
    size = 2
    while size <= k:
        half = size // 2
        step = k // size
        start = 0
        while start < k:
            for j in range(half):
                w = tw[j * step]
                if inverse:
                    w = w.conjugate()
                t = w * a[start + j + half]
                u = a[start + j]
                a[start + j] = u + t
                a[start + j + half] = u - t
            start += size
        size *= 2
    if inverse:
        for i in range(k):
            a[i] = a[i] / k


def fft_rows(a, bint inverse=False):
    cdef double complex[:, ::1] out = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t rows = out.shape[0], k = out.shape[1]
    cdef Py_ssize_t r, i, b, bits = 0, x
    cdef double ang
    cdef double complex[::1] tw = np.empty(max(k // 2, 1), dtype=np.complex128)
    cdef Py_ssize_t[::1] rev = np.empty(k, dtype=np.intp)
    while (1 << bits) < k:
        bits += 1
    for i in range(k):
        x = 0
        for b in range(bits):
            x |= ((i >> b) & 1) << (bits - 1 - b)
        rev[i] = x
    for i in range(k // 2):
        ang = -2.0 * M_PI * i / k
        tw[i] = cos(ang) + 1j * sin(ang)
    with nogil:
        for r in range(rows):
            _fft_inplace(out[r], tw, rev, inverse)
    return np.asarray(out)


def spectral_matvec(S, X):
    cdef const double complex[:, :, ::1] s = np.ascontiguousarray(S, dtype=np.complex128)
    cdef const double complex[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.complex128)
    cdef Py_ssize_t p = s.shape[0], q = s.shape[1], nb = s.shape[2], B = x.shape[0]
    out = np.zeros((B, p, nb), dtype=np.complex128)
    cdef double complex[:, :, ::1] y = out
    cdef Py_ssize_t b, i, j, f
    with nogil:
        for b in range(B):
            for i in range(p):
                for j in range(q):
                    for f in range(nb):
                        y[b, i, f] = y[b, i, f] + s[i, j, f] * x[b, j, f]
    return out


def spectral_matvec_t(S, D):
    cdef const double complex[:, :, ::1] s = np.ascontiguousarray(S, dtype=np.complex128)
    cdef const double complex[:, :, ::1] d = np.ascontiguousarray(D, dtype=np.complex128)
    cdef Py_ssize_t p = s.shape[0], q = s.shape[1], nb = s.shape[2], B = d.shape[0]
    out = np.zeros((B, q, nb), dtype=np.complex128)
    cdef double complex[:, :, ::1] z = out
    cdef Py_ssize_t b, i, j, f
    with nogil:
        for b in range(B):
            for i in range(p):
                for j in range(q):
                    for f in range(nb):
                        z[b, j, f] = z[b, j, f] + s[i, j, f].conjugate() * d[b, i, f]
    return out


def spectral_outer(D, X):
    cdef const double complex[:, :, ::1] d = np.ascontiguousarray(D, dtype=np.complex128)
    cdef const double complex[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.complex128)
    cdef Py_ssize_t B = d.shape[0], p = d.shape[1], nb = d.shape[2], q = x.shape[1]
    out = np.zeros((p, q, nb), dtype=np.complex128)
    cdef double complex[:, :, ::1] g = out
    cdef Py_ssize_t b, i, j, f
    with nogil:
        for b in range(B):
            for i in range(p):
                for j in range(q):
                    for f in range(nb):
                        g[i, j, f] = g[i, j, f] + d[b, i, f] * x[b, j, f].conjugate()
    return out


def block_matvec(S, segs):
    """Fused FFT -> spectral accumulate -> IFFT.

    ``S`` is ``(p, q, nb)`` half spectra, ``segs`` real ``(B, q, k)``;
    returns real ``(B, p, k)``.
    """
    cdef const double complex[:, :, ::1] s = np.ascontiguousarray(S, dtype=np.complex128)
    cdef const double[:, :, ::1] x = np.ascontiguousarray(segs, dtype=np.float64)
    cdef Py_ssize_t p = s.shape[0], q = s.shape[1], nb = s.shape[2]
    cdef Py_ssize_t B = x.shape[0], k = x.shape[2]
    out = np.empty((B, p, k), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef double complex[:, ::1] X = np.empty((q, nb), dtype=np.complex128)
    cdef double complex[::1] buf = np.empty(k, dtype=np.complex128)
    cdef double complex[::1] acc = np.empty(nb, dtype=np.complex128)
    cdef double complex[::1] tw = np.empty(max(k // 2, 1), dtype=np.complex128)
    cdef Py_ssize_t[::1] rev = np.empty(k, dtype=np.intp)
    cdef Py_ssize_t b, i, j, f, t, bits = 0, v
    cdef double ang
    while (1 << bits) < k:
        bits += 1
    for t in range(k):
        v = 0
        for f in range(bits):
            v |= ((t >> f) & 1) << (bits - 1 - f)
        rev[t] = v
    for t in range(k // 2):
        ang = -2.0 * M_PI * t / k
        tw[t] = cos(ang) + 1j * sin(ang)
    with nogil:
        for b in range(B):
            for j in range(q):
                for t in range(k):
                    buf[t] = x[b, j, t]
                _fft_inplace(buf, tw, rev, False)
                for f in range(nb):
                    X[j, f] = buf[f]
            for i in range(p):
                for f in range(nb):
                    acc[f] = 0
                for j in range(q):
                    for f in range(nb):
                        acc[f] = acc[f] + s[i, j, f] * X[j, f]
                for f in range(nb):
                    buf[f] = acc[f]
                for f in range(nb, k):
                    buf[f] = acc[k - f].conjugate()
                buf[0] = buf[0].real
                if k >= 2:
                    buf[k // 2] = buf[k // 2].real
                _fft_inplace(buf, tw, rev, True)
                for t in range(k):
                    y[b, i, t] = buf[t].real
    return out
