"""Block-circulant weight matrices and their FFT matvec.

Convention: a circulant block is generated by its FIRST COLUMN ``w``, i.e.
``C[r, c] = w[(r - c) mod k]``.  With that choice ``C @ x`` is exactly the
circular convolution ``IFFT(FFT(w) * FFT(x))``.  (The row-generated form is
the same family up to reversing ``w[1:]``; since ``w`` is learned nothing is
lost.)

A logical ``m x n`` matrix is a ``p x q`` grid of such blocks with
``p = ceil(m/k)``, ``q = ceil(n/k)``.  Rows/columns beyond ``m``/``n`` are
zero padding: inputs are zero-extended and outputs truncated, so the padding
is never observable.
"""

from functools import cached_property

import numpy as np

from . import _backend
from .errors import LengthError, ShapeError
from .spectral import check_length, circular_convolve, fft, half_bins


def _ceil_div(a, b):
    return -(-a // b)


class CirculantBlock:
    """One ``k x k`` circulant sub-matrix, stored as its defining vector."""

    __slots__ = ("w",)

    def __init__(self, w):
        w = np.array(w, dtype=np.float64)
        if w.ndim != 1:
            raise LengthError("defining vector must be 1-D")
        check_length(w.shape[0])
        if not np.all(np.isfinite(w)):
            raise ValueError("defining vector has non-finite entries")
        w.setflags(write=False)
        self.w = w

    @property
    def k(self):
        return self.w.shape[0]

    def __repr__(self):
        return f"CirculantBlock(k={self.k}, w={self.w.tolist()})"


def block_to_dense(b):
    """Expand a block to its ``k x k`` matrix: ``C[r, c] = w[(r - c) mod k]``."""
    k = b.k
    r = np.arange(k)[:, None]
    c = np.arange(k)[None, :]
    return b.w[(r - c) % k]


def _check_segment(b, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (b.k,):
        raise ShapeError(f"expected input of length {b.k}, got shape {x.shape}", tensor="x")
    return x


def matvec_direct(b, x):
    """Reference O(k^2) product, accumulating each row in ascending column order."""
    x = _check_segment(b, x)
    k, w = b.k, b.w
    out = np.empty(k)
    for r in range(k):
        acc = 0.0
        for c in range(k):
            acc += w[(r - c) % k] * x[c]
        out[r] = acc
    return out


def matvec_fft(b, x):
    """``IFFT(FFT(w) * FFT(x))`` for one block."""
    x = _check_segment(b, x)
    return circular_convolve(b.w, x)


class DenseMatrix:
    """Uncompressed weight tensor; block size 1."""

    block_size = 1

    def __init__(self, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"dense weight must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    @property
    def stored(self):
        return self.values

    @property
    def stored_count(self):
        return self.values.size

    def to_dense(self):
        return self.values

    def matvec(self, x):
        return np.asarray(x, dtype=np.float64) @ self.values.T

    def with_stored(self, values):
        return DenseMatrix(values)

    def __repr__(self):
        return f"DenseMatrix(shape={self.shape})"


class BlockCirculantMatrix:
    """Logical ``m x n`` matrix built from a ``p x q`` grid of ``k x k`` circulant blocks.

    ``vectors[i, j]`` is the defining vector of block ``(i, j)``.  Instances are
    immutable; training produces new instances via :meth:`with_stored`.
    """

    def __init__(self, vectors, m, n):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 3:
            raise ShapeError(f"vectors must have shape (p, q, k), got {vectors.shape}")
        p, q, k = vectors.shape
        check_length(k)
        if m < 1 or n < 1:
            raise ShapeError(f"logical shape must be positive, got ({m}, {n})")
        if p != _ceil_div(m, k) or q != _ceil_div(n, k):
            raise ShapeError(
                f"grid {p}x{q} at k={k} does not cover logical shape ({m}, {n}); "
                f"expected {_ceil_div(m, k)}x{_ceil_div(n, k)}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("defining vectors have non-finite entries")
        vectors.setflags(write=False)
        self.vectors = vectors
        self.m = int(m)
        self.n = int(n)

    @classmethod
    def from_blocks(cls, blocks, m=None, n=None):
        """Build from a nested ``p x q`` list of :class:`CirculantBlock`."""
        ks = {b.k for row in blocks for b in row}
        if len(ks) != 1:
            raise ShapeError(f"all blocks must share one block size, got {sorted(ks)}")
        if len({len(row) for row in blocks}) != 1:
            raise ShapeError("block grid rows have unequal lengths")
        (k,) = ks
        vectors = np.array([[b.w for b in row] for row in blocks])
        p, q = vectors.shape[:2]
        return cls(vectors, p * k if m is None else m, q * k if n is None else n)

    @classmethod
    def zeros(cls, m, n, k):
        return cls(np.zeros((_ceil_div(m, k), _ceil_div(n, k), k)), m, n)

    @classmethod
    def random(cls, m, n, k, rng, scale=1.0):
        """Defining vectors drawn uniformly from ``[-scale, scale)``."""
        shape = (_ceil_div(m, k), _ceil_div(n, k), k)
        return cls(rng.uniform(-scale, scale, size=shape), m, n)

    @property
    def k(self):
        return self.vectors.shape[2]

    block_size = k

    @property
    def p(self):
        return self.vectors.shape[0]

    @property
    def q(self):
        return self.vectors.shape[1]

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def stored(self):
        return self.vectors

    @property
    def stored_count(self):
        return self.vectors.size

    def block(self, i, j):
        return CirculantBlock(self.vectors[i, j])

    def to_dense(self):
        """Full ``m x n`` expansion (oracle / debugging only)."""
        k = self.k
        idx = (np.arange(k)[:, None] - np.arange(k)[None, :]) % k
        full = self.vectors[:, :, idx]  # (p, q, k, k)
        full = full.transpose(0, 2, 1, 3).reshape(self.p * k, self.q * k)
        return full[: self.m, : self.n].copy()

    @cached_property
    def spectral(self):
        return precompute_spectral(self)

    def matvec(self, x):
        return block_matvec(self, x)

    def with_stored(self, vectors):
        return BlockCirculantMatrix(vectors, self.m, self.n)

    def __repr__(self):
        return f"BlockCirculantMatrix(m={self.m}, n={self.n}, k={self.k}, p={self.p}, q={self.q})"


class SpectralWeights:
    """Per-block FFTs of the defining vectors, kept resident for inference.

    ``spectra`` holds full k-bin spectra; ``half`` is the non-redundant
    ``k//2 + 1`` bins used by the matvec kernels.
    """

    def __init__(self, spectra, m, n):
        spectra = np.array(spectra, dtype=np.complex128)
        spectra.setflags(write=False)
        self.spectra = spectra
        self.m = int(m)
        self.n = int(n)
        half = np.ascontiguousarray(spectra[:, :, : half_bins(self.k)])
        half.setflags(write=False)
        self.half = half

    @property
    def p(self):
        return self.spectra.shape[0]

    @property
    def q(self):
        return self.spectra.shape[1]

    @property
    def k(self):
        return self.spectra.shape[2]

    @property
    def shape(self):
        return (self.m, self.n)


def precompute_spectral(W):
    p, q, k = W.vectors.shape
    spectra = fft(W.vectors.reshape(p * q, k)).reshape(p, q, k)
    return SpectralWeights(spectra, W.m, W.n)


def split_segments(x, n, segments, k, name="x"):
    """Zero-extend the last axis of ``x`` from ``n`` to ``segments*k`` and split into blocks.

    Returns ``(batch_shape, array of shape (B, segments, k))``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != n:
        raise ShapeError(f"expected last dimension {n}, got shape {x.shape}", tensor=name)
    lead = x.shape[:-1]
    flat = x.reshape(-1, n)
    padded = np.zeros((flat.shape[0], segments * k))
    padded[:, :n] = flat
    return lead, padded.reshape(-1, segments, k)


def block_matvec(W, x):
    """``W @ x`` block row by block row, accumulating in the spectral domain.

    ``W`` is a :class:`BlockCirculantMatrix` or :class:`SpectralWeights`;
    ``x`` has shape ``(n,)`` or ``(..., n)``.  Each input segment is
    transformed once and reused for every block row; each block row is
    accumulated over ascending ``j`` and inverted once.
    """
    if isinstance(W, BlockCirculantMatrix):
        if W.k == 1:
            return np.asarray(x, dtype=np.float64) @ W.vectors[:, :, 0].T
        S = W.spectral
    elif isinstance(W, SpectralWeights):
        S = W
    else:
        raise TypeError(f"expected BlockCirculantMatrix or SpectralWeights, got {type(W).__name__}")
    k = S.k
    lead, segs = split_segments(x, S.n, S.q, k)
    if k == 1:
        y = segs[:, :, 0] @ S.half[:, :, 0].real.T
    else:
        y = _backend.kernels.block_matvec(S.half, segs).reshape(-1, S.p * k)
    return y[:, : S.m].reshape(lead + (S.m,))


def make_weight(m, n, k, rng=None, scale=None):
    """Weight object of logical shape ``(m, n)``: dense when ``k == 1``, circulant otherwise.

    Entries (or defining-vector entries) are uniform in ``[-s, s)`` with
    ``s = sqrt(3 / n)``, unit variance over the fan-in.  Each dense row of a
    circulant block reuses the same k values, so the expanded matrix has the
    same per-entry variance as a dense init.  ``rng=None`` gives zeros.
    """
    check_length(k)
    s = np.sqrt(3.0 / n) if scale is None else scale
    if k == 1:
        if rng is None:
            return DenseMatrix(np.zeros((m, n)))
        return DenseMatrix(rng.uniform(-s, s, size=(m, n)))
    if rng is None:
        return BlockCirculantMatrix.zeros(m, n, k)
    return BlockCirculantMatrix.random(m, n, k, rng, scale=s)


def as_dense(W):
    """Dense twin of any weight object."""
    return DenseMatrix(W.to_dense())
