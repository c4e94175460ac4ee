"""Parameter and multiply accounting for dense vs. block-circulant models."""

from dataclasses import dataclass, field

from .spectral import check_length, half_bins


def _ceil_div(a, b):
    return -(-a // b)


@dataclass(frozen=True)
class TensorSpec:
    """One parameter tensor.  ``shape`` is ``(m, n)`` for matrices, ``(n,)`` for vectors."""

    name: str
    shape: tuple
    block_size: int = 1

    def __post_init__(self):
        if len(self.shape) not in (1, 2) or any(d < 1 for d in self.shape):
            raise ValueError(f"{self.name}: invalid shape {self.shape}")
        check_length(self.block_size)
        if len(self.shape) == 1 and self.block_size != 1:
            raise ValueError(f"{self.name}: vectors cannot be circulant")

    @property
    def is_matrix(self):
        return len(self.shape) == 2

    @property
    def grid(self):
        m, n = self.shape
        return _ceil_div(m, self.block_size), _ceil_div(n, self.block_size)

    @property
    def dense_count(self):
        count = 1
        for d in self.shape:
            count *= d
        return count

    @property
    def stored_count(self):
        if self.block_size == 1:
            return self.dense_count
        p, q = self.grid
        return p * q * self.block_size


@dataclass(frozen=True)
class ModelArchitecture:
    tensors: tuple

    @classmethod
    def single_matrix(cls, m, n, k):
        return cls((TensorSpec("W", (m, n), k),))

    def matrices(self):
        return [t for t in self.tensors if t.is_matrix]


@dataclass(frozen=True)
class TensorCount:
    name: str
    shape: tuple
    block_size: int
    dense: int
    stored: int

    @property
    def ratio(self):
        return self.dense / self.stored


@dataclass(frozen=True)
class CompressionReport:
    """Stored vs. dense-equivalent parameter counts.

    ``stored_total``/``dense_total`` cover every tensor (biases and
    peepholes included).  ``matrix_stored``/``matrix_dense`` cover weight
    matrices only, which is how per-layer "matrix size" figures are quoted.
    """

    rows: tuple
    dense_total: int
    stored_total: int
    matrix_dense: int
    matrix_stored: int

    @property
    def ratio(self):
        return self.dense_total / self.stored_total

    @property
    def matrix_ratio(self):
        return self.matrix_dense / self.matrix_stored


def compression_stats(arch):
    rows = tuple(
        TensorCount(t.name, tuple(t.shape), t.block_size, t.dense_count, t.stored_count)
        for t in arch.tensors
    )
    mats = [r for r, t in zip(rows, arch.tensors) if t.is_matrix]
    return CompressionReport(
        rows=rows,
        dense_total=sum(r.dense for r in rows),
        stored_total=sum(r.stored for r in rows),
        matrix_dense=sum(r.dense for r in mats),
        matrix_stored=sum(r.stored for r in mats),
    )


REAL_MULS_PER_COMPLEX = 4


def fft_multiplies(k):
    """Real multiplies of one radix-2 FFT: (k/2) log2 k butterflies, 4 each."""
    check_length(k)
    return (k // 2) * (k.bit_length() - 1) * REAL_MULS_PER_COMPLEX


def _circulant_matvec_counts(m, n, k, hermitian):
    p, q = _ceil_div(m, k), _ceil_div(n, k)
    bins = half_bins(k) if hermitian else k
    ffts = q + p
    products = p * q * bins
    return ffts, products, ffts * fft_multiplies(k) + products * REAL_MULS_PER_COMPLEX


@dataclass(frozen=True)
class OperationCount:
    """Real multiplies for one matvec through every weight matrix of an architecture."""

    path: str
    real_multiplies: int
    ffts: int = 0
    spectral_products: int = 0
    per_tensor: dict = field(default_factory=dict)


def flop_count(arch, path, hermitian=True):
    """Closed-form multiply count for one matvec per weight matrix.

    ``dense``: ``m*n`` per matrix.  ``fft``: per circulant matrix, ``q``
    forward FFTs of the input segments, ``p`` inverse FFTs (block rows are
    accumulated in the spectral domain), and ``p*q`` spectral products.
    Operands are real so their spectra are conjugate-symmetric and only
    ``k//2 + 1`` bins per product are computed (``hermitian=False`` counts
    all ``k``).  Tensors with ``k == 1`` are costed as dense.  Element-wise
    work (peepholes, activations) is not counted.
    """
    if path not in ("dense", "fft"):
        raise ValueError(f"path must be 'dense' or 'fft', got {path!r}")
    total = ffts = products = 0
    per = {}
    for t in arch.matrices():
        m, n = t.shape
        if path == "dense" or t.block_size == 1:
            muls = m * n
        else:
            f, pr, muls = _circulant_matvec_counts(m, n, t.block_size, hermitian)
            ffts += f
            products += pr
        per[t.name] = muls
        total += muls
    return OperationCount(path, total, ffts, products, per)
