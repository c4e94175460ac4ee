"""Wall-clock benchmark of dense vs. FFT block-circulant matvec."""

import platform
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from .accounting import ModelArchitecture, compression_stats, flop_count
from .circulant import BlockCirculantMatrix, block_matvec

FIELDS = ("path", "backend", "m", "n", "k", "reps", "seconds_per_matvec", "multiplies", "stored_params", "seed", "machine")


@dataclass(frozen=True)
class BenchRow:
    path: str
    backend: str
    m: int
    n: int
    k: int
    reps: int
    seconds_per_matvec: float
    multiplies: int
    stored_params: int
    seed: int
    machine: str


def machine_note():
    return f"{platform.machine()} {platform.python_implementation()} {platform.python_version()} numpy {np.__version__}"


def _median_time(fn, reps):
    fn()  # warm caches
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_case(n, k, reps, seed=0, backends=None):
    """Rows for one square ``n x n`` case: the dense path and the FFT path per backend.

    At ``k == 1`` the circulant path is the dense path.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    W = BlockCirculantMatrix.random(n, n, k, rng)
    dense = W.to_dense()
    arch = ModelArchitecture.single_matrix(n, n, k)
    stored = compression_stats(arch).stored_total
    note = machine_note()
    rows = [
        BenchRow("dense", "numpy", n, n, k, reps, _median_time(lambda: dense @ x, reps),
                 flop_count(arch, "dense").real_multiplies, n * n, seed, note)
    ]
    fft_muls = flop_count(arch, "fft").real_multiplies
    if k == 1:
        rows.append(BenchRow("fft", "numpy", n, n, k, reps, rows[0].seconds_per_matvec, fft_muls, stored, seed, note))
        return rows
    spectral = W.spectral
    for name in backends or _backend.available():
        with _backend.use_backend(name):
            t = _median_time(lambda: block_matvec(spectral, x), reps)
        rows.append(BenchRow("fft", name, n, n, k, reps, t, fft_muls, stored, seed, note))
    return rows


def run(sizes, blocks, reps, seed=0, backends=None):
    rows = []
    for n in sizes:
        for k in blocks:
            rows.extend(bench_case(n, k, reps, seed, backends))
    return rows


def as_dicts(rows):
    return [asdict(r) for r in rows]
