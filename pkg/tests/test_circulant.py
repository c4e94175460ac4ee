import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circrnn.circulant import (
    BlockCirculantMatrix,
    CirculantBlock,
    SpectralWeights,
    block_matvec,
    block_to_dense,
    make_weight,
    matvec_direct,
    matvec_fft,
    precompute_spectral,
)
from circrnn.errors import LengthError, ShapeError
from oracles import dense_from_vectors, naive_matvec


def test_block_to_dense_2x2_symmetric():
    np.testing.assert_array_equal(block_to_dense(CirculantBlock([2.0, 5.0])), [[2, 5], [5, 2]])


def test_block_to_dense_delta_is_identity():
    np.testing.assert_array_equal(block_to_dense(CirculantBlock([1, 0, 0, 0, 0, 0, 0, 0])), np.eye(8))


def test_block_to_dense_columns_rotate():
    C = block_to_dense(CirculantBlock([1, 2, 3, 4]))
    np.testing.assert_array_equal(C[:, 0], [1, 2, 3, 4])
    np.testing.assert_array_equal(C[:, 1], [4, 1, 2, 3])


def test_block_rejects_bad_vectors():
    with pytest.raises(LengthError):
        CirculantBlock([1, 2, 3])
    with pytest.raises(ValueError):
        CirculantBlock([1, np.nan])


def test_matvec_direct_identity_and_zero(rng):
    x = rng.standard_normal(4)
    np.testing.assert_array_equal(matvec_direct(CirculantBlock([1, 0, 0, 0]), x), x)
    np.testing.assert_array_equal(matvec_direct(CirculantBlock(np.zeros(4)), x), np.zeros(4))


def test_matvec_direct_equals_naive_dense(rng):
    b = CirculantBlock(rng.standard_normal(8))
    x = rng.standard_normal(8)
    # same ascending-column accumulation, so exact
    np.testing.assert_array_equal(matvec_direct(b, x), naive_matvec(block_to_dense(b), x))


def test_matvec_fft_identity():
    np.testing.assert_allclose(matvec_fft(CirculantBlock([1, 0, 0, 0]), [5, 6, 7, 8]), [5, 6, 7, 8], atol=1e-14)


def test_matvec_fft_shift():
    np.testing.assert_allclose(matvec_fft(CirculantBlock([0, 1, 0, 0]), [1, 2, 3, 4]), [4, 1, 2, 3], atol=1e-14)


def test_matvec_fft_matches_direct(backend, rng):
    b = CirculantBlock(rng.standard_normal(16))
    x = rng.standard_normal(16)
    assert np.max(np.abs(matvec_fft(b, x) - matvec_direct(b, x))) <= 1e-10


def test_matvec_length_mismatch():
    with pytest.raises(ShapeError):
        matvec_fft(CirculantBlock([1, 0, 0, 0]), [1, 2])
    with pytest.raises(ShapeError):
        matvec_direct(CirculantBlock([1, 0, 0, 0]), [1, 2])


def test_block_matvec_single_block_equals_matvec_fft(backend, rng):
    w, x = rng.standard_normal(8), rng.standard_normal(8)
    W = BlockCirculantMatrix(w[None, None, :], 8, 8)
    np.testing.assert_allclose(block_matvec(W, x), matvec_fft(CirculantBlock(w), x), atol=1e-12)


def test_block_matvec_zero_matrix(backend, rng):
    W = BlockCirculantMatrix.zeros(10, 12, 4)
    np.testing.assert_array_equal(block_matvec(W, rng.standard_normal(12)), np.zeros(10))


def test_block_matvec_8x8_k4_matches_dense(backend, rng):
    W = BlockCirculantMatrix.random(8, 8, 4, rng)
    x = rng.standard_normal(8)
    dense = dense_from_vectors(W.vectors, 8, 8)
    assert np.max(np.abs(block_matvec(W, x) - naive_matvec(dense, x))) <= 1e-9


def test_to_dense_matches_entrywise_oracle(rng):
    W = BlockCirculantMatrix.random(13, 22, 4, rng)
    np.testing.assert_array_equal(W.to_dense(), dense_from_vectors(W.vectors, 13, 22))


def test_block_of_grid_matches_dense_submatrix(rng):
    W = BlockCirculantMatrix.random(8, 12, 4, rng)
    np.testing.assert_array_equal(block_to_dense(W.block(1, 2)), W.to_dense()[4:8, 8:12])


def test_padding_invisible(backend, rng):
    W = BlockCirculantMatrix.random(7, 5, 4, rng)
    x = rng.standard_normal(5)
    assert block_matvec(W, x).shape == (7,)
    np.testing.assert_allclose(block_matvec(W, x), W.to_dense() @ x, atol=1e-12)


def test_batched_inputs(backend, rng):
    W = BlockCirculantMatrix.random(12, 20, 4, rng)
    X = rng.standard_normal((3, 2, 20))
    np.testing.assert_allclose(block_matvec(W, X), X @ W.to_dense().T, atol=1e-12)


def test_dimension_mismatch(rng):
    W = BlockCirculantMatrix.random(8, 8, 4, rng)
    with pytest.raises(ShapeError):
        block_matvec(W, np.ones(9))


def test_grid_must_cover_shape():
    with pytest.raises(ShapeError):
        BlockCirculantMatrix(np.zeros((2, 2, 4)), 9, 8)


def test_from_blocks_requires_common_k():
    with pytest.raises(ShapeError):
        BlockCirculantMatrix.from_blocks([[CirculantBlock([1, 0]), CirculantBlock([1, 0, 0, 0])]])


def test_matrix_is_immutable(rng):
    W = BlockCirculantMatrix.random(8, 8, 4, rng)
    with pytest.raises(ValueError):
        W.vectors[0, 0, 0] = 1.0


def test_spectral_of_identity_blocks_is_all_ones():
    v = np.zeros((2, 3, 4))
    v[..., 0] = 1.0
    S = precompute_spectral(BlockCirculantMatrix(v, 8, 12))
    np.testing.assert_allclose(S.spectra, np.ones((2, 3, 4)), atol=1e-15)


def test_spectral_of_zero_matrix_is_zero():
    S = precompute_spectral(BlockCirculantMatrix.zeros(8, 8, 4))
    np.testing.assert_array_equal(S.spectra, np.zeros((2, 2, 4)))


def test_spectral_matvec_equals_source_matvec(backend, rng):
    W = BlockCirculantMatrix.random(24, 40, 8, rng)
    S = precompute_spectral(W)
    assert isinstance(S, SpectralWeights)
    x = rng.standard_normal(40)
    assert np.max(np.abs(block_matvec(S, x) - W.to_dense() @ x)) <= 1e-10


def test_k1_routes_to_dense(rng):
    W = BlockCirculantMatrix.random(5, 3, 1, rng)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(block_matvec(W, x), W.vectors[:, :, 0] @ x, atol=1e-15)
    assert make_weight(5, 3, 1, rng).block_size == 1


def test_accumulation_is_deterministic(backend, rng):
    W = BlockCirculantMatrix.random(64, 64, 8, rng)
    x = rng.standard_normal(64)
    first = block_matvec(W, x)
    for _ in range(3):
        np.testing.assert_array_equal(block_matvec(W, x), first)


def test_oracle_equivalence_1000_cases(backend):
    r = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        k = int(r.choice([2, 4, 8, 16]))
        m, n = int(r.integers(1, 129)), int(r.integers(1, 129))
        W = BlockCirculantMatrix.random(m, n, k, r)
        x = r.standard_normal(n)
        worst = max(worst, float(np.max(np.abs(block_matvec(W, x) - W.to_dense() @ x))))
    assert worst <= 1e-9


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    e=st.integers(1, 4),
    m=st.integers(1, 64),
    n=st.integers(1, 64),
    alpha=st.floats(-5, 5),
    beta=st.floats(-5, 5),
)
def test_linearity(seed, e, m, n, alpha, beta):
    r = np.random.default_rng(seed)
    W = BlockCirculantMatrix.random(m, n, 2**e, r)
    x, y = r.standard_normal(n), r.standard_normal(n)
    lhs = block_matvec(W, alpha * x + beta * y)
    rhs = alpha * block_matvec(W, x) + beta * block_matvec(W, y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9
