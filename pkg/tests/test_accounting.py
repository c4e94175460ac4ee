import pytest
from hypothesis import given
from hypothesis import strategies as st

from circrnn.accounting import ModelArchitecture, TensorSpec, compression_stats, flop_count, fft_multiplies
from circrnn.lstm import LstmConfig, architecture, ese_config


def test_single_matrix_ratio_equals_k():
    rep = compression_stats(ModelArchitecture.single_matrix(1024, 1024, 8))
    assert rep.stored_total == 1024 * 1024 // 8
    assert rep.ratio == 8.0


def test_single_matrix_k1_uncompressed():
    assert compression_stats(ModelArchitecture.single_matrix(1024, 1024, 1)).ratio == 1.0


@pytest.mark.parametrize("k", [2, 4, 8, 16, 32])
def test_fully_circulant_ratio_exactly_k(k):
    rep = compression_stats(ModelArchitecture.single_matrix(512, 256, k))
    assert rep.ratio == k and rep.matrix_ratio == k


@given(a=st.integers(1, 32), b=st.integers(1, 32), e=st.integers(0, 5))
def test_storage_law(a, b, e):
    k = 2**e
    m, n = a * k, b * k
    assert TensorSpec("W", (m, n), k).stored_count == m * n // k


def test_padding_counts_full_blocks():
    # 153 columns at k=8 need 20 block columns
    assert TensorSpec("W", (1024, 153), 8).stored_count == 128 * 20 * 8


def test_vectors_counted_in_totals_not_matrix_figures():
    cfg = LstmConfig(8, 8, 4, block_size_input=4, block_size_recurrent=4)
    rep = compression_stats(architecture(cfg))
    assert rep.stored_total - rep.matrix_stored == 7 * 8
    assert rep.dense_total - rep.matrix_dense == 7 * 8


def test_ese_layer_tensor_inventory():
    arch = architecture(ese_config(8))
    rep = compression_stats(arch)
    # 4*1024*153 + 4*1024*512 + 512*1024
    assert rep.matrix_dense == 3_248_128
    # 4*128*20*8 + 4*128*64*8 + 64*128*8
    assert rep.matrix_stored == 409_600


def test_ese_layer_k16():
    rep = compression_stats(architecture(ese_config(16)))
    assert rep.matrix_stored == 204_800


def test_dense_flops():
    assert flop_count(ModelArchitecture.single_matrix(1024, 1024, 1), "dense").real_multiplies == 1_048_576


def test_k1_fft_path_is_dense():
    arch = ModelArchitecture.single_matrix(1024, 1024, 1)
    assert flop_count(arch, "fft").real_multiplies == flop_count(arch, "dense").real_multiplies


def test_fft_multiplies_per_transform():
    assert [fft_multiplies(k) for k in (1, 2, 4, 8, 16)] == [0, 4, 16, 48, 128]


# hand-evaluated: (p + q) * fft_multiplies(k) + p*q*(k/2+1)*4 with p = q = 1024/k
@pytest.mark.parametrize(
    "k,expected",
    [(4, 512 * 16 + 65536 * 3 * 4), (8, 256 * 48 + 16384 * 5 * 4), (16, 128 * 128 + 4096 * 9 * 4)],
)
def test_fft_flops_closed_form(k, expected):
    oc = flop_count(ModelArchitecture.single_matrix(1024, 1024, k), "fft")
    assert oc.real_multiplies == expected
    assert oc.ffts == 2 * 1024 // k


def test_fft_flops_k16_below_dense():
    arch = ModelArchitecture.single_matrix(1024, 1024, 16)
    assert flop_count(arch, "fft").real_multiplies == 163_840 < 1_048_576


def test_full_bin_count_option():
    arch = ModelArchitecture.single_matrix(1024, 1024, 16)
    assert flop_count(arch, "fft", hermitian=False).real_multiplies == 128 * 128 + 4096 * 16 * 4


@pytest.mark.parametrize("a", [2, 4, 8])
def test_monotone_compute(a):
    def count(k):
        return flop_count(ModelArchitecture.single_matrix(1024, 1024, k), "fft").real_multiplies

    assert count(2 * a) < count(a)


def test_bad_path():
    with pytest.raises(ValueError):
        flop_count(ModelArchitecture.single_matrix(4, 4, 2), "gpu")
