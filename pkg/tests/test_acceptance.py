"""Exit criteria.  Each test records one PASS/FAIL line, printed in the pytest summary.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from circrnn import _backend, modelfile
from circrnn.accounting import ModelArchitecture, compression_stats, flop_count
from circrnn.circulant import BlockCirculantMatrix, DenseMatrix, block_matvec
from circrnn.cli import main as cli_main
from circrnn.lstm import LstmConfig, LstmModel, architecture, ese_config
from circrnn.quant import RAW_MAX, RAW_MIN, FixedPointFormat, dequantize, divergence, quantize, quantize_model, quantized_forward
from circrnn.spectral import circular_convolve
from circrnn.training import (
    TrainConfig,
    apply_update,
    block_matvec_backward,
    circ_matvec_backward,
    loss_and_gradients,
    stored_arrays,
    train,
)
from oracles import fold_dense_gradient

RESULTS = []


def record(tag, ok, detail):
    RESULTS.append((tag, bool(ok), detail))
    assert ok, f"{tag}: {detail}"


# 1 -------------------------------------------------------------------------
@pytest.mark.parametrize("backend_name", _backend.available())
def test_ac1_fft_path_equivalence(backend_name):
    r = np.random.default_rng(1)
    cases, worst = 1200, 0.0
    with _backend.use_backend(backend_name):
        for _ in range(cases):
            k = int(r.choice([2, 4, 8, 16, 32]))
            m, n = int(r.integers(1, 129)), int(r.integers(1, 129))
            W = BlockCirculantMatrix.random(m, n, k, r)
            x = r.standard_normal(n)
            worst = max(worst, float(np.max(np.abs(block_matvec(W, x) - W.to_dense() @ x))))
    record(f"AC1 FFT-path equivalence [{backend_name}]", worst <= 1e-9,
           f"{cases} cases, max inf-norm error {worst:.2e} (tol 1e-9)")


# 2 -------------------------------------------------------------------------
def _fd(f, v, h=1e-6):
    g = np.zeros_like(v)
    for idx in np.ndindex(v.shape):
        up, dn = v.copy(), v.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (f(up) - f(dn)) / (2 * h)
    return g


def _rel_err(analytic, numeric, rtol=1e-4, atol=1e-6):
    # relative error with an absolute floor: <= rtol iff |a - n| <= rtol |n| + atol
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + atol / rtol)))


def test_ac2_gradient_correctness():
    r = np.random.default_rng(2)
    worst = {}
    # circulant block, L = 0.5 ||w (*) x||^2
    w, x = r.standard_normal(8), r.standard_normal(8)
    dw, dx = circ_matvec_backward(w, x, circular_convolve(w, x))
    worst["circ_matvec_backward"] = max(
        _rel_err(dw, _fd(lambda v: 0.5 * np.sum(circular_convolve(v, x) ** 2), w)),
        _rel_err(dx, _fd(lambda v: 0.5 * np.sum(circular_convolve(w, v) ** 2), x)),
    )
    # block-circulant matrix with padding
    W = BlockCirculantMatrix.random(12, 10, 4, r)
    x = r.standard_normal(10)
    dW, dx = block_matvec_backward(W, x, W.matvec(x))
    num_W = _fd(lambda v: 0.5 * np.sum(BlockCirculantMatrix(v, 12, 10).matvec(x) ** 2), W.vectors.copy())
    worst["block_matvec_backward"] = max(_rel_err(dW, num_W), _rel_err(dx, _fd(lambda v: 0.5 * np.sum(W.matvec(v) ** 2), x)))
    assert np.max(np.abs(dW - fold_dense_gradient(np.outer(W.matvec(x), x), W.p, W.q, 4))) <= 1e-8
    # full single-step LSTMP (circulant gates + projection, peepholes, readout)
    cfg = LstmConfig(2, 8, 4, block_size_input=4, block_size_recurrent=4, compress_projection=True)
    tc = TrainConfig(seq_len=2, batch_size=2)
    model = LstmModel.init(cfg, r, head_size=1)
    xs, ys = tc.sample(r, 2)
    xs = xs[:1]
    _, grads = loss_and_gradients(model, tc, xs, ys)
    values = stored_arrays(model)
    lstm_worst = 0.0
    for name, v in values.items():
        def f(vv, name=name):
            nv = dict(values)
            nv[name] = vv
            return loss_and_gradients(apply_update(model, nv), tc, xs, ys, need_grad=False)[0]

        lstm_worst = max(lstm_worst, _rel_err(grads[name], _fd(f, np.array(v, dtype=float))))
    worst["lstm single step"] = lstm_worst
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("AC2 gradient correctness", max(worst.values()) <= 1e-4, f"max rel error: {detail} (tol 1e-4)")


# 3 -------------------------------------------------------------------------
@pytest.mark.parametrize("k,ratio,params", [(8, 7.9, 0.41e6), (16, 15.9, 0.20e6)])
def test_ac3_compression_reproduction(k, ratio, params, tmp_path, capsys):
    model = LstmModel.init(ese_config(k), np.random.default_rng(3))
    path = tmp_path / f"ese_k{k}.bcm"
    modelfile.save(model, path)
    assert cli_main(["report", str(path), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    got_ratio, got_params = rep["matrix_ratio"], rep["matrix_stored"]
    ok = abs(got_ratio - ratio) <= 0.3 and abs(got_params - params) <= 0.05 * params
    record(f"AC3 compression k={k}", ok,
           f"ratio {got_ratio:.2f} (target {ratio} +/- 0.3), stored {got_params / 1e6:.4f}M (target {params / 1e6:.2f}M +/- 5%); "
           f"incl. biases/peepholes ratio {rep['ratio']:.2f}")


@pytest.mark.parametrize("k", [2, 4, 8, 16])
def test_ac3_single_matrix_ratio_is_k(k, tmp_path, capsys):
    cfg = LstmConfig(256, 256, 256, block_size_input=k)
    path = tmp_path / "single.bcm"
    modelfile.save(LstmModel.init(cfg, np.random.default_rng(0)), path)
    assert cli_main(["report", str(path), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    t = next(t for t in rep["tensors"] if t["name"] == "layer0.W_ix")
    lib = compression_stats(ModelArchitecture.single_matrix(1024, 1024, k)).ratio
    record(f"AC3 single-matrix ratio k={k}", t["dense"] / t["stored"] == k and lib == k,
           f"report {t['dense'] / t['stored']}, library {lib}")


# 4 -------------------------------------------------------------------------
def test_ac4_compute_reduction():
    counts = [flop_count(ModelArchitecture.single_matrix(1024, 1024, k), "fft").real_multiplies for k in (1, 4, 8, 16)]
    strictly = all(a > b for a, b in zip(counts, counts[1:]))
    # soft: wall time logged, not asserted
    r = np.random.default_rng(4)
    W = BlockCirculantMatrix.random(1024, 1024, 16, r)
    S, D, x = W.spectral, W.to_dense(), r.standard_normal(1024)

    def med(fn, reps=50):
        fn()
        ts = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            ts.append(time.perf_counter() - t0)
        return float(np.median(ts))

    t_fft, t_dense = med(lambda: block_matvec(S, x)), med(lambda: D @ x)
    record("AC4 compute reduction", strictly,
           f"multiplies k=1,4,8,16: {counts}; soft wall time n=1024 k=16 [{_backend.name()}] "
           f"fft {t_fft * 1e6:.0f}us vs dense {t_dense * 1e6:.0f}us ({'faster' if t_fft < t_dense else 'slower'}, not asserted)")


# 5 -------------------------------------------------------------------------
def test_ac5_trainability_without_retraining():
    cfg = LstmConfig(2, 32, 16, block_size_input=4, block_size_recurrent=4)
    tc = TrainConfig(task="adding_problem", steps=2000, learning_rate=0.05, batch_size=32, seed=0, seq_len=10)
    t0 = time.perf_counter()
    rep = train(tc, cfg)
    elapsed = time.perf_counter() - t0
    structural = all(
        isinstance(getattr(p, n), BlockCirculantMatrix) and getattr(p, n).k == 4
        for p in rep.model.layers
        for n in ("W_ix", "W_fx", "W_ox", "W_gx", "W_ir", "W_fr", "W_or", "W_gr")
    ) and all(isinstance(p.W_proj, DenseMatrix) for p in rep.model.layers)
    count_ok = rep.updated_parameters == compression_stats(architecture(cfg, 1)).stored_total
    ratio = rep.final_loss / rep.initial_loss
    record("AC5 trainability", ratio <= 0.1 and structural and count_ok and elapsed < 300,
           f"loss {rep.initial_loss:.4f} -> {rep.final_loss:.5f} (ratio {ratio:.4f}, need <= 0.1); "
           f"circulant preserved={structural}; updated params {rep.updated_parameters}; {elapsed:.0f}s")


# 6 -------------------------------------------------------------------------
def test_ac6_quantization():
    raw = np.arange(RAW_MIN, RAW_MAX + 1)
    offsets = np.linspace(-0.5, 0.5, 11)
    worst_excess = -np.inf
    for f in range(12):
        fmt = FixedPointFormat(f)
        assert np.array_equal(quantize(dequantize(raw, fmt), fmt), raw)
        v = ((raw[:, None] + offsets) / fmt.scale).ravel()
        v = v[(v >= fmt.min_value) & (v <= fmt.max_value)]
        err = np.abs(dequantize(quantize(v, fmt), fmt) - v)
        worst_excess = max(worst_excess, float(err.max() / 2.0 ** (-f - 1)))
    r = np.random.default_rng(6)
    cfg = LstmConfig(8, 16, 8, num_layers=2, block_size_input=4, block_size_recurrent=4)
    model = LstmModel.init(cfg, r)
    x = r.standard_normal((10, 8))
    gap = divergence(model.forward(x), quantized_forward(quantize_model(model), x))
    record("AC6 quantization", worst_excess <= 1.0 and gap["mean_abs"] <= 0.05,
           f"round-trip error / 2^-(f+1) max {worst_excess:.3f} over raw range x f=0..11; "
           f"10-step toy LSTM mean |quant-float| {gap['mean_abs']:.4f} (tol 0.05)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
