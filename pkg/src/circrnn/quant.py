"""12-bit signed fixed-point formats and a quantized LSTMP inference path.

A format with ``f`` fraction bits stores ``round_half_even(v * 2**f)``
saturated to ``[-2048, 2047]``; it represents
``[-2**(11-f), 2**(11-f) - 2**-f]`` at resolution ``2**-f``.

The quantized forward pass stores every weight tensor as 12-bit integers
(one format per tensor) and re-quantizes at tensor boundaries: after each
matvec, each pre-activation sum and each nonlinearity.  Arithmetic between
boundaries is float64 and nonlinearities are evaluated exactly before
being quantized.
"""

from dataclasses import dataclass

import numpy as np

from .circulant import BlockCirculantMatrix, DenseMatrix
from .errors import QuantizationError, ShapeError
from .lstm import LstmModel, LstmParams, LstmState, sigmoid

TOTAL_BITS = 12
RAW_MIN = -(1 << (TOTAL_BITS - 1))
RAW_MAX = (1 << (TOTAL_BITS - 1)) - 1


@dataclass(frozen=True)
class FixedPointFormat:
    frac_bits: int
    total_bits: int = TOTAL_BITS

    def __post_init__(self):
        if self.total_bits != TOTAL_BITS:
            raise QuantizationError(f"only {TOTAL_BITS}-bit formats are supported")
        if not 0 <= self.frac_bits <= TOTAL_BITS - 1:
            raise QuantizationError(f"frac_bits must be in [0, {TOTAL_BITS - 1}], got {self.frac_bits}")

    @property
    def scale(self):
        return float(2**self.frac_bits)

    @property
    def resolution(self):
        return 2.0**-self.frac_bits

    @property
    def min_value(self):
        return RAW_MIN / self.scale

    @property
    def max_value(self):
        return RAW_MAX / self.scale

    def __str__(self):
        return f"Q{TOTAL_BITS - 1 - self.frac_bits}.{self.frac_bits}"


def quantize(v, fmt):
    """Round half to even onto the ``2**-f`` grid, then saturate to 12 bits.

    Scalars give a Python ``int``; arrays give ``int16`` arrays.
    """
    arr = np.asarray(v, dtype=np.float64)
    if np.isnan(arr).any():
        raise QuantizationError("cannot quantize NaN")
    raw = np.clip(np.rint(arr * fmt.scale), RAW_MIN, RAW_MAX).astype(np.int16)
    return int(raw) if raw.ndim == 0 else raw


def dequantize(q, fmt):
    arr = np.asarray(q)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise QuantizationError("raw values must be integers")
    if arr.size and (arr.min() < RAW_MIN or arr.max() > RAW_MAX):
        raise QuantizationError(f"raw value outside [{RAW_MIN}, {RAW_MAX}]")
    out = arr.astype(np.float64) / fmt.scale
    return float(out) if out.ndim == 0 else out


def choose_format(values):
    """Widest fraction that holds every value without saturating (all-zero: f = 11)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise QuantizationError("cannot choose a format for an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise QuantizationError("values must be finite")
    lo, hi = float(arr.min()), float(arr.max())
    for f in range(TOTAL_BITS - 1, -1, -1):
        s = 2.0**f
        if np.rint(lo * s) >= RAW_MIN and np.rint(hi * s) <= RAW_MAX:
            return FixedPointFormat(f)
    return FixedPointFormat(0)


def fake_quantize(v, fmt):
    """``dequantize(quantize(v))`` in one step."""
    return dequantize(quantize(v, fmt), fmt)


@dataclass(frozen=True)
class QuantizedTensor:
    """12-bit integers for one tensor's stored values.

    ``raw`` has the stored layout (``(p, q, k)`` defining vectors for
    circulant tensors, ``(m, n)`` for dense, ``(n,)`` for vectors);
    ``shape`` is the logical shape.
    """

    fmt: FixedPointFormat
    raw: np.ndarray
    shape: tuple
    block_size: int = 1

    def __post_init__(self):
        raw = np.asarray(self.raw)
        if raw.size and (raw.min() < RAW_MIN or raw.max() > RAW_MAX):
            raise QuantizationError(f"raw value outside [{RAW_MIN}, {RAW_MAX}]")
        object.__setattr__(self, "raw", raw.astype(np.int16))

    @property
    def kind(self):
        if len(self.shape) == 1:
            return "vector"
        return "circulant" if self.block_size > 1 else "dense"

    def values(self):
        return dequantize(self.raw, self.fmt)

    def to_weight(self):
        """Float tensor holding exactly the representable values."""
        v = self.values()
        if self.kind == "vector":
            return v
        if self.kind == "dense":
            return DenseMatrix(v)
        return BlockCirculantMatrix(v, *self.shape)


def quantize_tensor(t, fmt=None):
    if isinstance(t, BlockCirculantMatrix):
        stored, shape, k = t.vectors, t.shape, t.k
    elif isinstance(t, DenseMatrix):
        stored, shape, k = t.values, t.shape, 1
    else:
        stored = np.asarray(t, dtype=np.float64)
        shape, k = stored.shape, 1
    fmt = choose_format(stored) if fmt is None else fmt
    return QuantizedTensor(fmt, quantize(stored, fmt), tuple(shape), k)


ACT_FORMAT = FixedPointFormat(8)  # Q3.8 for matvec outputs, sums and cell state
GATE_FORMAT = FixedPointFormat(11)  # Q0.11 for sigmoid / tanh outputs


@dataclass
class QuantizedModel:
    """Every tensor of an :class:`LstmModel` as 12-bit integers, plus activation formats."""

    config: object
    layers: list  # one {name: QuantizedTensor} dict per layer
    head: QuantizedTensor = None
    head_bias: QuantizedTensor = None
    act_fmt: FixedPointFormat = ACT_FORMAT
    gate_fmt: FixedPointFormat = GATE_FORMAT

    def dequantized(self):
        """Float :class:`LstmModel` carrying exactly the quantized weights."""
        layers = [LstmParams(**{n: qt.to_weight() for n, qt in d.items()}) for d in self.layers]
        head = self.head.to_weight() if self.head is not None else None
        hb = self.head_bias.to_weight() if self.head_bias is not None else None
        return LstmModel(self.config, layers, head, hb)


def quantize_model(model, weight_frac_bits=None, act_fmt=ACT_FORMAT, gate_fmt=GATE_FORMAT):
    """Quantize all tensors; per-tensor formats unless ``weight_frac_bits`` fixes a global one."""
    fmt = None if weight_frac_bits is None else FixedPointFormat(weight_frac_bits)
    layers = [{n: quantize_tensor(t, fmt) for n, t in p.tensors().items()} for p in model.layers]
    head = hb = None
    if model.head is not None:
        head = quantize_tensor(model.head, fmt)
        hb = quantize_tensor(model.head_bias, fmt)
    return QuantizedModel(model.config, layers, head, hb, act_fmt, gate_fmt)


def _quantized_step(p, x, state, act, gate):
    q = lambda v: fake_quantize(v, act)  # noqa: E731
    qg = lambda v: fake_quantize(v, gate)  # noqa: E731
    c, r = state.c, state.r

    def pre(name_x, name_r, bias):
        return q(q(getattr(p, name_x).matvec(x)) + q(getattr(p, name_r).matvec(r)) + bias)

    z_i = pre("W_ix", "W_ir", p.b_i)
    z_f = pre("W_fx", "W_fr", p.b_f)
    z_g = pre("W_gx", "W_gr", p.b_g)
    z_o = pre("W_ox", "W_or", p.b_o)
    if p.peephole:
        z_i = q(z_i + q(p.p_i * c))
        z_f = q(z_f + q(p.p_f * c))
    i = qg(sigmoid(z_i))
    f = qg(sigmoid(z_f))
    g = qg(np.tanh(z_g))
    c_new = q(f * c + i * g)
    if p.peephole:
        z_o = q(z_o + q(p.p_o * c_new))
    o = qg(sigmoid(z_o))
    m = q(o * qg(np.tanh(c_new)))
    return LstmState(c_new, q(p.W_proj.matvec(m)))


def quantized_forward(qmodel, x_seq):
    """Fixed-point emulation of ``lstm_forward``; returns top-layer outputs ``(T, [B,] P)``.

    Circulant matvecs run the FFT path on the dequantized defining vectors.
    """
    fm = qmodel.dequantized()
    x_seq = fake_quantize(np.asarray(x_seq, dtype=np.float64), qmodel.act_fmt)
    if x_seq.ndim < 2 or x_seq.shape[0] == 0:
        raise ShapeError("input sequence must be non-empty with shape (T, n) or (T, B, n)", tensor="x_seq")
    inputs = list(x_seq)
    for params in fm.layers:
        state = LstmState.zeros(params, x_seq.shape[1:-1])
        outs = []
        for x_t in inputs:
            state = _quantized_step(params, x_t, state, qmodel.act_fmt, qmodel.gate_fmt)
            outs.append(state.r)
        inputs = outs
    return np.stack(inputs)


def divergence(float_out, quant_out):
    """Summary of ``|quant - float|`` over all output entries."""
    gap = np.abs(np.asarray(quant_out) - np.asarray(float_out))
    return {"mean_abs": float(gap.mean()), "max_abs": float(gap.max()), "count": int(gap.size)}
