"""LSTM with peephole connections and a recurrent projection (LSTMP).

One step, with ``r`` the projected recurrent state::

    i  = sigmoid(W_ix x + W_ir r + p_i * c + b_i)
    f  = sigmoid(W_fx x + W_fr r + p_f * c + b_f)
    g  = tanh(W_gx x + W_gr r + b_g)
    c' = f * c + i * g
    o  = sigmoid(W_ox x + W_or r + p_o * c' + b_o)
    m  = o * tanh(c')
    r' = W_proj m

``r'`` feeds both the recurrence and the next layer.  Each ``W`` is a
:class:`~circrnn.circulant.DenseMatrix` or a
:class:`~circrnn.circulant.BlockCirculantMatrix`; biases and peepholes are
always dense vectors.  All operations accept a single vector or a batch
``(B, n)`` of them.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .accounting import ModelArchitecture, TensorSpec
from .circulant import DenseMatrix, as_dense, make_weight
from .errors import ConfigError, ShapeError
from .spectral import is_power_of_two

GATES = ("i", "f", "o", "g")
PEEPHOLE_GATES = ("i", "f", "o")
INPUT_WEIGHTS = tuple(f"W_{g}x" for g in GATES)
RECURRENT_WEIGHTS = tuple(f"W_{g}r" for g in GATES)
MATRIX_NAMES = INPUT_WEIGHTS + RECURRENT_WEIGHTS + ("W_proj",)
BIAS_NAMES = tuple(f"b_{g}" for g in GATES)
PEEPHOLE_NAMES = tuple(f"p_{g}" for g in PEEPHOLE_GATES)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _per_layer(value, num_layers, key):
    if isinstance(value, int):
        values = (value,) * num_layers
    else:
        values = tuple(int(v) for v in value)
        if len(values) != num_layers:
            raise ConfigError(key, f"expected {num_layers} per-layer values, got {len(values)}")
    for v in values:
        if not is_power_of_two(v):
            raise ConfigError(key, f"block sizes must be 1 or a power of two, got {v}")
    return values


def parse_block_sizes(text):
    """Per-layer block sizes from the ``"8-16"`` notation; ``"-"`` means dense."""
    text = text.strip()
    if text in ("-", ""):
        return None
    try:
        return tuple(int(t) for t in text.split("-"))
    except ValueError:
        raise ConfigError("block_size", f"cannot parse {text!r}") from None


@dataclass(frozen=True)
class LstmConfig:
    """Shape and compression settings for a stack of LSTMP layers.

    Block sizes are a single int for every layer or one value per layer
    (``(8, 16)`` is the ``8-16`` configuration).  ``block_size_projection``
    defaults to the layer's recurrent block size and only applies when
    ``compress_projection`` is set.
    """

    input_size: int
    hidden_size: int
    projection_size: int
    num_layers: int = 1
    peephole: bool = True
    block_size_input: object = 1
    block_size_recurrent: object = 1
    compress_projection: bool = False
    block_size_projection: object = None

    def __post_init__(self):
        for key in ("input_size", "hidden_size", "projection_size", "num_layers"):
            v = getattr(self, key)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(key, f"must be an integer >= 1, got {v!r}")
        _per_layer(self.block_size_input, self.num_layers, "block_size_input")
        _per_layer(self.block_size_recurrent, self.num_layers, "block_size_recurrent")
        if self.block_size_projection is not None:
            _per_layer(self.block_size_projection, self.num_layers, "block_size_projection")

    def layer_input_size(self, layer):
        return self.input_size if layer == 0 else self.projection_size

    def layer_blocks(self, layer):
        """``(k_input, k_recurrent, k_projection)`` for one layer."""
        k_in = _per_layer(self.block_size_input, self.num_layers, "block_size_input")[layer]
        k_rec = _per_layer(self.block_size_recurrent, self.num_layers, "block_size_recurrent")[layer]
        if not self.compress_projection:
            k_proj = 1
        elif self.block_size_projection is None:
            k_proj = k_rec
        else:
            k_proj = _per_layer(self.block_size_projection, self.num_layers, "block_size_projection")[layer]
        return k_in, k_rec, k_proj

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f in fields(cls):
            if f.name in d:
                v = d[f.name]
                kw[f.name] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


def ese_config(block_size):
    """One LSTMP layer shaped like the ESE benchmark layer.

    153 input features, 1024 cells, 512-wide projection, peepholes; gates
    and projection all circulant at ``block_size``.
    """
    return LstmConfig(
        input_size=153,
        hidden_size=1024,
        projection_size=512,
        num_layers=1,
        peephole=True,
        block_size_input=block_size,
        block_size_recurrent=block_size,
        compress_projection=True,
    )


def architecture(config, head_size=None):
    """Tensor inventory of a model built from ``config`` (for accounting)."""
    tensors = []
    H, P = config.hidden_size, config.projection_size
    for l in range(config.num_layers):
        k_in, k_rec, k_proj = config.layer_blocks(l)
        n_in = config.layer_input_size(l)
        pre = f"layer{l}."
        tensors += [TensorSpec(pre + name, (H, n_in), k_in) for name in INPUT_WEIGHTS]
        tensors += [TensorSpec(pre + name, (H, P), k_rec) for name in RECURRENT_WEIGHTS]
        tensors.append(TensorSpec(pre + "W_proj", (P, H), k_proj))
        tensors += [TensorSpec(pre + name, (H,)) for name in BIAS_NAMES]
        if config.peephole:
            tensors += [TensorSpec(pre + name, (H,)) for name in PEEPHOLE_NAMES]
    if head_size is not None:
        tensors += [TensorSpec("head.W_out", (head_size, P)), TensorSpec("head.b_out", (head_size,))]
    return ModelArchitecture(tuple(tensors))


@dataclass(frozen=True)
class LstmParams:
    """All tensors of one LSTMP layer.  Peephole vectors are ``None`` when disabled."""

    W_ix: object
    W_fx: object
    W_ox: object
    W_gx: object
    W_ir: object
    W_fr: object
    W_or: object
    W_gr: object
    W_proj: object
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    p_i: np.ndarray = None
    p_f: np.ndarray = None
    p_o: np.ndarray = None

    @property
    def input_size(self):
        return self.W_ix.shape[1]

    @property
    def hidden_size(self):
        return self.W_ix.shape[0]

    @property
    def projection_size(self):
        return self.W_proj.shape[0]

    @property
    def peephole(self):
        return self.p_i is not None

    def names(self):
        names = MATRIX_NAMES + BIAS_NAMES
        return names + PEEPHOLE_NAMES if self.peephole else names

    def tensors(self):
        return {name: getattr(self, name) for name in self.names()}

    def replace(self, **changes):
        return replace(self, **changes)

    def validate(self):
        H, P, n = self.hidden_size, self.projection_size, self.input_size
        expected = {name: (H, n) for name in INPUT_WEIGHTS}
        expected.update({name: (H, P) for name in RECURRENT_WEIGHTS})
        expected["W_proj"] = (P, H)
        vec_names = BIAS_NAMES + (PEEPHOLE_NAMES if self.peephole else ())
        expected.update({name: (H,) for name in vec_names})
        for name, shape in expected.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise ShapeError(f"expected shape {shape}, got {got}", tensor=name)
        return self

    def densified(self):
        """Same layer with every circulant tensor expanded to dense."""
        return self.replace(**{name: as_dense(getattr(self, name)) for name in MATRIX_NAMES})


def init_params(config, layer, rng=None, forget_bias=0.0):
    """Fresh parameters for one layer; ``rng=None`` gives an all-zero layer."""
    k_in, k_rec, k_proj = config.layer_blocks(layer)
    H, P = config.hidden_size, config.projection_size
    n_in = config.layer_input_size(layer)
    kw = {name: make_weight(H, n_in, k_in, rng) for name in INPUT_WEIGHTS}
    kw.update({name: make_weight(H, P, k_rec, rng) for name in RECURRENT_WEIGHTS})
    kw["W_proj"] = make_weight(P, H, k_proj, rng)
    kw.update({name: np.zeros(H) for name in BIAS_NAMES})
    kw["b_f"] = np.full(H, float(forget_bias))
    if config.peephole:
        if rng is None:
            kw.update({name: np.zeros(H) for name in PEEPHOLE_NAMES})
        else:
            s = np.sqrt(3.0 / H)
            kw.update({name: rng.uniform(-s, s, size=H) for name in PEEPHOLE_NAMES})
    return LstmParams(**kw).validate()


@dataclass
class LstmState:
    c: np.ndarray
    r: np.ndarray

    @classmethod
    def zeros(cls, params, batch_shape=()):
        return cls(np.zeros(batch_shape + (params.hidden_size,)), np.zeros(batch_shape + (params.projection_size,)))


@dataclass
class StepCache:
    """Forward quantities one step of BPTT needs."""

    x: np.ndarray
    c_prev: np.ndarray
    r_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    m: np.ndarray


def _check(name, arr, size):
    if arr.shape[-1:] != (size,):
        raise ShapeError(f"expected last dimension {size}, got shape {arr.shape}", tensor=name)


def lstm_step(params, x_t, state):
    """Advance one layer by one timestep.  Returns ``(state', m_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    _check("x_t (input of W_ix)", x_t, params.input_size)
    _check("state.c", state.c, params.hidden_size)
    _check("state.r (input of W_ir)", state.r, params.projection_size)
    c, r = state.c, state.r

    z_i = params.W_ix.matvec(x_t) + params.W_ir.matvec(r) + params.b_i
    z_f = params.W_fx.matvec(x_t) + params.W_fr.matvec(r) + params.b_f
    z_g = params.W_gx.matvec(x_t) + params.W_gr.matvec(r) + params.b_g
    z_o = params.W_ox.matvec(x_t) + params.W_or.matvec(r) + params.b_o
    if params.peephole:
        z_i = z_i + params.p_i * c
        z_f = z_f + params.p_f * c
    i = sigmoid(z_i)
    f = sigmoid(z_f)
    g = np.tanh(z_g)
    c_new = f * c + i * g
    if params.peephole:
        z_o = z_o + params.p_o * c_new
    o = sigmoid(z_o)
    tanh_c = np.tanh(c_new)
    m = o * tanh_c
    r_new = params.W_proj.matvec(m)
    cache = StepCache(x_t, c, r, i, f, o, g, c_new, tanh_c, m)
    return LstmState(c_new, r_new), m, cache


def lstm_forward(layers, x_seq):
    """Run a layer stack over a sequence from zero initial state.

    ``x_seq`` has shape ``(T, n)`` or ``(T, B, n)``.  Returns the top
    layer's projected outputs ``(T, [B,] P)`` and ``caches[layer][t]``.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim < 2 or x_seq.shape[0] == 0:
        raise ShapeError("input sequence must be non-empty with shape (T, n) or (T, B, n)", tensor="x_seq")
    batch_shape = x_seq.shape[1:-1]
    inputs = list(x_seq)
    caches = []
    for params in layers:
        state = LstmState.zeros(params, batch_shape)
        outs, layer_caches = [], []
        for x_t in inputs:
            state, _, cache = lstm_step(params, x_t, state)
            outs.append(state.r)
            layer_caches.append(cache)
        inputs = outs
        caches.append(layer_caches)
    return np.stack(inputs), caches


@dataclass
class LstmModel:
    """Layer stack plus an optional dense readout ``y_t = W_out r_t + b_out``."""

    config: LstmConfig
    layers: list
    head: DenseMatrix = None
    head_bias: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config, rng=None, head_size=None, forget_bias=0.0):
        layers = [init_params(config, l, rng, forget_bias) for l in range(config.num_layers)]
        head = head_bias = None
        if head_size is not None:
            P = config.projection_size
            if rng is None:
                head = DenseMatrix(np.zeros((head_size, P)))
            else:
                s = np.sqrt(3.0 / P)
                head = DenseMatrix(rng.uniform(-s, s, size=(head_size, P)))
            head_bias = np.zeros(head_size)
        return cls(config, layers, head, head_bias)

    @property
    def head_size(self):
        return None if self.head is None else self.head.shape[0]

    def architecture(self):
        return architecture(self.config, self.head_size)

    def named_tensors(self):
        """Flat ``{"layer0.W_ix": obj, ..., "head.W_out": obj}`` mapping."""
        out = {}
        for l, params in enumerate(self.layers):
            for name, t in params.tensors().items():
                out[f"layer{l}.{name}"] = t
        if self.head is not None:
            out["head.W_out"] = self.head
            out["head.b_out"] = self.head_bias
        return out

    def forward(self, x_seq):
        outputs, _ = lstm_forward(self.layers, x_seq)
        return outputs

    def readout(self, outputs):
        if self.head is None:
            raise ShapeError("model has no readout head", tensor="head.W_out")
        return self.head.matvec(outputs) + self.head_bias

    def densified(self):
        return LstmModel(self.config, [p.densified() for p in self.layers], self.head, self.head_bias, dict(self.meta))
