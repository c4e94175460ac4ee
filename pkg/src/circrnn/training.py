"""Gradients in circulant parameter space, BPTT through LSTMP, and SGD training.

For one block ``a = w (*) x`` (circular convolution), with upstream ``da``::

    dL/dw = correlate(da, x) = IFFT(FFT(da) * conj(FFT(x)))
    dL/dx = correlate(da, w) = IFFT(FFT(da) * conj(FFT(w)))

so every gradient stays a k-vector per block and costs O(k log k); the
``k x k`` block is never materialized.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .accounting import compression_stats
from .circulant import BlockCirculantMatrix, split_segments
from .errors import ConfigError, DivergenceError, ShapeError
from .lstm import GATES, LstmModel, lstm_forward
from .spectral import circular_correlate, inverse_real_spectrum, real_spectrum

TASKS = ("adding_problem", "sequence_copy")
OPTIMIZERS = ("sgd", "sgd_momentum")


def circ_matvec_backward(w, x, da):
    """Gradients of ``a = IFFT(FFT(w) * FFT(x))`` w.r.t. ``w`` and ``x``."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    da = np.asarray(da, dtype=np.float64)
    if not (w.shape == x.shape == da.shape):
        raise ShapeError(f"w, x, da must share one length, got {w.shape}, {x.shape}, {da.shape}")
    return circular_correlate(da, x), circular_correlate(da, w)


def block_matvec_backward(W, x, da, need_dx=True):
    """Backward of ``block_matvec``.

    ``x`` is ``(..., n)`` and ``da`` is ``(..., m)`` with matching leading
    dims; the defining-vector gradient ``(p, q, k)`` is summed over them.
    Returns ``(dW, dx)``; ``dx`` is ``None`` when ``need_dx`` is false.
    """
    k = W.k
    x = np.asarray(x, dtype=np.float64)
    da = np.asarray(da, dtype=np.float64)
    lead, xs = split_segments(x, W.n, W.q, k, name="x")
    lead_a, ds = split_segments(da, W.m, W.p, k, name="da")
    if lead != lead_a:
        raise ShapeError(f"batch shapes differ: x {lead} vs da {lead_a}", tensor="da")
    if k == 1:
        dW = (ds[:, :, 0].T @ xs[:, :, 0])[:, :, None]
        dx = (ds[:, :, 0] @ W.vectors[:, :, 0]) if need_dx else None
    else:
        X = real_spectrum(xs)
        D = real_spectrum(ds)
        dW = inverse_real_spectrum(_backend.kernels.spectral_outer(D, X), k)
        dx = None
        if need_dx:
            Z = _backend.kernels.spectral_matvec_t(W.spectral.half, D)
            dx = inverse_real_spectrum(Z, k).reshape(-1, W.q * k)
    if dx is not None:
        dx = dx[:, : W.n].reshape(lead + (W.n,))
    return dW, dx


def weight_backward(W, x, da, need_dx=True):
    """``(dW, dx)`` for any weight object; ``dW`` has the shape of ``W.stored``."""
    if isinstance(W, BlockCirculantMatrix):
        return block_matvec_backward(W, x, da, need_dx)
    x2 = np.asarray(x).reshape(-1, W.shape[1])
    d2 = np.asarray(da).reshape(-1, W.shape[0])
    dW = d2.T @ x2
    dx = (np.asarray(da) @ W.values) if need_dx else None
    return dW, dx


def weight_rmatvec(W, da):
    """``W.T @ da`` without touching ``dW``."""
    if isinstance(W, BlockCirculantMatrix):
        if W.k == 1:
            return np.asarray(da) @ W.vectors[:, :, 0]
        return _circ_rmatvec(W, da)
    return np.asarray(da) @ W.values


def _circ_rmatvec(W, da):
    k = W.k
    lead, ds = split_segments(da, W.m, W.p, k, name="da")
    Z = _backend.kernels.spectral_matvec_t(W.spectral.half, real_spectrum(ds))
    dx = inverse_real_spectrum(Z, k).reshape(-1, W.q * k)
    return dx[:, : W.n].reshape(lead + (W.n,))


@dataclass
class Gradients:
    """Per-layer ``{name: array}`` mirroring each layer's stored tensors, plus d(inputs)."""

    layers: list
    inputs: np.ndarray = None
    head: dict = field(default_factory=dict)

    def flat(self):
        out = {}
        for l, g in enumerate(self.layers):
            for name, arr in g.items():
                out[f"layer{l}.{name}"] = arr
        for name, arr in self.head.items():
            out[f"head.{name}"] = arr
        return out


def _layer_backward(params, caches, d_r):
    """BPTT through one layer.  ``d_r[t]`` is the external gradient on ``r_t``."""
    T = len(caches)
    peep = params.peephole
    dr_next = np.zeros_like(caches[0].r_prev)
    dc_next = np.zeros_like(caches[0].c_prev)
    dz = {g: [None] * T for g in GATES}
    dr_all = [None] * T
    for t in range(T - 1, -1, -1):
        c = caches[t]
        dr = d_r[t] + dr_next
        dr_all[t] = dr
        dm = weight_rmatvec(params.W_proj, dr)
        do = dm * c.tanh_c
        dc = dc_next + dm * c.o * (1.0 - c.tanh_c**2)
        dz_o = do * c.o * (1.0 - c.o)
        if peep:
            dc = dc + dz_o * params.p_o
        dz_i = dc * c.g * c.i * (1.0 - c.i)
        dz_f = dc * c.c_prev * c.f * (1.0 - c.f)
        dz_g = dc * c.i * (1.0 - c.g**2)
        dc_next = dc * c.f
        if peep:
            dc_next = dc_next + dz_i * params.p_i + dz_f * params.p_f
        dz["i"][t], dz["f"][t], dz["o"][t], dz["g"][t] = dz_i, dz_f, dz_o, dz_g
        dr_next = sum(weight_rmatvec(getattr(params, f"W_{g}r"), dz[g][t]) for g in GATES)

    # weight gradients batched over time
    X = np.stack([c.x for c in caches])
    R = np.stack([c.r_prev for c in caches])
    M = np.stack([c.m for c in caches])
    C_prev = np.stack([c.c_prev for c in caches])
    C = np.stack([c.c for c in caches])
    DZ = {g: np.stack(dz[g]) for g in GATES}
    H = params.hidden_size
    grads = {}
    dx = 0.0
    for g in GATES:
        grads[f"W_{g}x"], dx_g = weight_backward(getattr(params, f"W_{g}x"), X, DZ[g])
        dx = dx + dx_g
        grads[f"W_{g}r"], _ = weight_backward(getattr(params, f"W_{g}r"), R, DZ[g], need_dx=False)
        grads[f"b_{g}"] = DZ[g].reshape(-1, H).sum(axis=0)
    grads["W_proj"], _ = weight_backward(params.W_proj, M, np.stack(dr_all), need_dx=False)
    if peep:
        grads["p_i"] = (DZ["i"] * C_prev).reshape(-1, H).sum(axis=0)
        grads["p_f"] = (DZ["f"] * C_prev).reshape(-1, H).sum(axis=0)
        grads["p_o"] = (DZ["o"] * C).reshape(-1, H).sum(axis=0)
    return {name: grads[name] for name in params.names()}, dx


def lstm_backward(layers, caches, d_outputs):
    """Full BPTT through a layer stack given ``d_outputs[t]`` on the top layer's outputs."""
    if len(caches) != len(layers):
        raise ShapeError(f"{len(caches)} cache stacks for {len(layers)} layers", tensor="caches")
    d_outputs = np.asarray(d_outputs, dtype=np.float64)
    T = d_outputs.shape[0]
    for l, layer_caches in enumerate(caches):
        if len(layer_caches) != T:
            raise ShapeError(f"layer {l} cached {len(layer_caches)} steps, gradient has {T}", tensor="caches")
    grads = [None] * len(layers)
    d_r = d_outputs
    for l in range(len(layers) - 1, -1, -1):
        grads[l], d_r = _layer_backward(layers[l], caches[l], d_r)
    return Gradients(grads, inputs=d_r)


# ---------------------------------------------------------------- tasks


def adding_problem(rng, batch, seq_len):
    """Inputs ``(T, B, 2)``: uniform values and a 0/1 marker on two positions; target their sum."""
    x = np.zeros((seq_len, batch, 2))
    x[:, :, 0] = rng.uniform(0.0, 1.0, size=(seq_len, batch))
    first = rng.integers(0, seq_len // 2, size=batch)
    second = rng.integers(seq_len // 2, seq_len, size=batch)
    cols = np.arange(batch)
    x[first, cols, 1] = 1.0
    x[second, cols, 1] = 1.0
    y = (x[first, cols, 0] + x[second, cols, 0])[:, None]
    return x, y


def sequence_copy(rng, batch, seq_len, vocab=4, delay=2):
    """One-hot symbols ``(T, B, vocab)``; target at step t is the symbol from step ``t - delay``."""
    sym = rng.integers(0, vocab, size=(seq_len, batch))
    x = np.eye(vocab)[sym]
    y = np.full((seq_len, batch), -1)
    y[delay:] = sym[: seq_len - delay]
    return x, y


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    steps: int = 2000
    batch_size: int = 32
    seed: int = 0
    task: str = "adding_problem"
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    clip_norm: float = 5.0
    seq_len: int = 10
    eval_batch: int = 256
    vocab: int = 4
    delay: int = 2

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigError("learning_rate", f"must be finite and >= 0, got {self.learning_rate!r}")
        for key in ("steps", "batch_size", "seq_len", "eval_batch", "vocab"):
            v = getattr(self, key)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(key, f"must be an integer >= 1, got {v!r}")
        if self.task not in TASKS:
            raise ConfigError("task", f"must be one of {TASKS}, got {self.task!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("optimizer", f"must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum", f"must be in [0, 1), got {self.momentum!r}")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm", "must be >= 0 (0 disables clipping)")
        if self.task == "adding_problem" and self.seq_len < 2:
            raise ConfigError("seq_len", "adding_problem needs seq_len >= 2")
        if self.task == "sequence_copy" and not 0 <= self.delay < self.seq_len:
            raise ConfigError("delay", f"must be in [0, seq_len), got {self.delay!r}")

    @property
    def input_size(self):
        return 2 if self.task == "adding_problem" else self.vocab

    @property
    def output_size(self):
        return 1 if self.task == "adding_problem" else self.vocab

    def sample(self, rng, batch):
        if self.task == "adding_problem":
            return adding_problem(rng, batch, self.seq_len)
        return sequence_copy(rng, batch, self.seq_len, self.vocab, self.delay)


def loss_and_gradients(model, config, x, y, need_grad=True):
    """Task loss on one batch and, optionally, the flat gradient dict."""
    outputs, caches = lstm_forward(model.layers, x)
    W_out = model.head.values
    d_out = np.zeros_like(outputs)
    if config.task == "adding_problem":
        r_T = outputs[-1]
        err = r_T @ W_out.T + model.head_bias - y
        loss = float(np.mean(err**2))
        if not need_grad:
            return loss, None
        dy = 2.0 * err / err.size
        dW_out = dy.T @ r_T
        db_out = dy.sum(axis=0)
        d_out[-1] = dy @ W_out
    else:
        logits = outputs @ W_out.T + model.head_bias
        logits = logits - logits.max(axis=-1, keepdims=True)
        prob = np.exp(logits)
        prob /= prob.sum(axis=-1, keepdims=True)
        mask = y >= 0
        count = max(int(mask.sum()), 1)
        tgt = np.where(mask, y, 0)
        picked = np.take_along_axis(prob, tgt[..., None], axis=-1)[..., 0]
        loss = float(-np.sum(np.log(picked) * mask) / count)
        if not need_grad:
            return loss, None
        dlogits = prob.copy()
        np.put_along_axis(dlogits, tgt[..., None], np.take_along_axis(dlogits, tgt[..., None], axis=-1) - 1.0, axis=-1)
        dlogits *= mask[..., None] / count
        P = outputs.shape[-1]
        dW_out = dlogits.reshape(-1, W_out.shape[0]).T @ outputs.reshape(-1, P)
        db_out = dlogits.reshape(-1, W_out.shape[0]).sum(axis=0)
        d_out = dlogits @ W_out
    grads = lstm_backward(model.layers, caches, d_out)
    grads.head = {"W_out": dW_out, "b_out": db_out}
    return loss, grads.flat()


def clip_by_global_norm(grads, max_norm):
    if not max_norm:
        return grads, None
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def stored_arrays(model):
    """``{name: array}`` of the values training actually updates."""
    out = {}
    for name, t in model.named_tensors().items():
        out[name] = t.stored if hasattr(t, "stored") else t
    return out


def apply_update(model, new_values):
    """New model with every tensor's stored values replaced (structure kept)."""
    layers = []
    for l, params in enumerate(model.layers):
        changes = {}
        for name, t in params.tensors().items():
            v = new_values[f"layer{l}.{name}"]
            changes[name] = t.with_stored(v) if hasattr(t, "with_stored") else v
        layers.append(params.replace(**changes))
    head = model.head.with_stored(new_values["head.W_out"])
    return LstmModel(model.config, layers, head, new_values["head.b_out"], dict(model.meta))


class Optimizer:
    """Plain SGD; with ``momentum > 0`` the heavy-ball update ``v = mu v + g``."""

    def __init__(self, learning_rate, momentum=0.0):
        self.lr = learning_rate
        self.mu = momentum
        self.velocity = {}

    def step(self, values, grads):
        out = {}
        for name, v in values.items():
            g = grads[name]
            if self.mu:
                vel = self.velocity.get(name)
                vel = g if vel is None else self.mu * vel + g
                self.velocity[name] = vel
                g = vel
            out[name] = v - self.lr * g
        return out


@dataclass
class TrainReport:
    losses: list
    initial_loss: float
    final_loss: float
    model: LstmModel
    updated_parameters: int
    seed: int
    grad_norms: list = field(default_factory=list)


def train(config, model_config, model=None):
    """Train directly in the model's (block-circulant) parameterization.

    ``initial_loss``/``final_loss`` are measured on a fixed held-out batch
    before the first and after the last update; ``losses`` is the
    per-step training-batch loss.
    """
    if model_config.input_size != config.input_size:
        raise ConfigError(
            "input_size", f"task {config.task} needs input_size={config.input_size}, got {model_config.input_size}"
        )
    init_seq, data_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(3)
    if model is None:
        model = LstmModel.init(model_config, np.random.default_rng(init_seq), head_size=config.output_size)
    model.meta["seed"] = config.seed
    data_rng = np.random.default_rng(data_seq)
    x_eval, y_eval = config.sample(np.random.default_rng(eval_seq), config.eval_batch)

    momentum = config.momentum if config.optimizer == "sgd_momentum" else 0.0
    opt = Optimizer(config.learning_rate, momentum)
    initial = loss_and_gradients(model, config, x_eval, y_eval, need_grad=False)[0]
    losses, norms = [], []
    updated = 0
    for step in range(config.steps):
        x, y = config.sample(data_rng, config.batch_size)
        loss, grads = loss_and_gradients(model, config, x, y)
        if not np.isfinite(loss):
            raise DivergenceError(step, loss)
        grads, norm = clip_by_global_norm(grads, config.clip_norm)
        new_values = opt.step(stored_arrays(model), grads)
        if not all(np.all(np.isfinite(v)) for v in new_values.values()):
            raise DivergenceError(step, loss)
        model = apply_update(model, new_values)
        updated = sum(g.size for g in grads.values())
        losses.append(loss)
        norms.append(norm)
    final = loss_and_gradients(model, config, x_eval, y_eval, need_grad=False)[0]
    if not np.isfinite(final):
        raise DivergenceError(config.steps, final)
    expected = compression_stats(model.architecture()).stored_total
    if updated != expected:
        raise AssertionError(f"updated {updated} parameters, compressed model stores {expected}")
    return TrainReport(losses, initial, final, model, updated, config.seed, norms)
