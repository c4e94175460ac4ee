"""Self-describing JSON model files.

Layout::

    {"format_version": 1, "seed": 0,
     "architecture": {"config": {...LstmConfig...}, "head_size": 1},
     "quantization": null | {"act_frac_bits": 8, "gate_frac_bits": 11},
     "tensors": [{"name": "layer0.W_ix", "kind": "circulant", "shape": [m, n],
                  "block_size": 4, "values": [[[...k floats...], ...], ...]},
                 {"name": "layer0.b_i", "kind": "dense", "shape": [n], "values": [...]},
                 {"name": ..., "kind": "quantized", "storage": "circulant",
                  "frac_bits": 9, "shape": [m, n], "block_size": 4, "raw": [...]}]}

Circulant tensors store only their ``p x q x k`` defining vectors.  Output
is deterministic (fixed key order, shortest round-trip float repr), so
save -> load -> save is byte-identical.
"""

import json

import numpy as np

from .circulant import BlockCirculantMatrix, DenseMatrix
from .errors import ConfigError, ModelFileError
from .lstm import LstmConfig, LstmModel, LstmParams, architecture
from .quant import FixedPointFormat, QuantizedModel, QuantizedTensor

FORMAT_VERSION = 1


def _encode_tensor(name, t):
    if isinstance(t, QuantizedTensor):
        return {
            "name": name,
            "kind": "quantized",
            "storage": t.kind,
            "frac_bits": t.fmt.frac_bits,
            "shape": list(t.shape),
            "block_size": t.block_size,
            "raw": t.raw.tolist(),
        }
    if isinstance(t, BlockCirculantMatrix):
        return {"name": name, "kind": "circulant", "shape": [t.m, t.n], "block_size": t.k, "values": t.vectors.tolist()}
    values = t.values if isinstance(t, DenseMatrix) else np.asarray(t, dtype=np.float64)
    return {"name": name, "kind": "dense", "shape": list(values.shape), "values": values.tolist()}


def _named(model):
    if isinstance(model, QuantizedModel):
        out = {}
        for l, d in enumerate(model.layers):
            for n, qt in d.items():
                out[f"layer{l}.{n}"] = qt
        if model.head is not None:
            out["head.W_out"] = model.head
            out["head.b_out"] = model.head_bias
        return out
    return model.named_tensors()


def to_document(model, seed=None):
    quant = None
    if isinstance(model, QuantizedModel):
        quant = {"act_frac_bits": model.act_fmt.frac_bits, "gate_frac_bits": model.gate_fmt.frac_bits}
        head_size = None if model.head is None else model.head.shape[0]
        meta_seed = None
    else:
        head_size = model.head_size
        meta_seed = model.meta.get("seed")
    return {
        "format_version": FORMAT_VERSION,
        "seed": meta_seed if seed is None else seed,
        "architecture": {"config": model.config.to_dict(), "head_size": head_size},
        "quantization": quant,
        "tensors": [_encode_tensor(n, t) for n, t in _named(model).items()],
    }


def dumps(model, seed=None):
    return json.dumps(to_document(model, seed), separators=(",", ":"), allow_nan=False) + "\n"


def save(model, path, seed=None):
    text = dumps(model, seed)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _require(d, key, types, where):
    if not isinstance(d, dict):
        raise ModelFileError(where, "expected an object")
    if key not in d:
        raise ModelFileError(f"{where}.{key}" if where else key, "missing field")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, types):
        raise ModelFileError(f"{where}.{key}" if where else key, f"unexpected type {type(v).__name__}")
    return v


def _array(values, shape, where, dtype=np.float64):
    try:
        arr = np.array(values, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(where, f"not a numeric array ({exc})") from None
    if arr.shape != tuple(shape):
        raise ModelFileError(where, f"expected array shape {tuple(shape)}, got {arr.shape}")
    if dtype is np.float64 and not np.all(np.isfinite(arr)):
        raise ModelFileError(where, "non-finite value")
    return arr


def _decode_tensor(entry, where):
    kind = _require(entry, "kind", str, where)
    shape = tuple(_require(entry, "shape", list, where))
    if len(shape) not in (1, 2) or not all(isinstance(d, int) and d >= 1 for d in shape):
        raise ModelFileError(f"{where}.shape", f"invalid shape {list(shape)}")
    if kind == "dense":
        arr = _array(entry.get("values"), shape, f"{where}.values")
        return DenseMatrix(arr) if len(shape) == 2 else arr
    k = _require(entry, "block_size", int, where)
    if k < 1 or k & (k - 1):
        raise ModelFileError(f"{where}.block_size", f"not a power of two: {k}")
    grid = None if len(shape) == 1 else (-(-shape[0] // k), -(-shape[1] // k), k)
    if kind == "circulant":
        if grid is None:
            raise ModelFileError(f"{where}.shape", "circulant tensors must be 2-D")
        return BlockCirculantMatrix(_array(entry.get("values"), grid, f"{where}.values"), *shape)
    if kind == "quantized":
        storage = _require(entry, "storage", str, where)
        stored_shape = {"vector": shape, "dense": shape, "circulant": grid}.get(storage)
        if stored_shape is None:
            raise ModelFileError(f"{where}.storage", f"unknown storage {storage!r}")
        fb = _require(entry, "frac_bits", int, where)
        try:
            fmt = FixedPointFormat(fb)
        except ValueError as exc:
            raise ModelFileError(f"{where}.frac_bits", str(exc)) from None
        raw = _array(entry.get("raw"), stored_shape, f"{where}.raw", dtype=np.int64)
        if raw.size and (raw.min() < -2048 or raw.max() > 2047):
            raise ModelFileError(f"{where}.raw", "value outside 12-bit range")
        return QuantizedTensor(fmt, raw, shape, k)
    raise ModelFileError(f"{where}.kind", f"unknown tensor kind {kind!r}")


def from_document(doc):
    if not isinstance(doc, dict):
        raise ModelFileError("<root>", "expected a JSON object")
    version = _require(doc, "format_version", int, "")
    if version != FORMAT_VERSION:
        raise ModelFileError("format_version", f"unsupported version {version}")
    arch = _require(doc, "architecture", dict, "")
    cfg_d = _require(arch, "config", dict, "architecture")
    try:
        config = LstmConfig.from_dict(cfg_d)
    except (ConfigError, TypeError) as exc:
        raise ModelFileError("architecture.config", str(exc)) from None
    head_size = arch.get("head_size")
    if head_size is not None and (not isinstance(head_size, int) or head_size < 1):
        raise ModelFileError("architecture.head_size", f"invalid value {head_size!r}")
    entries = _require(doc, "tensors", list, "")
    tensors = {}
    for idx, entry in enumerate(entries):
        where = f"tensors[{idx}]"
        name = _require(entry, "name", str, where)
        if name in tensors:
            raise ModelFileError(f"{where}.name", f"duplicate tensor {name!r}")
        tensors[name] = _decode_tensor(entry, where)
    expected = [t.name for t in architecture(config, head_size).tensors]
    missing = [n for n in expected if n not in tensors]
    extra = [n for n in tensors if n not in expected]
    if missing:
        raise ModelFileError("tensors", f"missing {', '.join(missing)}")
    if extra:
        raise ModelFileError("tensors", f"unexpected {', '.join(extra)}")

    layer_dicts = []
    for l in range(config.num_layers):
        pre = f"layer{l}."
        layer_dicts.append({n[len(pre):]: tensors[n] for n in expected if n.startswith(pre)})
    quant = doc.get("quantization")
    is_q = [isinstance(t, QuantizedTensor) for t in tensors.values()]
    if quant is not None:
        if not all(is_q):
            raise ModelFileError("quantization", "quantized model contains unquantized tensors")
        act = FixedPointFormat(_require(quant, "act_frac_bits", int, "quantization"))
        gate = FixedPointFormat(_require(quant, "gate_frac_bits", int, "quantization"))
        return QuantizedModel(config, layer_dicts, tensors.get("head.W_out"), tensors.get("head.b_out"), act, gate)
    if any(is_q):
        raise ModelFileError("quantization", "quantized tensors in a float model (missing quantization block)")
    try:
        layers = [LstmParams(**d).validate() for d in layer_dicts]
    except ValueError as exc:
        raise ModelFileError("tensors", str(exc)) from None
    head = tensors.get("head.W_out")
    model = LstmModel(config, layers, head, tensors.get("head.b_out"))
    if head is not None and head.shape != (head_size, config.projection_size):
        raise ModelFileError("tensors", f"head.W_out has shape {head.shape}")
    model.meta["seed"] = doc.get("seed")
    return model


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"offset {exc.pos} (line {exc.lineno}, column {exc.colno})", exc.msg) from None
    return from_document(doc)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ModelFileError(f"offset {exc.start}", "not UTF-8 text") from None
    return loads(text)
