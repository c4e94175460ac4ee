import json

import numpy as np
import pytest

from circrnn import modelfile
from circrnn.errors import ModelFileError
from circrnn.lstm import LstmConfig, LstmModel
from circrnn.quant import QuantizedModel, quantize_model, quantized_forward

CFG = LstmConfig(3, 8, 4, num_layers=2, block_size_input=(2, 4), block_size_recurrent=4, compress_projection=True)


@pytest.fixture
def model(rng):
    m = LstmModel.init(CFG, rng, head_size=2)
    m.meta["seed"] = 7
    return m


def test_round_trip_bytes(model, tmp_path):
    a = tmp_path / "a.bcm"
    b = tmp_path / "b.bcm"
    modelfile.save(model, a)
    modelfile.save(modelfile.load(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_loaded_model_outputs_identical(model, tmp_path, rng):
    path = tmp_path / "m.bcm"
    modelfile.save(model, path)
    loaded = modelfile.load(path)
    x = rng.standard_normal((6, 3))
    assert np.max(np.abs(loaded.forward(x) - model.forward(x))) <= 1e-12
    assert loaded.meta["seed"] == 7


def test_circulant_stores_defining_vectors_only(model):
    doc = modelfile.to_document(model)
    entry = next(t for t in doc["tensors"] if t["name"] == "layer1.W_ix")
    assert entry["kind"] == "circulant" and entry["block_size"] == 4
    assert np.array(entry["values"]).shape == (2, 1, 4)


def test_no_peephole_model(rng, tmp_path):
    cfg = LstmConfig(2, 4, 2, peephole=False)
    m = LstmModel.init(cfg, rng)
    path = tmp_path / "m.bcm"
    modelfile.save(m, path)
    assert not modelfile.load(path).layers[0].peephole


def test_quantized_round_trip(model, tmp_path, rng):
    qm = quantize_model(model)
    a, b = tmp_path / "q1.bcm", tmp_path / "q2.bcm"
    modelfile.save(qm, a)
    loaded = modelfile.load(a)
    assert isinstance(loaded, QuantizedModel)
    modelfile.save(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    x = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(quantized_forward(loaded, x), quantized_forward(qm, x))


def test_truncated_file_reports_offset(model, tmp_path):
    path = tmp_path / "bad.bcm"
    path.write_text(modelfile.dumps(model)[:200])
    with pytest.raises(ModelFileError, match="offset"):
        modelfile.load(path)


def _mutate(model, fn):
    doc = json.loads(modelfile.dumps(model))
    fn(doc)
    return json.dumps(doc)


@pytest.mark.parametrize(
    "mutation,where",
    [
        (lambda d: d.pop("tensors"), "tensors"),
        (lambda d: d.update(format_version=9), "format_version"),
        (lambda d: d["tensors"][0].update(values=[[1.0]]), "tensors[0].values"),
        (lambda d: d["tensors"][0].update(kind="sparse"), "tensors[0].kind"),
        (lambda d: d["tensors"][0].update(block_size=3), "tensors[0].block_size"),
        (lambda d: d["tensors"].pop(), "tensors"),
        (lambda d: d["architecture"]["config"].update(hidden_size=-1), "architecture.config"),
    ],
)
def test_corrupt_fields_named(model, mutation, where):
    with pytest.raises(ModelFileError) as exc:
        modelfile.loads(_mutate(model, mutation))
    assert exc.value.where == where
