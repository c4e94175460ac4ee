"""``circrnn`` command line: train, eval, bench, report.

Exit codes: 0 ok, 2 usage/config error, 3 training divergence, 4 corrupt
model file.  ``CIRC_RNN_SEED`` supplies the seed when neither a flag nor
the config file sets one.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _backend, bench, modelfile
from .accounting import compression_stats
from .errors import ConfigError, DivergenceError, ModelFileError, ShapeError
from .lstm import LstmConfig, LstmModel, architecture, ese_config, parse_block_sizes
from .quant import FixedPointFormat, QuantizedModel, divergence, quantize_model, quantized_forward
from .spectral import is_power_of_two
from .training import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_CORRUPT = 0, 2, 3, 4
QUANT_GAP_BOUND = 0.05


class UsageError(Exception):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _blocks(text):
    sizes = parse_block_sizes(text)
    if sizes is None:
        return 1
    return sizes[0] if len(sizes) == 1 else sizes


TRAIN_KEYS = {
    "learning_rate": float, "steps": int, "batch_size": int, "seed": int, "task": str,
    "optimizer": str, "momentum": float, "clip_norm": float, "seq_len": int,
    "eval_batch": int, "vocab": int, "delay": int,
}
MODEL_KEYS = {
    "input_size": int, "hidden_size": int, "projection_size": int, "num_layers": int,
    "peephole": _bool, "block_size": _blocks, "block_size_input": _blocks,
    "block_size_recurrent": _blocks, "compress_projection": _bool, "block_size_projection": _blocks,
}
MODEL_DEFAULTS = {"hidden_size": 32, "projection_size": 16}


def parse_config(text, source="<config>"):
    """Flat ``key = value`` lines; ``#`` starts a comment.  Returns typed values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return coerce(out)


def coerce(raw):
    typed = {}
    for key, value in raw.items():
        conv = TRAIN_KEYS.get(key) or MODEL_KEYS.get(key)
        if conv is None:
            raise ConfigError(key, "unknown configuration key")
        try:
            typed[key] = conv(value) if isinstance(value, str) else value
        except (ValueError, ConfigError) as exc:
            raise ConfigError(key, f"invalid value {value!r} ({exc})") from None
    return typed


def build_configs(values):
    tkw = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    tc = TrainConfig(**tkw)
    mkw = dict(MODEL_DEFAULTS)
    mkw.update({k: v for k, v in values.items() if k in MODEL_KEYS})
    if "block_size" in mkw:
        both = mkw.pop("block_size")
        mkw.setdefault("block_size_input", both)
        mkw.setdefault("block_size_recurrent", both)
    if mkw.setdefault("input_size", tc.input_size) != tc.input_size:
        raise ConfigError("input_size", f"task {tc.task} needs {tc.input_size}, got {mkw['input_size']}")
    return tc, LstmConfig(**mkw)


def _env_seed():
    text = os.environ.get("CIRC_RNN_SEED")
    if text is None:
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError("CIRC_RNN_SEED", f"not an integer: {text!r}") from None


def write_loss_csv(path, losses, seed):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "seed"])
        for step, loss in enumerate(losses):
            w.writerow([step, repr(float(loss)), seed])


def cmd_train(args):
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError("--config", f"cannot read config file {path}")
    values = parse_config(path.read_text(encoding="utf-8"), str(path))
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("steps", "seed", "learning_rate"):
        v = getattr(args, key)
        if v is not None:
            overrides[key] = str(v)
    values.update(coerce(overrides))
    if "seed" not in values:
        env = _env_seed()
        values["seed"] = 0 if env is None else env
    tc, mc = build_configs(values)
    report = train(tc, mc)
    out = Path(args.out)
    modelfile.save(report.model, out, seed=tc.seed)
    loss_path = Path(args.loss) if args.loss else out.with_name("loss.csv")
    write_loss_csv(loss_path, report.losses, tc.seed)
    print(f"seed={tc.seed} steps={tc.steps} updated_parameters={report.updated_parameters}")
    print(f"eval loss: initial={report.initial_loss:.6g} final={report.final_loss:.6g} "
          f"ratio={report.final_loss / report.initial_loss:.4g}")
    print(f"wrote {out} and {loss_path}")
    return EXIT_OK


def read_sequence(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if not rows and lineno == 1:
                    continue  # header line
                raise ConfigError(f"{path}:{lineno}", f"non-numeric value in {row!r}") from None
    if not rows:
        raise ConfigError(str(path), "input has no timesteps")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError(str(path), f"rows have differing widths {sorted(widths)}")
    return np.array(rows)


def write_outputs(path, outputs, prefix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{prefix}{j}" for j in range(outputs.shape[1])])
        for t, row in enumerate(outputs):
            w.writerow([t] + [repr(float(v)) for v in row])


def cmd_eval(args):
    model = modelfile.load(args.model)
    x = read_sequence(args.input)
    n_in = model.config.input_size
    if x.shape[1] != n_in:
        raise ShapeError(f"model expects {n_in} input features per timestep, input has {x.shape[1]}", tensor="input")
    float_model = model.dequantized() if isinstance(model, QuantizedModel) else model
    quantized = args.quantize or isinstance(model, QuantizedModel)
    float_out = float_model.forward(x)
    if quantized:
        if isinstance(model, QuantizedModel):
            qmodel = model
        else:
            wfb = args.weight_frac_bits
            qmodel = quantize_model(model, weight_frac_bits=wfb, act_fmt=FixedPointFormat(args.act_frac_bits))
        outputs = quantized_forward(qmodel, x)
        if args.save_quantized:
            modelfile.save(qmodel, args.save_quantized, seed=model.meta.get("seed") if isinstance(model, LstmModel) else None)
    else:
        outputs = float_out
    prefix = "r"
    if args.head:
        outputs = float_model.readout(outputs)
        float_out = float_model.readout(float_out)
        prefix = "y"
    write_outputs(args.out, outputs, prefix)
    if quantized:
        d = divergence(float_out, outputs)
        status = "within" if d["mean_abs"] <= QUANT_GAP_BOUND else "EXCEEDS"
        print(f"quantization divergence: mean_abs={d['mean_abs']:.6g} max_abs={d['max_abs']:.6g} "
              f"over {d['count']} values ({status} bound {QUANT_GAP_BOUND})")
    print(f"wrote {args.out} ({outputs.shape[0]} timesteps)")
    return EXIT_OK


def _int_list(text, flag):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{flag}: empty list")
    return vals


def cmd_bench(args):
    sizes = _int_list(args.sizes, "--sizes")
    blocks = _int_list(args.blocks, "--blocks")
    if any(n < 1 for n in sizes):
        raise UsageError("--sizes: sizes must be >= 1")
    bad = [k for k in blocks if not is_power_of_two(k)]
    if bad:
        raise UsageError(f"--blocks: block sizes must be powers of two, got {bad}")
    if args.reps < 1:
        raise UsageError(f"--reps: must be >= 1, got {args.reps}")
    available = _backend.available()
    if args.bench_backend == "all":
        backends = available
    elif args.bench_backend in available:
        backends = [args.bench_backend]
    else:
        raise UsageError(f"--backend: {args.bench_backend!r} not available (have {available})")
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    rows = bench.run(sizes, blocks, args.reps, seed, backends)
    w = csv.DictWriter(sys.stdout, fieldnames=bench.FIELDS, lineterminator="\n")
    w.writeheader()
    for r in bench.as_dicts(rows):
        w.writerow(r)
    return EXIT_OK


def _report_arch(args):
    if args.ese is not None:
        if not is_power_of_two(args.ese):
            raise UsageError(f"--ese: block size must be a power of two, got {args.ese}")
        return f"ESE-shaped LSTMP layer, k={args.ese}", architecture(ese_config(args.ese))
    if args.model is None:
        raise UsageError("report: give a MODEL file or --ese K")
    model = modelfile.load(args.model)
    head = None if model.head is None else model.head.shape[0]
    return str(args.model), architecture(model.config, head)


def cmd_report(args):
    label, arch = _report_arch(args)
    rep = compression_stats(arch)
    if args.json:
        doc = {
            "source": label,
            "tensors": [
                {"name": r.name, "shape": list(r.shape), "block_size": r.block_size, "dense": r.dense, "stored": r.stored}
                for r in rep.rows
            ],
            "matrix_dense": rep.matrix_dense, "matrix_stored": rep.matrix_stored, "matrix_ratio": rep.matrix_ratio,
            "dense_total": rep.dense_total, "stored_total": rep.stored_total, "ratio": rep.ratio,
        }
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    print(f"# compression report: {label}")
    print(f"{'tensor':<20} {'shape':>12} {'k':>4} {'dense':>10} {'stored':>10} {'ratio':>7}")
    for r in rep.rows:
        shape = "x".join(str(d) for d in r.shape)
        print(f"{r.name:<20} {shape:>12} {r.block_size:>4} {r.dense:>10} {r.stored:>10} {r.ratio:>7.2f}")
    print(f"weight matrices: dense={rep.matrix_dense} stored={rep.matrix_stored} "
          f"({rep.matrix_stored / 1e6:.2f}M) ratio={rep.matrix_ratio:.2f}")
    print(f"all parameters:  dense={rep.dense_total} stored={rep.stored_total} "
          f"({rep.stored_total / 1e6:.2f}M) ratio={rep.ratio:.2f}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="circrnn", description=__doc__.splitlines()[0])
    ap.add_argument("--backend", choices=["auto", "compiled", "python"], default=None,
                    help="kernel backend (default: compiled when available)")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on a synthetic task in circulant parameter space")
    t.add_argument("--config", required=True, help="key=value config file")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--loss", help="loss CSV path (default: loss.csv next to --out)")
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run a model over one input sequence")
    e.add_argument("model")
    e.add_argument("input", help="CSV, one timestep per line")
    e.add_argument("--out", required=True)
    e.add_argument("--quantize", action="store_true", help="12-bit fixed-point path + divergence summary")
    e.add_argument("--weight-frac-bits", type=int, default=None, help="global weight format (default per-tensor)")
    e.add_argument("--act-frac-bits", type=int, default=8)
    e.add_argument("--save-quantized", help="also write the quantized model file")
    e.add_argument("--head", action="store_true", help="apply the readout head to the outputs")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="dense vs FFT matvec timing as CSV")
    b.add_argument("--sizes", default="256,512,1024")
    b.add_argument("--blocks", default="1,4,8,16")
    b.add_argument("--reps", type=int, default=50)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--backend", dest="bench_backend", default="all", help="all | compiled | python")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="stored vs dense parameter counts")
    r.add_argument("model", nargs="?")
    r.add_argument("--ese", type=int, metavar="K", help="report the ESE-shaped layer at block size K")
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.backend and args.backend != "auto":
            _backend.set_backend(args.backend)
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ModelFileError as exc:
        print(f"error: corrupt model file: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ConfigError, ShapeError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
