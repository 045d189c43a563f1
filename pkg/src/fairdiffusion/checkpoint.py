"""Checkpoint persistence: a JSON manifest plus a raw float32 payload.

A checkpoint is a directory holding ``manifest.json`` (format version,
metadata, named tensor index with shapes and byte offsets) and
``tensors.bin`` (the tensors concatenated in manifest order as 32-bit
little-endian reals). Files are written to temp names and renamed, manifest
last, so an interrupted write never leaves a loadable directory.
"""

import json
import os

import numpy as np

from .errors import DataError

MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "tensors.bin"
FORMAT_VERSION = 1

_DTYPE = np.dtype("<f4")


def save_checkpoint(directory, named_arrays, meta):
    """Write named float32 arrays and a JSON-serializable meta dict."""
    os.makedirs(directory, exist_ok=True)
    index = []
    chunks = []
    offset = 0
    for name, arr in named_arrays.items():
        arr = np.ascontiguousarray(arr, dtype=_DTYPE)
        raw = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, "meta": meta, "tensors": index}

    payload_path = os.path.join(directory, PAYLOAD_NAME)
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    _atomic_write(payload_path, b"".join(chunks))
    _atomic_write(manifest_path, json.dumps(manifest, sort_keys=True, indent=2).encode() + b"\n")


def load_checkpoint(directory):
    """Read a checkpoint directory back into ({name: array}, meta)."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise DataError(f"{directory} has no {MANIFEST_NAME}; refusing incomplete checkpoint")
    with open(manifest_path) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format version {manifest.get('format_version')!r}")
    with open(os.path.join(directory, PAYLOAD_NAME), "rb") as f:
        payload = f.read()
    arrays = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if entry["length"] != count * _DTYPE.itemsize:
            raise DataError(f"manifest entry {entry['name']!r}: shape {shape} does not match payload length {entry['length']}")
        start, end = entry["offset"], entry["offset"] + entry["length"]
        if end > len(payload):
            raise DataError(f"manifest entry {entry['name']!r} points past the payload end")
        arrays[entry["name"]] = np.frombuffer(payload[start:end], dtype=_DTYPE).reshape(shape).copy()
    return arrays, manifest["meta"]


def _atomic_write(path, data):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# model-level serializers


def save_ddm(model, directory, extra_meta=None):
    """Persist a fitted DebiasingDiffusion (weights + configuration)."""
    meta = {
        "kind": "ddm",
        "config": _jsonable(model.get_params()),
        "denoiser": model.denoiser_.architecture(),
        "indicator": model.indicator_.architecture(),
        "cond_width": model.vocab_.embed_width,
        "vocab_names": model.vocab_.names,
        "schedule": {
            "num_steps": model.schedule_.num_steps,
            "beta_start": float(model.beta_start),
            "beta_end": float(model.beta_end),
        },
    }
    if extra_meta:
        meta.update(_jsonable(extra_meta))
    arrays = {name: t.data for name, t in model.params_.items()}
    save_checkpoint(directory, arrays, meta)


def load_ddm(directory):
    from .autodiff import ParameterSet
    from .data import ConditionVocab
    from .model import DebiasingDiffusion
    from .networks import DenoiserNet, IndicatorNet
    from .schedule import build_schedule

    arrays, meta = load_checkpoint(directory)
    if meta.get("kind") != "ddm":
        raise DataError(f"{directory} is not a model checkpoint (kind={meta.get('kind')!r})")
    config = dict(meta["config"])
    config["indicator_widths"] = tuple(config["indicator_widths"])
    est = DebiasingDiffusion(**config)
    arch = meta["denoiser"]
    est.schedule_ = build_schedule(meta["schedule"]["num_steps"],
                                   meta["schedule"]["beta_start"], meta["schedule"]["beta_end"])
    est.denoiser_ = DenoiserNet(**arch)
    est.indicator_ = IndicatorNet(input_width=meta["indicator"]["input_width"],
                                  hidden_widths=tuple(meta["indicator"]["hidden_widths"]))
    est.vocab_ = ConditionVocab(embed_width=meta["cond_width"])
    if est.vocab_.names != meta["vocab_names"]:
        raise DataError("checkpoint vocabulary does not match this build")
    est.params_ = ParameterSet.union(
        ("denoiser", est.denoiser_.params),
        ("indicator", est.indicator_.params),
        ("cond", _vocab_params(est.vocab_)),
    )
    _restore(est.params_, arrays)
    est.history_ = []
    return est


def save_oracle(oracle, directory, extra_meta=None):
    meta = {"kind": "oracle", "config": _jsonable(oracle.get_params())}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(directory, {name: t.data for name, t in oracle.params_.items()}, meta)


def load_oracle(directory):
    from .autodiff import ParameterSet, Tensor
    from .oracle import DigitOracle

    arrays, meta = load_checkpoint(directory)
    if meta.get("kind") != "oracle":
        raise DataError(f"{directory} is not an oracle checkpoint (kind={meta.get('kind')!r})")
    config = dict(meta["config"])
    config["hidden_widths"] = tuple(config["hidden_widths"])
    oracle = DigitOracle(**config)
    ps = ParameterSet()
    for name, arr in arrays.items():
        ps.add(name, Tensor(arr, requires_grad=True))
    oracle.params_ = ps
    oracle.classes_ = np.arange(10)
    return oracle, meta


def _vocab_params(vocab):
    from .autodiff import ParameterSet

    ps = ParameterSet()
    ps.add("table", vocab.table)
    return ps


def _restore(params, arrays):
    for name, t in params.items():
        if name not in arrays:
            raise DataError(f"checkpoint is missing tensor {name!r}")
        if arrays[name].shape != t.data.shape:
            raise DataError(f"tensor {name!r} has shape {arrays[name].shape}, expected {t.data.shape}")
        t.data = arrays[name].astype(t.data.dtype)
    extra = set(arrays) - {name for name, _ in params.items()}
    if extra:
        raise DataError(f"checkpoint holds unexpected tensors: {sorted(extra)}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
