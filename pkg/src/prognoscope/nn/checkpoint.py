"""Model checkpoint container.

Layout: one ASCII magic line, one JSON header line (format version,
architecture id, ordered parameter records with shapes and byte offsets),
then the raw little-endian float32 blobs. Offsets are relative to the
first byte after the header newline.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .tensor import Tensor

MAGIC = "prognoscope-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(model, path) -> None:
    path = Path(path)
    records = []
    blobs = []
    offset = 0
    for layer, name, tensor in model.parameters(include_stats=True):
        blob = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
        records.append({
            "name": f"{layer.label}.{name}",
            "shape": list(tensor.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture_id,
        "params": records,
    }
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION}\n".encode("ascii"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, model) -> None:
    """Load parameters into model, validating names and shapes against it."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii", errors="replace").strip()
        if not magic.startswith(MAGIC):
            raise DataError(f"{path}: not a checkpoint file")
        header = json.loads(fh.readline().decode("ascii"))
        payload = fh.read()
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version")
    if header.get("architecture") != model.architecture_id:
        raise DataError(
            f"{path}: checkpoint is for architecture {header.get('architecture')!r}, "
            f"model is {model.architecture_id!r}")
    by_name = {f"{layer.label}.{name}": (layer, name, tensor)
               for layer, name, tensor in model.parameters(include_stats=True)}
    seen = set()
    for rec in header["params"]:
        key = rec["name"]
        if key not in by_name:
            raise DataError(f"{path}: unknown parameter {key!r}")
        layer, name, tensor = by_name[key]
        if tuple(rec["shape"]) != tensor.shape:
            raise DataError(
                f"{path}: parameter {key} has shape {tuple(rec['shape'])}, "
                f"architecture expects {tensor.shape}")
        raw = payload[rec["offset"]:rec["offset"] + rec["nbytes"]]
        if len(raw) != rec["nbytes"]:
            raise DataError(f"{path}: truncated blob for {key}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(tensor.shape)
        layer.params[name] = Tensor(arr.astype(tensor.data.dtype))
        if layer.kind == "batchnorm":
            layer.initialized = True
        seen.add(key)
    missing = set(by_name) - seen
    if missing:
        raise DataError(f"{path}: checkpoint missing parameters {sorted(missing)}")
