"""Self-describing checkpoint container.

Layout: 8-byte magic ``DC2CKPT1``, little-endian uint64 header length, UTF-8
JSON header (model config, named array index, free-form meta), then the raw
little-endian array payloads concatenated in index order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .model import DFNet, build_model

MAGIC = b"DC2CKPT1"

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_id", "MAGIC"]


def save_checkpoint(path, model: DFNet, meta: dict | None = None) -> None:
    arrays = []
    payloads = []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        data = np.ascontiguousarray(arr, dtype="<f4" if arr.dtype.kind == "f" else None)
        arrays.append({"name": name, "dtype": str(data.dtype),
                       "shape": list(data.shape)})
        payloads.append(data.tobytes())
    header = {
        "format": 1,
        "config": model.config.to_dict(),
        "arrays": arrays,
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[DFNet, dict]:
    """Rebuild the model and return (model, meta)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    if header.get("format") != 1:
        raise ValueError(f"{path}: unsupported checkpoint format {header.get('format')}")
    config = ModelConfig.from_dict(header["config"])
    model = build_model(config)
    state = {}
    offset = 16 + hlen
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        dt = np.dtype(entry["dtype"])
        data = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
        offset += count * dt.itemsize
        state[entry["name"]] = torch.from_numpy(
            data.reshape(entry["shape"]).copy())
    model.load_state_dict(state)
    model.eval()
    return model, header["meta"]


def checkpoint_id(path) -> str:
    """Short content hash used in provenance reporting."""
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:12]
