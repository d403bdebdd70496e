"""Binary checkpoint format.

Layout, all little-endian:

    bytes 0..3   magic "HQFN"
    u32          format version (currently 1)
    8 x u32      config: n_features, n_memberships, n_reuploads,
                 n_qd_qubits, head_split, hidden_dim, n_classes, image_size
    f64 stream   every tensor of ModelParams in declaration order, C order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams, init_params

MAGIC = b"HQFN"
VERSION = 1

_CONFIG_FIELDS = ("n_features", "n_memberships", "n_reuploads", "n_qd_qubits",
                  "head_split", "hidden_dim", "n_classes", "image_size")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: ModelParams, config: ModelConfig) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<8I", *(getattr(config, name) for name in _CONFIG_FIELDS)))
    for _, arr in params.named_tensors():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    blob = Path(path).read_bytes()
    if len(blob) < 4 + 4 + 32 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    values = struct.unpack_from("<8I", blob, 8)
    config = ModelConfig(**dict(zip(_CONFIG_FIELDS, values)))

    params = init_params(config, seed=0)
    offset = 8 + 32
    for name, arr in params.named_tensors():
        nbytes = arr.size * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated tensor data at {name!r}")
        flat = np.frombuffer(blob, dtype="<f8", count=arr.size, offset=offset)
        setattr(params, name, flat.reshape(arr.shape).astype(np.float64))
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return params, config
