"""Checkpoint container (.wsmf): JSON architecture descriptor + f32 blobs.

Layout (little-endian): magic b"WSMF" | version u32 | descriptor_len u32 |
descriptor JSON | parameter blobs as f32 in descriptor order. The descriptor
records the architecture, the parameter name/shape list, and the model kind
("cfm" velocity field or "mlp" regressor), so loading reconstructs the exact
network and a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..autodiff import Tensor
from .network import ArchConfig, VelocityFieldModel

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint",
           "write_param_file", "read_param_file"]

MAGIC = b"WSMF"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_param_file(path, kind: str, meta: dict, params: dict[str, Tensor]) -> None:
    descriptor = {
        "kind": kind,
        "meta": meta,
        "params": [{"name": k, "shape": list(v.data.shape)} for k, v in params.items()],
        "param_count": int(sum(v.data.size for v in params.values())),
    }
    blob = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for v in params.values():
            f.write(np.ascontiguousarray(v.data, dtype="<f4").tobytes())


def read_param_file(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (dlen,) = struct.unpack("<I", f.read(4))
        descriptor = json.loads(f.read(dlen).decode("utf-8"))
        body = f.read()
    data = np.frombuffer(body, dtype="<f4")
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in descriptor["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        if offset + size > data.size:
            raise CheckpointError(
                f"parameter block for '{name}': expected {size} floats, "
                f"found {data.size - offset}")
        params[name] = data[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != data.size:
        raise CheckpointError(
            f"trailing bytes after parameters: expected {offset} floats, found {data.size}")
    return descriptor["kind"], descriptor["meta"], params


def save_checkpoint(model: VelocityFieldModel, path) -> None:
    write_param_file(path, "cfm", {"arch": model.arch.to_dict()}, model.params)


def load_checkpoint(path) -> VelocityFieldModel:
    kind, meta, params = read_param_file(path)
    if kind != "cfm":
        raise CheckpointError(f"checkpoint kind {kind!r} is not a velocity-field model")
    arch = ArchConfig.from_dict(meta["arch"])
    model = VelocityFieldModel(arch, rng=np.random.default_rng(0))
    expected = set(model.params)
    got = set(params)
    if expected != got:
        raise CheckpointError(
            f"parameter names do not match the descriptor architecture: "
            f"missing {sorted(expected - got)}, unexpected {sorted(got - expected)}")
    for name, value in params.items():
        if model.params[name].data.shape != value.shape:
            raise CheckpointError(
                f"tensor '{name}': descriptor says {model.params[name].data.shape}, "
                f"blob sized for {value.shape}")
        model.params[name] = Tensor.param(value.astype(model.dtype))
    return model
