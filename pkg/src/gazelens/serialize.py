"""Model weight serialization: a flat binary container plus a JSON twin
for inspection.

Binary layout (little-endian throughout):
magic ``GZMP``, format version u32, kind (u32 length + utf-8), config
(u32 length + utf-8 JSON), tensor count u32, then per tensor: name
(u32 length + utf-8), ndim u32, dims u64 each, float64 values.
"""
from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .networks import CnnConfig, FfnConfig, LstmConfig
from .training import ModelParams

MAGIC = b"GZMP"
VERSION = 1

_CONFIG_TYPES = {"lstm": LstmConfig, "cnn": CnnConfig, "ffn": FfnConfig}


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _read_str(buf: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    return buf[off : off + n].decode("utf-8"), off + n


def save_params(model: ModelParams, path: str) -> None:
    config_json = json.dumps(dataclasses.asdict(model.config), sort_keys=True)
    chunks = [MAGIC, struct.pack("<I", VERSION), _pack_str(model.kind), _pack_str(config_json)]
    names = sorted(model.tensors)
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(model.tensors[name], dtype=np.float64)
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_params(path: str) -> ModelParams:
    buf = open(path, "rb").read()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a model parameter file")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off = 8
    kind, off = _read_str(buf, off)
    config_json, off = _read_str(buf, off)
    config = _CONFIG_TYPES[kind](**json.loads(config_json))
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    tensors = {}
    for _ in range(count):
        name, off = _read_str(buf, off)
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
    return ModelParams(kind, config, tensors)


def save_params_json(model: ModelParams, path: str) -> None:
    doc = {
        "kind": model.kind,
        "config": dataclasses.asdict(model.config),
        "tensors": {k: v.tolist() for k, v in sorted(model.tensors.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
