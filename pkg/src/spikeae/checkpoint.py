"""Single-file checkpoints.

Layout::

    b"SAECKPT1"                       8-byte magic
    uint32 little-endian              header length in bytes
    UTF-8 JSON header                 {"config", "meta", "tensors": [...]}
    payload                           little-endian floats, one tensor after another

Each tensor directory entry records name, shape, dtype and byte offset into
the payload.  The header is written with sorted keys so that saving the same
model twice yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import model_config_from_dict, model_config_to_dict
from .errors import ConfigError, ConsistencyError, FormatError
from .models import PARAMETER_TABLE, ModelConfig, build_model

MAGIC = b"SAECKPT1"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def encode(model, meta=None):
    entries, chunks, offset = [], [], 0
    for name, t in model.params.items():
        dtype = str(t.dtype)
        raw = np.ascontiguousarray(t.data, dtype=_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": dtype, "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {"config": model_config_to_dict(model.config), "meta": meta or {}, "tensors": entries}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(chunks)


def save_checkpoint(path, model, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(model, meta)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def _expected_count(cfg: ModelConfig):
    default_geometry = cfg.image_size == 28 and cfg.kernel_size == 5 and tuple(cfg.channels) == (16, 32)
    if default_geometry:
        return PARAMETER_TABLE.get((cfg.family, cfg.n_z))
    return None


def decode(data, source="<checkpoint>"):
    """Rebuild (model, meta) from checkpoint bytes."""
    if len(data) < 12:
        raise FormatError(f"{source}: file too short", offset=len(data))
    if data[:8] != MAGIC:
        raise FormatError(f"{source}: bad magic {data[:8]!r}", offset=0)
    (hlen,) = struct.unpack("<I", data[8:12])
    body = 12 + hlen
    if body > len(data):
        raise FormatError(f"{source}: header length {hlen} runs past end of file", offset=8)
    try:
        header = json.loads(data[12:body].decode("utf-8"))
        cfg_dict, entries = header["config"], header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{source}: unreadable header ({exc})", offset=12) from None
    try:
        cfg = model_config_from_dict(cfg_dict)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConsistencyError(f"{source}: header config rejected: {exc}") from None
    model = build_model(cfg)
    payload = memoryview(data)[body:]
    names = [e.get("name") for e in entries]
    if sorted(names) != sorted(model.params):
        raise ConsistencyError(f"{source}: tensors {names} do not match a {cfg.family} model")
    expected_offset = 0
    for e in entries:
        name = e["name"]
        target = model.params[name]
        shape = tuple(e["shape"])
        if shape != target.shape:
            raise ConsistencyError(f"{source}: {name} has shape {shape}, config implies {target.shape}")
        if e.get("dtype") != str(target.dtype):
            raise ConsistencyError(f"{source}: {name} stored as {e.get('dtype')}, config says {target.dtype}")
        offset = e["offset"]
        if offset != expected_offset:
            raise FormatError(f"{source}: {name} offset {offset}, expected {expected_offset}", offset=body + offset)
        nbytes = target.data.nbytes
        if offset + nbytes > len(payload):
            raise FormatError(f"{source}: payload truncated in {name}", offset=body + len(payload))
        target.data[...] = np.frombuffer(payload[offset : offset + nbytes], dtype=_DTYPES[e["dtype"]]).reshape(shape)
        expected_offset = offset + nbytes
    if expected_offset != len(payload):
        raise FormatError(f"{source}: {len(payload) - expected_offset} trailing payload bytes", offset=body + expected_offset)
    count = model.num_parameters()
    expected = _expected_count(cfg)
    if expected is not None and count != expected:
        raise ConsistencyError(f"{source}: {count} parameters, table says {expected}")
    return model, header.get("meta", {})


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint {path} does not exist")
    return decode(path.read_bytes(), str(path))
