"""Versioned binary checkpoints.

Layout::

    8 bytes   magic  b"CXRPCKPT"
    4 bytes   format version, little-endian uint32
    8 bytes   header length, little-endian uint64
    header    UTF-8 JSON (sorted keys): array table, sha256 of payload, metadata
    payload   float64 little-endian arrays, concatenated in table order

Serialization is deterministic, so ``save -> load -> save`` reproduces the
file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ResNet, build_model
from .optim import Schedule, SgdmState, schedule_from_state

MAGIC = b"CXRPCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    model: ResNet
    optimizer: SgdmState
    schedule: Schedule | None
    extra: dict = field(default_factory=dict)


def _dump(arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        table.append([name, list(data.shape), offset])
        chunks.append(data.tobytes())
        offset += data.size
    payload = b"".join(chunks)
    header = {"arrays": table, "meta": meta, "payload_sha256": hashlib.sha256(payload).hexdigest(),
              "payload_values": offset}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def _parse(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"checkpoint truncated: {len(blob)} bytes is shorter than the prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    start = _PREFIX.size + hlen
    if len(blob) < start:
        raise CheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    payload = blob[start:]
    expected = header["payload_values"] * 8
    if len(payload) != expected:
        raise CheckpointError(f"checkpoint truncated: payload has {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError("checkpoint payload checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays = {}
    for name, shape, offset in header["arrays"]:
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = flat[offset:offset + size].reshape(shape).astype(np.float64)
    return arrays, header["meta"]


def save_checkpoint(path, model: ResNet, optimizer: SgdmState, schedule: Schedule | None,
                    extra: dict | None = None) -> None:
    arrays = {f"model/{k}": v for k, v in model.state_arrays().items()}
    arrays.update({f"velocity/{k}": v for k, v in optimizer.velocity.items()})
    meta = {
        "model_config": model.config.to_dict(),
        "optimizer": {"momentum": optimizer.momentum, "weight_decay": optimizer.weight_decay},
        "schedule": schedule.state() if schedule is not None else None,
        "extra": extra or {},
    }
    Path(path).write_bytes(_dump(arrays, meta))


def load_model_state(model: ResNet, arrays: dict[str, np.ndarray]) -> None:
    """Copy ``model/...`` arrays into ``model``; the first mismatch is reported by name."""
    target = model.state_arrays()
    for name, dest in target.items():
        key = f"model/{name}"
        if key not in arrays:
            raise CheckpointError(f"parameter {name!r} missing from checkpoint")
        if arrays[key].shape != dest.shape:
            raise CheckpointError(f"parameter {name!r} has shape {arrays[key].shape} in checkpoint, "
                                  f"model expects {dest.shape}")
    extra = sorted(k[len("model/"):] for k in arrays if k.startswith("model/") and k[6:] not in target)
    if extra:
        raise CheckpointError(f"checkpoint has parameter {extra[0]!r} unknown to the model")
    for name, dest in target.items():
        dest[...] = arrays[f"model/{name}"]


def load_checkpoint(path, model: ResNet | None = None) -> Checkpoint:
    """Read a checkpoint; rebuilds the model from its stored config unless one is supplied."""
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist") from None
    arrays, meta = _parse(blob)
    if model is None:
        cfg = meta["model_config"]
        model = build_model(ModelConfig(**cfg))
    load_model_state(model, arrays)
    opt = SgdmState(**meta["optimizer"])
    for key, arr in arrays.items():
        if key.startswith("velocity/"):
            opt.velocity[key[len("velocity/"):]] = arr.copy()
    sched = schedule_from_state(meta["schedule"]) if meta["schedule"] is not None else None
    return Checkpoint(model, opt, sched, meta["extra"])
