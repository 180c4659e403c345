#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Binary checkpoint format.

Layout (all integers little-endian):

    magic        7 bytes   b"WNGAN1\\0"
    specs        u32 length + UTF-8 JSON {"discriminator": ..., "generator": ...}
    tensors      u32 count, then per tensor:
                     u16 name length, name (UTF-8)
                     u8  dtype (1 = float64)
                     u8  ndim, ndim x u32 dims
                     raw little-endian float64 data, row-major
    optimizer    u32 count + records in the tensor layout above
    state        u32 length + UTF-8 JSON (iteration, seed, split, config, ...)

Tensor names are "<role>/<name>" where role is "disc" or "gen" and the
name comes from Network.state_dict(), so records follow the NetworkSpec
traversal order. Encoding is deterministic: save(load(f)) reproduces f
byte for byte.

Usage:
    ckpt = Checkpoint.from_networks(disc, gen, state={"iteration": 500})
    save_checkpoint(path, ckpt)
    gen = load_checkpoint(path).network("generator")
"""

from __future__ import annotations

import dataclasses
import json
import pathlib
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from netbuild import Network, NetworkSpec, spec_from_dict, spec_to_dict, instantiate
from utils.error_handling import CheckpointError, get_logger
from utils.structure import atomic_write_bytes
from version import CHECKPOINT_FORMAT_VERSION

logger = get_logger("checkpoint")

MAGIC = b"WNGAN1\0"
DTYPE_F64 = 1
ROLE_PREFIX = {"discriminator": "disc", "generator": "gen"}


@dataclasses.dataclass
class Checkpoint:
    specs: Dict[str, NetworkSpec]
    tensors: Dict[str, np.ndarray]
    optimizer: Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    state: Dict[str, Any] = dataclasses.field(default_factory=dict)

    @classmethod
    def from_networks(cls, disc: Optional[Network], gen: Optional[Network],
                      optimizer: Optional[Dict[str, np.ndarray]] = None,
                      state: Optional[Dict[str, Any]] = None) -> "Checkpoint":
        specs: Dict[str, NetworkSpec] = {}
        tensors: Dict[str, np.ndarray] = {}
        for role, net in (("discriminator", disc), ("generator", gen)):
            if net is None:
                continue
            specs[role] = net.spec
            for name, value in net.state_dict().items():
                tensors[f"{ROLE_PREFIX[role]}/{name}"] = value
        state = dict(state or {})
        state.setdefault("format_version", CHECKPOINT_FORMAT_VERSION)
        return cls(specs, tensors, dict(optimizer or {}), state)

    @property
    def iteration(self) -> int:
        return int(self.state.get("iteration", 0))

    def network_state(self, role: str) -> Dict[str, np.ndarray]:
        prefix = ROLE_PREFIX[role] + "/"
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def network(self, role: str) -> Network:
        """Rebuild a network from its spec and load its stored tensors."""
        if role not in self.specs:
            raise CheckpointError(f"Checkpoint has no {role} network")
        net = instantiate(self.specs[role], seed=0)
        net.load_state_dict(self.network_state(role))
        return net


# ── encoding ───────────────────────────────────────────────────────

def _pack_blob(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def _pack_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        # ascontiguousarray would promote 0-d values to shape (1,)
        arr = np.require(np.asarray(value, dtype="<f8"), requirements="C")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BB", DTYPE_F64, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    specs = {role: spec_to_dict(spec) for role, spec in ckpt.specs.items()}
    return b"".join([
        MAGIC,
        _pack_blob(json.dumps(specs, separators=(",", ":")).encode("utf-8")),
        _pack_tensors(ckpt.tensors),
        _pack_tensors(ckpt.optimizer),
        _pack_blob(json.dumps(ckpt.state, separators=(",", ":"), sort_keys=True).encode("utf-8")),
    ])


# ── decoding ───────────────────────────────────────────────────────

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"Checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blob(self) -> bytes:
        (n,) = self.unpack("<I")
        return self.take(n)

    def tensors(self) -> Dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = self.unpack("<H")
            name = self.take(name_len).decode("utf-8")
            dtype, ndim = self.unpack("<BB")
            if dtype != DTYPE_F64:
                raise CheckpointError(f"Tensor {name}: unsupported dtype code {dtype}")
            shape = self.unpack(f"<{ndim}I") if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            raw = self.take(8 * size)
            out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        return out


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic)")
    try:
        specs_raw = json.loads(reader.blob().decode("utf-8"))
        specs = {role: spec_from_dict(d) for role, d in specs_raw.items()}
        tensors = reader.tensors()
        optimizer = reader.tensors()
        state = json.loads(reader.blob().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, struct.error) as e:
        raise CheckpointError(f"Corrupt checkpoint: {e}") from e
    if reader.pos != len(data):
        raise CheckpointError(f"Checkpoint has {len(data) - reader.pos} trailing bytes")
    return Checkpoint(specs, tensors, optimizer, state)


# ── files ──────────────────────────────────────────────────────────

def save_checkpoint(path: pathlib.Path, ckpt: Checkpoint) -> pathlib.Path:
    path = pathlib.Path(path)
    try:
        atomic_write_bytes(path, encode_checkpoint(ckpt))
    except OSError as e:
        raise CheckpointError(f"Could not write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} (iteration {ckpt.iteration})")
    return path


def load_checkpoint(path: pathlib.Path) -> Checkpoint:
    path = pathlib.Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
