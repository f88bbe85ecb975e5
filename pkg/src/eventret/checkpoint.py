"""Binary checkpoint container.

Layout: magic ``ERR1`` | uint32 version | uint64 header length | UTF-8 JSON
header | float32 little-endian payload. The header lists each tensor's
name, shape and byte offset into the payload along with the config, seed
and free-form metadata. Keys are sorted so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .jsonio import atomic_write_bytes

MAGIC = b"ERR1"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]"
    config: dict
    seed: int
    meta: dict = field(default_factory=dict)
    version: int = VERSION


def encode_checkpoint(tensors: Mapping[str, np.ndarray], config: Mapping[str, Any], seed: int,
                      meta: Mapping[str, Any] | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = np.array(value, dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": config, "seed": int(seed), "meta": dict(meta or {}), "tensors": entries,
              "payload_bytes": offset}
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(chunks)


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray], config: Mapping[str, Any], seed: int,
                    meta: Mapping[str, Any] | None = None) -> None:
    atomic_write_bytes(path, encode_checkpoint(tensors, config, seed, meta))


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < _PREFIX.size:
        raise ValueError("checkpoint truncated")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size + head_len
    if start > len(data):
        raise ValueError("checkpoint truncated")
    header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    payload = memoryview(data)[start:]
    if len(payload) != header["payload_bytes"]:
        raise ValueError("checkpoint payload size mismatch")
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    spans = sorted((t["offset"], t["offset"] + 4 * int(np.prod(t["shape"], dtype=np.int64)))
                   for t in header["tensors"])
    for (_, end), (start_next, _) in zip(spans, spans[1:]):
        if start_next < end:
            raise ValueError("checkpoint tensors overlap")
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        end = t["offset"] + 4 * count
        if t["offset"] < 0 or end > len(payload):
            raise ValueError(f"tensor {t['name']} lies outside the payload")
        arr = np.frombuffer(payload[t["offset"]:end], dtype="<f4").reshape(t["shape"])
        tensors[t["name"]] = arr.astype(np.float32)
    return Checkpoint(tensors, header["config"], header["seed"], header["meta"], version)


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
