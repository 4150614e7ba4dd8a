"""Checkpoint files.

Layout (all integers little-endian)::

    b"MRST"                      magic
    u32   format_version
    u64   header_length          byte length of the JSON header
    ...   JSON header (UTF-8, sorted keys, compact separators)
    ...   float32 parameter blocks, concatenated in header order
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..nn import NetConfig, ParamStore

MAGIC = b"MRST"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    """Parameter stores plus training metadata.

    ``stores`` maps a role (``generator``, ``discriminator/denoise``, ...) to its
    ParamStore. ``meta`` carries everything else that goes into the header.
    """

    net_config: NetConfig
    stores: dict
    meta: dict = field(default_factory=dict)

    def store(self, role: str) -> ParamStore:
        return self.stores[role]


def _header(ckpt: Checkpoint) -> dict:
    params = []
    for role, store in ckpt.stores.items():
        for name, tensor in store.items():
            params.append({
                "store": role,
                "kind": store.kind,
                "name": name,
                "shape": list(tensor.shape),
                "partition": store.label(name),
                "rows": store.row_labels(name),
            })
    return {"net_config": ckpt.net_config.to_dict(), "params": params, "meta": ckpt.meta}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = json.dumps(_header(ckpt), sort_keys=True, separators=(",", ":")).encode("utf-8")
    blocks = [np.ascontiguousarray(t.data, dtype="<f4").tobytes()
              for store in ckpt.stores.values() for _, t in store.items()]
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(blocks)


def decode_checkpoint(buf: bytes, dtype=np.float32) -> Checkpoint:
    if len(buf) < _PREFIX.size:
        raise FormatError("checkpoint too short", 0)
    magic, version, hlen = _PREFIX.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format version {version}", 4)
    start = _PREFIX.size
    if len(buf) < start + hlen:
        raise FormatError("truncated checkpoint header", start)
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}", start) from exc
    config = NetConfig(**header["net_config"])
    stores: dict[str, ParamStore] = {}
    offset = start + hlen
    for p in header["params"]:
        count = int(np.prod(p["shape"], dtype=np.int64))
        nbytes = 4 * count
        if len(buf) < offset + nbytes:
            raise FormatError(f"truncated block for {p['store']}:{p['name']}", offset)
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(p["shape"])
        offset += nbytes
        store = stores.get(p["store"])
        if store is None:
            store = stores[p["store"]] = ParamStore(p["kind"], config)
        store.add(p["name"], arr.astype(dtype), p["partition"])
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after parameter blocks", offset)
    return Checkpoint(config, stores, header.get("meta", {}))


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    return path


def load_checkpoint(path, dtype=np.float32) -> Checkpoint:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    try:
        return decode_checkpoint(buf, dtype)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
