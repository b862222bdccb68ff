"""Self-describing binary checkpoints.

Layout::

    magic (8 bytes) | version (u32 LE) | header length (u64 LE) | header (UTF-8 JSON)
    | parameter blobs (float64 little-endian, in header order) | sha256 of all preceding bytes

The header carries the network spec and the name, shape and offset of every
blob, so a file can be checked against the agent it is loaded into.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .networks import NetworkSpec

MAGIC = b"TSCKPT\x00\x01"
VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: dict[str, np.ndarray], path: str | Path, spec: NetworkSpec, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=_DTYPE)
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": "twosided-checkpoint",
        "byteorder": "little",
        "dtype": "float64",
        "spec": spec.to_dict(),
        "meta": meta or {},
        "params": entries,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(blobs)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Parse and verify a checkpoint; returns ``(params, header)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    fixed = len(MAGIC) + 12
    if len(data) < fixed + 32:
        raise CheckpointError(f"{path}: file is truncated ({len(data)} bytes)")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", data[len(MAGIC) : fixed])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    body, digest = data[:-32], data[-32:]
    if fixed + hlen > len(body):
        raise CheckpointError(f"{path}: file is truncated")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated)")
    try:
        header = json.loads(body[fixed : fixed + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from None
    blob = body[fixed + hlen :]
    params = {}
    for e in header["params"]:
        start, n = e["offset"], e["nbytes"]
        count = int(np.prod(e["shape"], dtype=np.int64))
        if start + n > len(blob) or n != count * _DTYPE.itemsize:
            raise CheckpointError(f"{path}: blob for {e['name']} is out of bounds")
        params[e["name"]] = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=start).reshape(e["shape"]).astype(np.float64)
    return params, header


def load_checkpoint(path: str | Path, spec: NetworkSpec | None = None) -> dict[str, np.ndarray]:
    """Load parameters, refusing files written for a different network spec."""
    params, header = read_checkpoint(path)
    if spec is not None and header["spec"] != spec.to_dict():
        raise CheckpointError(f"{path}: checkpoint spec {header['spec']} does not match {spec.to_dict()}")
    return params


def save_agent(agent, path: str | Path, meta: dict | None = None) -> None:
    info = {"obs_shape": list(agent.obs_shape), "action_dim": agent.action_dim, "sac": agent.config.to_dict()}
    info.update(meta or {})
    save_checkpoint(agent.get_params(), path, agent.spec, info)


def load_agent(agent, path: str | Path) -> None:
    """Restore an agent's parameters in place after checking spec and shapes."""
    params = load_checkpoint(path, agent.spec)
    own = agent.get_params()
    if set(own) != set(params):
        raise CheckpointError(f"{path}: parameter names differ from the agent")
    for k, v in own.items():
        if v.shape != params[k].shape:
            raise CheckpointError(f"{path}: {k} has shape {params[k].shape}, agent expects {v.shape}")
    agent.set_params(params)
