"""Policy weight files.

Binary layout (all integers little-endian):

    magic   5 bytes  b"SPINW"
    version u32      currently 1
    count   u32      number of tensors
    entry*  count times, sorted by name:
        name_len u16, name utf-8 bytes
        ndim     u8,  dims u32 each
        payload  float32 little-endian, C order

Weights are always float32, so serialize -> deserialize -> forward is
bit-exact.  A reserved "_meta" entry carries a small JSON blob (utf-8 bytes
widened to float32) describing the architecture so evaluation tools can
rebuild the network without side files; it is excluded from weight-shape
matching.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np
import torch

from ..errors import CheckpointError
from .nets import (ActorCritic, DepthEncoder, PointNetEncoder, SlotMLPEncoder,
                   VectorEncoder)

MAGIC = b"SPINW"
VERSION = 1
META_KEY = "_meta"


def save_tensors(path, tensors: dict) -> None:
    """Write a name -> float32 ndarray map in the checkpoint format."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    names = sorted(tensors)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype=np.float32))
        enc = name.encode("utf-8")
        buf.write(struct.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.astype("<f4", copy=False).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_tensors(path) -> dict:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:5]!r}")
    off = 5
    version, count = struct.unpack_from("<II", raw, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off) if ndim else ()
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        out[name] = arr.copy()
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return out


# ---------------------------------------------------------------------------
# policy-level save/load
# ---------------------------------------------------------------------------

def _encode_meta(meta: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                         dtype=np.uint8).astype(np.float32)


def _decode_meta(arr: np.ndarray) -> dict:
    return json.loads(np.asarray(arr).astype(np.uint8).tobytes().decode("utf-8"))


def save_policy(path, model: ActorCritic, meta: dict) -> None:
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensors[META_KEY] = _encode_meta(meta)
    save_tensors(path, tensors)


def build_policy(meta: dict) -> ActorCritic:
    kind = meta["encoder"]
    if kind == "pointnet":
        enc = PointNetEncoder()
    elif kind == "slots":
        enc = SlotMLPEncoder(slots=int(meta.get("slots", 8)))
    elif kind == "depth":
        h, w = meta.get("depth_hw", [58, 87])
        enc = DepthEncoder(height=int(h), width=int(w))
    elif kind == "vector":
        enc = VectorEncoder(int(meta["perc_dim"]))
    else:
        raise CheckpointError(f"unknown encoder kind {kind!r}")
    return ActorCritic(enc,
                       proprio_dim=int(meta.get("proprio_dim", 21)),
                       task_dim=int(meta.get("task_dim", 3)),
                       action_dim=int(meta.get("action_dim", 10)),
                       share_trunk=bool(meta.get("share_trunk", False)))


def load_policy(path):
    """Rebuild (model, meta) from a checkpoint; shapes must match exactly."""
    tensors = load_tensors(path)
    if META_KEY not in tensors:
        raise CheckpointError(f"{path}: missing {META_KEY} entry")
    meta = _decode_meta(tensors.pop(META_KEY))
    model = build_policy(meta)
    want = model.state_dict()
    if set(want) != set(tensors):
        missing = sorted(set(want) - set(tensors))
        extra = sorted(set(tensors) - set(want))
        raise CheckpointError(f"{path}: name mismatch missing={missing} extra={extra}")
    state = {}
    for k, v in want.items():
        arr = tensors[k]
        if tuple(arr.shape) != tuple(v.shape):
            raise CheckpointError(f"{path}: {k} shape {arr.shape} != {tuple(v.shape)}")
        state[k] = torch.from_numpy(arr).to(v.dtype)
    model.load_state_dict(state)
    model.eval()
    return model, meta
