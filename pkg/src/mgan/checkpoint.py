"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"MGANCKPT"  u32 version
    u32 len, config text (utf-8 ``key = value`` lines, ``meta.*`` keys last)
    u32 count, then per tensor:
        u16 len, name (utf-8)  u8 dtype tag (1=f32, 2=f64)  u8 rank
        u32 extent * rank      payload (row-major, little-endian)

Tensor names are ``param/<name>``, ``adam.m/<name>`` and ``adam.v/<name>``.
"""
from __future__ import annotations

import copy
import io
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as C
from .model import MganModel, build_model
from .train import AdamState

MAGIC = b"MGANCKPT"
VERSION = 1
_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAG_OF = {np.dtype("float32"): 1, np.dtype("float64"): 2}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: C.RunConfig
    params: dict
    adam: AdamState | None = None
    epoch: int = 0
    step: int = 0
    rng_state: dict | None = None

    @classmethod
    def capture(cls, model, train_cfg, spec, state, epoch, step, rng):
        run = C.RunConfig(model=copy.deepcopy(model.config), train=copy.deepcopy(train_cfg),
                          degradation=copy.deepcopy(spec))
        adam = AdamState(m={k: v.copy() for k, v in state.m.items()},
                         v={k: v.copy() for k, v in state.v.items()}, t=state.t) if state else None
        return cls(config=run, params=model.state_dict(), adam=adam, epoch=epoch, step=step,
                   rng_state=copy.deepcopy(rng.bit_generator.state) if rng is not None else None)

    def model(self):
        m = build_model(self.config.model, seed=0)
        m.load_state_dict(self.params)
        return m


def _meta_text(ck):
    meta = {"epoch": ck.epoch, "step": ck.step, "adam_t": ck.adam.t if ck.adam else -1,
            "rng_state": json.dumps(ck.rng_state, sort_keys=True) if ck.rng_state else ""}
    return "".join(f"meta.{k} = {v}\n" for k, v in meta.items())


def _write_tensor(buf, name, arr):
    arr = np.asarray(arr)
    tag = _TAG_OF.get(arr.dtype)
    if tag is None:
        raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<BB", tag, arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=_TAGS[tag]).tobytes())


def dumps(ck):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    text = (ck.config.dumps() + _meta_text(ck)).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    tensors = [(f"param/{k}", v) for k, v in ck.params.items()]
    if ck.adam is not None:
        tensors += [(f"adam.m/{k}", v) for k, v in ck.adam.m.items()]
        tensors += [(f"adam.v/{k}", v) for k, v in ck.adam.v.items()]
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    return buf.getvalue()


def save_checkpoint(ck, path):
    """Write atomically: a failed write never clobbers an existing checkpoint."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(dumps(ck))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob):
        self.blob, self.pos = blob, 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(blob):
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an MGAN checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    text = r.take(n).decode("utf-8")
    cfg_lines, meta = [], {}
    for line in text.splitlines():
        if line.startswith("meta."):
            k, v = line[5:].split("=", 1)
            meta[k.strip()] = v.strip()
        else:
            cfg_lines.append(line)
    run = C.loads("\n".join(cfg_lines))
    (count,) = r.unpack("<I")
    params, m, v = {}, {}, {}
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        tag, rank = r.unpack("<BB")
        if tag not in _TAGS:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = r.unpack(f"<{rank}I") if rank else ()
        dt = _TAGS[tag]
        arr = np.frombuffer(r.take(int(np.prod(shape, dtype=np.int64)) * dt.itemsize), dtype=dt)
        arr = arr.reshape(shape).astype(dt.newbyteorder("="))
        kind, _, key = name.partition("/")
        {"param": params, "adam.m": m, "adam.v": v}.get(kind, {})[key] = arr
    t = int(meta.get("adam_t", -1))
    rng_state = json.loads(meta["rng_state"]) if meta.get("rng_state") else None
    return Checkpoint(config=run, params=params, adam=AdamState(m=m, v=v, t=t) if t >= 0 else None,
                      epoch=int(meta.get("epoch", 0)), step=int(meta.get("step", 0)), rng_state=rng_state)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def from_model(model, run=None):
    """Wrap bare model weights (no optimizer state) as a checkpoint."""
    if not isinstance(model, MganModel):
        raise TypeError("expected an MganModel")
    run = copy.deepcopy(run) if run is not None else C.RunConfig()
    run.model = copy.deepcopy(model.config)
    run.degradation.scale = model.config.scale
    return Checkpoint(config=run, params=model.state_dict())
