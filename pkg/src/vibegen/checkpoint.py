"""Binary checkpoint format (``.wdcg``).

Layout, all integers little-endian::

    b"WDCG"  u32 version  u8 precision (4 or 8 bytes per element)
    arch block:   u32 network count, then per network
                  u32 input_length, u32 layer count,
                  per layer 9 x u32: in, out, kernel, stride, padding,
                  transposed, norm code, activation code, dropout flag
    u32 seed, u64 epoch, u64 step
    meta block:   u32 byte length + UTF-8 JSON (rng state, history)
    params:       u32 record count, records
    optimizers:   u32 optimizer count, per optimizer
                  u32 name length + name, u64 step, u32 record count, records
    u32 CRC-32 of every preceding byte

A record is u32 name length + UTF-8 name + u32 rank + rank x u32 dims + raw
IEEE-754 data at the file precision.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError
from .kernels import ACTIVATIONS, ConvSpec
from .model import NORMS, GanModel, LayerSpec, Network, NetworkArch
from .optim import AdamWState

MAGIC = b"WDCG"
VERSION = 1
NETWORKS = ("generator", "critic")


class _Writer:
    def __init__(self, dtype: np.dtype):
        self.parts: list[bytes] = []
        self.dtype = np.dtype(dtype).newbyteorder("<")

    def pack(self, fmt: str, *values) -> None:
        self.parts.append(struct.pack("<" + fmt, *values))

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.pack("I", len(raw))
        self.parts.append(raw)

    def record(self, name: str, arr: np.ndarray) -> None:
        self.text(name)
        self.pack("I", arr.ndim)
        for d in arr.shape:
            self.pack("I", d)
        self.parts.append(np.ascontiguousarray(arr, dtype=self.dtype).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize("<" + fmt)
        return struct.unpack("<" + fmt, self.take(size, what))

    def u32(self, what: str) -> int:
        return self.unpack("I", what)[0]

    def text(self, what: str) -> str:
        n = self.u32(what + " length")
        start = self.pos
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"invalid UTF-8 in {what}", start) from None

    def record(self, dtype: np.dtype):
        start = self.pos
        name = self.text("record name")
        rank = self.u32("record rank")
        if rank > 8:
            raise CheckpointFormatError(f"implausible rank {rank} for {name!r}", start)
        dims = tuple(self.u32("record dims") for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64))
        raw = self.take(count * dtype.itemsize, f"data of {name!r}")
        return name, np.frombuffer(raw, dtype=dtype).reshape(dims)


def _network_arrays(net: Network):
    for set_name, ps in net.named_param_sets():
        for name, arr in ps.arrays():
            yield f"{set_name}.{name}", arr


def to_bytes(model: GanModel) -> bytes:
    precision = model.dtype.itemsize
    w = _Writer(model.dtype)
    w.parts.append(MAGIC)
    w.pack("IB", VERSION, precision)
    w.pack("I", len(NETWORKS))
    for net_name in NETWORKS:
        arch = getattr(model, net_name).arch
        w.pack("II", arch.input_length, len(arch.layers))
        for layer in arch.layers:
            c = layer.conv
            w.pack("9I", c.in_channels, c.out_channels, c.kernel, c.stride, c.padding,
                   int(c.transposed), NORMS.index(layer.norm),
                   ACTIVATIONS.index(layer.activation), int(layer.dropout))
    w.pack("IQQ", model.seed, model.epoch, model.step)
    w.text(json.dumps(model.meta, sort_keys=True, separators=(",", ":")))

    records = [(f"{n}.{k}", a) for n in NETWORKS for k, a in _network_arrays(getattr(model, n))]
    w.pack("I", len(records))
    for name, arr in records:
        w.record(name, arr)

    optimizers = sorted(model.optimizers.items())
    w.pack("I", len(optimizers))
    for opt_name, state in optimizers:
        w.text(opt_name)
        w.pack("Q", state.step)
        keys = sorted(state.m)
        w.pack("I", 2 * len(keys))
        for key in keys:
            w.record(key + ".m", state.m[key])
            w.record(key + ".v", state.v[key])

    body = b"".join(w.parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model: GanModel, path) -> Path:
    """Atomically write ``model`` to ``path``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(model))
    os.replace(tmp, path)
    return path


def from_bytes(data: bytes, dtype=None) -> GanModel:
    """Parse a checkpoint. ``dtype`` overrides the stored precision (e.g. widening to float64)."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic bytes", 0)
    version, precision = r.unpack("IB", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    if precision not in (4, 8):
        raise CheckpointFormatError(f"unknown precision tag {precision}", 8)
    if len(data) < r.pos + 4:
        raise CheckpointFormatError("truncated file", len(data))
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CheckpointFormatError("CRC-32 mismatch", len(data) - 4)
    file_dtype = np.dtype("<f4" if precision == 4 else "<f8")
    target = np.dtype(dtype) if dtype is not None else np.dtype(file_dtype.name)

    archs = []
    count = r.u32("network count")
    if count != len(NETWORKS):
        raise CheckpointFormatError(f"expected {len(NETWORKS)} networks, found {count}", r.pos - 4)
    for _ in range(count):
        start = r.pos
        input_length, n_layers = r.unpack("II", "arch header")
        layers = []
        for _ in range(n_layers):
            i, o, k, s, p, tr, norm, act, drop = r.unpack("9I", "layer spec")
            if norm >= len(NORMS) or act >= len(ACTIVATIONS):
                raise CheckpointFormatError("bad norm/activation code", r.pos - 36)
            layers.append(LayerSpec(ConvSpec(i, o, k, s, p, bool(tr)), NORMS[norm], ACTIVATIONS[act], bool(drop)))
        try:
            archs.append(NetworkArch(input_length, tuple(layers)))
        except ValueError as exc:
            raise CheckpointFormatError(f"invalid architecture: {exc}", start) from None
    seed, epoch, step = r.unpack("IQQ", "progress")
    meta_start = r.pos
    try:
        meta = json.loads(r.text("meta block"))
    except json.JSONDecodeError:
        raise CheckpointFormatError("meta block is not valid JSON", meta_start) from None

    model = GanModel(Network(archs[0], target), Network(archs[1], target), seed=seed, epoch=epoch, step=step, meta=meta)
    slots = {f"{n}.{k}": a for n in NETWORKS for k, a in _network_arrays(getattr(model, n))}
    n_records = r.u32("record count")
    seen = set()
    for _ in range(n_records):
        start = r.pos
        name, arr = r.record(file_dtype)
        if name not in slots or slots[name].shape != arr.shape:
            raise CheckpointFormatError(f"unexpected parameter record {name!r} {arr.shape}", start)
        slots[name][...] = arr
        seen.add(name)
    if seen != set(slots):
        raise CheckpointFormatError(f"missing parameter records {sorted(set(slots) - seen)}", r.pos)

    n_opt = r.u32("optimizer count")
    for _ in range(n_opt):
        opt_name = r.text("optimizer name")
        (opt_step,) = r.unpack("Q", "optimizer step")
        state = AdamWState(step=opt_step)
        for _ in range(r.u32("optimizer record count")):
            start = r.pos
            name, arr = r.record(file_dtype)
            key, _, moment = name.rpartition(".")
            if moment not in ("m", "v"):
                raise CheckpointFormatError(f"unexpected optimizer record {name!r}", start)
            getattr(state, moment)[key] = arr.astype(target)
        model.optimizers[opt_name] = state
    if r.pos != len(data) - 4:
        raise CheckpointFormatError("trailing bytes before CRC", r.pos)
    return model


def load_checkpoint(path, dtype=None) -> GanModel:
    return from_bytes(Path(path).read_bytes(), dtype)
