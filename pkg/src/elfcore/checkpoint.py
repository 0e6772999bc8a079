"""Versioned binary checkpoints.

Layout: ``b"ELFC"``, uint16 version, uint32 header length, UTF-8 JSON header
(config, scalar counters, array table), then every array's raw little-endian
bytes in table order.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .config import RunConfig
from .errors import CheckpointError, DimensionMismatch
from .network import Network
from .neuron import NeuronState
from .sparse import SparseWeightBank

MAGIC = b"ELFC"
VERSION = 1
_STATE_FIELDS = ("v", "v_pre_reset", "spiked", "trace_now", "trace_pc", "trace_cc")


def _index_dtype(m: int):
    return np.uint8 if m <= 256 else np.uint16


def _state_arrays(prefix: str, st: NeuronState) -> list[tuple[str, np.ndarray]]:
    out = []
    for f in _STATE_FIELDS:
        a = getattr(st, f)
        out.append((f"{prefix}.{f}", a.astype(np.uint8 if a.dtype == bool else np.int16)))
    return out


def _weight_arrays(prefix: str, w) -> list[tuple[str, np.ndarray]]:
    if isinstance(w, SparseWeightBank):
        return [(f"{prefix}.indices", w.indices.astype(_index_dtype(w.spec.m_total))),
                (f"{prefix}.values", w.values.astype(np.int8))]
    return [(f"{prefix}.dense", np.asarray(w).astype(np.int8))]


def collect_arrays(net: Network) -> list[tuple[str, np.ndarray]]:
    arrays = []
    for layer in net.layers:
        arrays += _weight_arrays(f"{layer.name}.w", layer.bank)
        arrays += _state_arrays(f"{layer.name}.s", layer.state)
        arrays += [(f"{layer.name}.g.post_grad", layer.grad.post_grad.astype("<i8")),
                   (f"{layer.name}.g.pre_act", layer.grad.pre_act.astype("<i8"))]
    for r in net.readouts:
        for s in r.sources:
            arrays += _weight_arrays(f"{r.name}.w{s}", r.weights[s])
        arrays += _state_arrays(f"{r.name}.s", r.state)
    g = net.gates
    arrays += [("gates.ss_ema_pos", g.ss_ema_pos.astype("<f8")), ("gates.ss_ema_neg", g.ss_ema_neg.astype("<f8"))]
    for f in ("performed", "skipped_ia", "skipped_ss", "pc_updates", "cc_updates"):
        arrays.append((f"gates.{f}", getattr(g, f).astype("<i8")))
    return arrays


def to_bytes(net: Network) -> bytes:
    arrays = collect_arrays(net)
    header = {
        "config": net.cfg.persist_dict(),
        "cycle": net.cycle,
        "wu_cycles": net.wu_cycles,
        "grad_cycles": [layer.grad.cycles for layer in net.layers],
        "arrays": [[name, a.dtype.str, list(a.shape)] for name, a in arrays],
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a.astype(a.dtype.newbyteorder("<"))).tobytes() for _, a in arrays)
    return MAGIC + struct.pack("<HI", VERSION, len(hb)) + hb + body


def save_checkpoint(net: Network, path: str | os.PathLike) -> int:
    data = to_bytes(net)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def parse(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < 10 or data[:4] != MAGIC:
        raise CheckpointError("not an elfcore checkpoint (bad magic)")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    arrays = {}
    off = 10 + hlen
    for name, dt, shape in header["arrays"]:
        dtype = np.dtype(dt)
        n = int(np.prod(shape)) * dtype.itemsize
        if off + n > len(data):
            raise CheckpointError("checkpoint truncated")
        arrays[name] = np.frombuffer(data, dtype=dtype, count=int(np.prod(shape)), offset=off).reshape(shape)
        off += n
    return header, arrays


def _load_weights(prefix: str, target, arrays):
    if isinstance(target, SparseWeightBank):
        idx, val = arrays[f"{prefix}.indices"], arrays[f"{prefix}.values"]
        if idx.shape != target.indices.shape:
            raise DimensionMismatch(f"{prefix}: shape {idx.shape} != {target.indices.shape}")
        target.indices[:] = idx
        target.values[:] = val
        return target
    dense = arrays[f"{prefix}.dense"]
    if dense.shape != target.shape:
        raise DimensionMismatch(f"{prefix}: shape {dense.shape} != {target.shape}")
    return dense.astype(np.int64)


def _load_state(prefix: str, arrays) -> NeuronState:
    parts = []
    for f in _STATE_FIELDS:
        a = arrays[f"{prefix}.{f}"]
        parts.append(a.astype(bool) if f == "spiked" else a.astype(np.int64))
    return NeuronState(*parts)


def from_bytes(data: bytes, **overrides) -> Network:
    header, arrays = parse(data)
    cfg_dict = dict(header["config"])
    cfg_dict.update(overrides)
    net = Network(RunConfig.from_dict(cfg_dict))
    net.cycle = int(header["cycle"])
    net.wu_cycles = int(header.get("wu_cycles", 0))
    try:
        for layer in net.layers:
            _load_weights(f"{layer.name}.w", layer.bank, arrays)
            layer.state = _load_state(f"{layer.name}.s", arrays)
            layer.grad.post_grad[:] = arrays[f"{layer.name}.g.post_grad"]
            layer.grad.pre_act[:] = arrays[f"{layer.name}.g.pre_act"]
        for layer, c in zip(net.layers, header.get("grad_cycles", [])):
            layer.grad.cycles = int(c)
        for r in net.readouts:
            for s in r.sources:
                r.weights[s] = _load_weights(f"{r.name}.w{s}", r.weights[s], arrays)
            r.state = _load_state(f"{r.name}.s", arrays)
        g = net.gates
        for f in ("ss_ema_pos", "ss_ema_neg", "performed", "skipped_ia", "skipped_ss", "pc_updates", "cc_updates"):
            setattr(g, f, np.array(arrays[f"gates.{f}"]))
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing array {exc}") from exc
    return net


def load_checkpoint(path: str | os.PathLike, **overrides) -> Network:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(data, **overrides)
