"""Single-file checkpoint container.

Layout: magic line, 8-byte little-endian JSON header length, JSON header
(version, architectures, config echo, optimizer scalars, tensor index),
then the raw float64 tensor data in index order.
"""

import hashlib
import json
import struct

import numpy as np

from .cotrain import CoTrainState, TrainingConfig
from .nn import ModelArch

MAGIC = b"VAPLCKPT\x01\n"
VERSION = 1


class CheckpointError(Exception):
    pass


def _named_tensors(state):
    out = {}
    for tag, params in (("f_m", state.f_m.params), ("f_o", state.f_o.params),
                        ("g", state.g.params)):
        for name, p in params.items():
            out[f"{tag}.{name}"] = p.data
    for tag, opt in (("f_m", state.opt_m), ("f_o", state.opt_o), ("g", state.opt_g)):
        for kind, table in (("m", opt.m), ("v", opt.v)):
            for name, arr in table.items():
                out[f"opt.{tag}.{kind}.{name}"] = arr
    return out


def save_checkpoint(path, state):
    tensors = _named_tensors(state)
    index, offset = [], 0
    for name, arr in tensors.items():
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "version": VERSION,
        "arch": state.arch.to_dict(),
        "g_layer_sizes": list(state.g.layer_sizes),
        "g_phi": state.g.phi,
        "config": state.config_echo,
        "training": {k: getattr(state.tcfg, k) for k in TrainingConfig.__dataclass_fields__},
        "counters": {"outer_iter": state.outer_iter, "step": state.step,
                     "opt_t": {"f_m": state.opt_m.t, "f_o": state.opt_o.t, "g": state.opt_g.t}},
        "rng": {"train_seed": state.tcfg.seed, "refine_seed": state.tcfg.refine_seed},
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path, expect_arch: ModelArch = None):
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    try:
        header = json.loads(raw[pos:pos + hlen])
    except ValueError:
        raise CheckpointError(f"{path}: corrupt header")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    arch = ModelArch.from_dict(header["arch"])
    if expect_arch is not None and arch != expect_arch:
        raise CheckpointError(
            f"{path}: architecture mismatch: checkpoint {header['arch']}, "
            f"expected {expect_arch.to_dict()}")
    tcfg = TrainingConfig(**header["training"])
    state = CoTrainState(arch, tcfg, header.get("config"))
    if list(state.g.layer_sizes) != header["g_layer_sizes"] or state.g.phi != header["g_phi"]:
        raise CheckpointError(f"{path}: weight-net architecture mismatch")

    data_start = pos + hlen
    loaded = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"]
        arr = np.frombuffer(raw, dtype=np.float64, count=size, offset=start)
        loaded[entry["name"]] = arr.reshape(shape).copy()

    expected = set(_named_tensors(state))
    if expected != set(loaded):
        raise CheckpointError(f"{path}: tensor set mismatch")
    for tag, params in (("f_m", state.f_m.params), ("f_o", state.f_o.params),
                        ("g", state.g.params)):
        for name, p in params.items():
            p.data = loaded[f"{tag}.{name}"]
    for tag, opt in (("f_m", state.opt_m), ("f_o", state.opt_o), ("g", state.opt_g)):
        opt.t = header["counters"]["opt_t"][tag]
        for name in opt.params:
            opt.m[name] = loaded[f"opt.{tag}.m.{name}"]
            opt.v[name] = loaded[f"opt.{tag}.v.{name}"]
    state.outer_iter = header["counters"]["outer_iter"]
    state.step = header["counters"]["step"]
    return state


def checkpoint_hash(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
