"""Binary checkpoints: parameters, optimizer state, config echo, RNG states.

Layout (all little-endian):

    magic "N2BCKPT" | u16 version | u32 meta_len | meta JSON | u32 n_entries
    entry*: u16 name_len | name UTF-8 | u32 rank | u32*rank extents | f32 payload

The meta JSON carries the config echo, the iteration counter, optimizer step
counts and sampler RNG states, serialized with sorted keys so save -> load ->
save is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filters import FilterSpec
from .noise import NoiseSpec
from .training import TrainConfig, TrainResult

MAGIC = b"N2BCKPT"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    iteration: int
    dnnet_state: dict          # name -> np.ndarray (float32)
    nenet_state: dict
    opt_f_state: dict          # {"t": int, "m": {...}, "v": {...}}
    opt_h_state: dict
    rng_states: dict           # {"patch": ..., "pair": ...}


def config_to_dict(config: TrainConfig) -> dict:
    d = dataclasses.asdict(config)
    if d["noise"] is not None and isinstance(d["noise"]["level"], (tuple, list)):
        d["noise"]["level"] = list(d["noise"]["level"])
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    if d.get("noise") is not None:
        n = dict(d["noise"])
        if isinstance(n["level"], list):
            n["level"] = tuple(n["level"])
        d["noise"] = NoiseSpec(**n)
    if d.get("filter") is not None:
        d["filter"] = FilterSpec(**d["filter"])
    return TrainConfig(**d)


def checkpoint_from_result(result: TrainResult) -> Checkpoint:
    def opt_state(opt, net):
        names = [name for name, _ in net.named_params()]
        return {
            "t": opt.t,
            "m": dict(zip(names, opt.m)),
            "v": dict(zip(names, opt.v)),
        }

    return Checkpoint(
        config=result.config,
        iteration=result.curve[-1].iteration if result.curve else 0,
        dnnet_state=result.dnnet.state(),
        nenet_state=result.nenet.state(),
        opt_f_state=opt_state(result.opt_f, result.dnnet),
        opt_h_state=opt_state(result.opt_h, result.nenet),
        rng_states=result.rng_states,
    )


def _entries(ckpt: Checkpoint):
    for name, arr in ckpt.dnnet_state.items():
        yield f"F.{name}", arr
    for name, arr in ckpt.nenet_state.items():
        yield f"H.{name}", arr
    for tag, state in (("optF", ckpt.opt_f_state), ("optH", ckpt.opt_h_state)):
        for kind in ("m", "v"):
            for name, arr in state[kind].items():
                yield f"{tag}.{kind}.{name}", arr


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "config": config_to_dict(ckpt.config),
        "iteration": ckpt.iteration,
        "opt_t": {"F": ckpt.opt_f_state["t"], "H": ckpt.opt_h_state["t"]},
        "rng_states": ckpt.rng_states,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    entries = list(_entries(ckpt))
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    out += struct.pack("<I", len(meta_bytes))
    out += meta_bytes
    out += struct.pack("<I", len(entries))
    for name, arr in entries:
        name_b = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out += struct.pack("<H", len(name_b))
        out += name_b
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len).decode())
    (n_entries,) = r.unpack("<I")
    tensors = {}
    for _ in range(n_entries):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}I")
        count = int(np.prod(shape)) if rank else 1
        payload = r.take(count * 4)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()

    def split(prefix):
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}

    f_state = split("F")
    h_state = split("H")
    return Checkpoint(
        config=config_from_dict(meta["config"]),
        iteration=meta["iteration"],
        dnnet_state=f_state,
        nenet_state=h_state,
        opt_f_state={"t": meta["opt_t"]["F"],
                     "m": {k[2:]: v for k, v in split("optF").items() if k.startswith("m.")},
                     "v": {k[2:]: v for k, v in split("optF").items() if k.startswith("v.")}},
        opt_h_state={"t": meta["opt_t"]["H"],
                     "m": {k[2:]: v for k, v in split("optH").items() if k.startswith("m.")},
                     "v": {k[2:]: v for k, v in split("optH").items() if k.startswith("v.")}},
        rng_states=meta["rng_states"],
    )
