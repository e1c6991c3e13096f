"""Versioned binary checkpoints.

Layout (all integers little-endian uint64)::

    b"DFMCKPT1"
    text_len, text_len bytes of UTF-8 ``key = value`` lines
    block_count
    block_count x (value_count, value_count little-endian float64)

The text block carries the training config, network shape, epoch counter,
RNG stream states and training history; the float blocks are the network
parameters in layer order followed by the matching momentum buffers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .pnm import atomic_write_bytes
from .tensor_core import RngStream
from .toy_net import PARAM_ORDER, Network, TrainConfig, param_shapes
from .training import EpochRecord, TrainState

MAGIC = b"DFMCKPT1"
_U64 = struct.Struct("<Q")
_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: Network
    train_config: TrainConfig
    epoch: int
    velocity: dict[str, np.ndarray]
    rng_states: dict[str, str]
    history: list[EpochRecord]

    @classmethod
    def from_state(cls, state: TrainState, cfg: TrainConfig) -> "Checkpoint":
        return cls(state.net.copy(), cfg, state.epoch,
                   {k: v.copy() for k, v in state.velocity.items()},
                   {"shuffle": state.shuffle_rng.state_json(), "dfm-select": state.dfm_rng.state_json()},
                   list(state.history))

    def to_state(self) -> TrainState:
        return TrainState(
            net=self.net,
            velocity={k: v.copy() for k, v in self.velocity.items()},
            epoch=self.epoch,
            shuffle_rng=RngStream.from_state_json(self.rng_states["shuffle"]),
            dfm_rng=RngStream.from_state_json(self.rng_states["dfm-select"]),
            history=list(self.history),
        )


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    net = ckpt.net
    meta = cfgmod.train_config_values(ckpt.train_config)
    meta.update({
        "num_classes": net.num_classes,
        "widths": ",".join(str(w) for w in net.widths),
        "in_channels": net.in_channels,
        "epoch": ckpt.epoch,
        "rng.shuffle": ckpt.rng_states["shuffle"],
        "rng.dfm-select": ckpt.rng_states["dfm-select"],
        "history": json.dumps([[r.epoch, r.loss, r.accuracy] for r in ckpt.history]),
    })
    text = cfgmod.format_kv_text(meta).encode("utf-8")
    blocks = [net.params[k] for k in PARAM_ORDER] + [ckpt.velocity[k] for k in PARAM_ORDER]
    parts = [MAGIC, _U64.pack(len(text)), text, _U64.pack(len(blocks))]
    for block in blocks:
        flat = np.ascontiguousarray(block, dtype=_F64).ravel()
        parts.append(_U64.pack(flat.size))
        parts.append(flat.tobytes())
    return b"".join(parts)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    if data[:len(MAGIC)] != MAGIC:
        if data[:7] == MAGIC[:7]:
            raise CheckpointError(f"{source}: unsupported checkpoint version {data[:8]!r}")
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{source}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (text_len,) = _U64.unpack(take(8))
    try:
        meta = cfgmod.parse_kv_text(take(text_len).decode("utf-8"), source)
    except (UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"{source}: corrupt config block ({exc})") from exc
    (n_blocks,) = _U64.unpack(take(8))
    if n_blocks != 2 * len(PARAM_ORDER):
        raise CheckpointError(f"{source}: expected {2 * len(PARAM_ORDER)} parameter blocks, found {n_blocks}")
    raw = []
    for _ in range(n_blocks):
        (count,) = _U64.unpack(take(8))
        raw.append(np.frombuffer(take(8 * count), dtype=_F64).astype(np.float64))
    if pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - pos} trailing bytes")

    try:
        values = {k: cfgmod.KEYS[k][1](meta[k]) for k in cfgmod.TRAIN_KEYS + cfgmod.DFM_KEYS}
        train_cfg = cfgmod.train_from_values(values)
        num_classes = int(meta["num_classes"])
        widths = tuple(int(w) for w in meta["widths"].split(","))
        in_channels = int(meta["in_channels"])
        epoch = int(meta["epoch"])
        rng_states = {"shuffle": meta["rng.shuffle"], "dfm-select": meta["rng.dfm-select"]}
        history = [EpochRecord(int(e), float(l), float(a)) for e, l, a in json.loads(meta["history"])]
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{source}: corrupt config block ({exc})") from exc

    shapes = param_shapes(num_classes, widths, in_channels)
    arrays = {}
    for i, name in enumerate(PARAM_ORDER * 2):
        shape = shapes[name]
        block = raw[i]
        if block.size != int(np.prod(shape)):
            raise CheckpointError(f"{source}: block {name} has {block.size} values, expected shape {shape}")
        arrays[(i >= len(PARAM_ORDER), name)] = block.reshape(shape)
    net = Network({k: arrays[(False, k)] for k in PARAM_ORDER}, num_classes, widths, in_channels)
    velocity = {k: arrays[(True, k)] for k in PARAM_ORDER}
    return Checkpoint(net, train_cfg, epoch, velocity, rng_states, history)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data, str(path))
