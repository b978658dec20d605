"""Checkpoint serialization.

Binary layout (all integers little-endian):

    magic "RNET"
    format_version          u32
    config block length     u32
    config block            UTF-8 canonical JSON (sorted keys); carries the
                            network config, epoch, best_val_loss, and the
                            optimizer's scalar state
    parameter sections      repeated until 4 bytes remain:
                              name length   u32
                              name bytes    UTF-8
                              rank          u64
                              dims          u64 each
                              payload       little-endian float32
    crc32                   u32, over every byte before it

Sections hold the model parameters (including batch-norm running statistics)
in insertion order, then optimizer moment arrays under "adam.m/<name>" and
"adam.v/<name>" when present. Loading reproduces every array bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptCheckpointError, UnsupportedVersionError
from .network import NetworkConfig
from .optim import AdamState

MAGIC = b"RNET"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: NetworkConfig
    parameters: dict[str, np.ndarray]
    optimizer_state: AdamState | None = None
    epoch: int = 0
    best_val_loss: float = float("inf")
    format_version: int = FORMAT_VERSION


def _section(name: str, array: np.ndarray) -> bytes:
    data = np.ascontiguousarray(array, dtype="<f4")
    name_b = name.encode()
    head = struct.pack("<I", len(name_b)) + name_b
    head += struct.pack("<Q", data.ndim)
    head += struct.pack(f"<{data.ndim}Q", *data.shape) if data.ndim else b""
    return head + data.tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Write atomically: temp file in the same directory, then replace."""
    meta = {
        "network": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "best_val_loss": ckpt.best_val_loss,
        "optimizer": None,
    }
    if ckpt.optimizer_state is not None:
        s = ckpt.optimizer_state
        meta["optimizer"] = {"step": s.step, "lr": s.lr, "beta1": s.beta1,
                             "beta2": s.beta2, "eps": s.eps}
    config_block = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<I", len(config_block))
    blob += config_block
    for name, arr in ckpt.parameters.items():
        blob += _section(name, arr)
    if ckpt.optimizer_state is not None:
        for name, arr in ckpt.optimizer_state.m.items():
            blob += _section(f"adam.m/{name}", arr)
        for name, arr in ckpt.optimizer_state.v.items():
            blob += _section(f"adam.v/{name}", arr)
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))

    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise CorruptCheckpointError("truncated checkpoint", self.offset)
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise CorruptCheckpointError("file too short to be a checkpoint", len(blob))
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    r = _Reader(blob[:-4])

    if r.take(4) != MAGIC:
        raise CorruptCheckpointError("bad magic bytes", 0)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptCheckpointError("CRC32 mismatch", len(blob) - 4)

    meta = json.loads(r.take(r.u32()).decode())
    config = NetworkConfig.from_dict(meta["network"])

    sections: dict[str, np.ndarray] = {}
    while r.offset < len(r.blob):
        name = r.take(r.u32()).decode()
        rank = r.u64()
        shape = tuple(r.u64() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(count * 4), dtype="<f4").reshape(shape)
        sections[name] = arr.copy()

    params = {k: v for k, v in sections.items() if not k.startswith("adam.")}
    state = None
    if meta["optimizer"] is not None:
        o = meta["optimizer"]
        state = AdamState(
            step=int(o["step"]), lr=float(o["lr"]), beta1=float(o["beta1"]),
            beta2=float(o["beta2"]), eps=float(o["eps"]),
            m={k[len("adam.m/"):]: v for k, v in sections.items()
               if k.startswith("adam.m/")},
            v={k[len("adam.v/"):]: v for k, v in sections.items()
               if k.startswith("adam.v/")},
        )
    return Checkpoint(config=config, parameters=params, optimizer_state=state,
                      epoch=int(meta["epoch"]),
                      best_val_loss=float(meta["best_val_loss"]),
                      format_version=version)
