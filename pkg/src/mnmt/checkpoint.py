"""Versioned, byte-stable binary checkpoints.

A checkpoint carries the model parameters, the optimizer moments, the model
config, the vocabulary hash it was trained against, and the step/epoch
counters.  Serialization is canonical: sorted tensor names, a sorted-key JSON
header, and raw little-endian array bytes, so identical state always produces
identical files (no timestamps, no compression).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .model import ModelConfig, Parameters

MAGIC = b"MNMTCKPT"
VERSION = 1


def config_hash(mconfig: ModelConfig) -> str:
    payload = json.dumps(mconfig.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def empty_optimizer_state(params: Parameters) -> dict:
    """Zero first/second moments for every trainable tensor."""
    return {
        "m": {n: np.zeros_like(t.data) for n, t in params.trainable()},
        "v": {n: np.zeros_like(t.data) for n, t in params.trainable()},
        "t": 0,
    }


@dataclass
class Checkpoint:
    """Complete training state at one step."""

    params: Parameters
    mconfig: ModelConfig
    optimizer_state: dict = field(default_factory=dict)
    vocab_hash: str = ""
    step: int = 0
    epoch: int = 0

    def __post_init__(self):
        if not self.optimizer_state:
            self.optimizer_state = empty_optimizer_state(self.params)

    @property
    def config_hash(self) -> str:
        return config_hash(self.mconfig)

    def clone(self) -> "Checkpoint":
        """Deep copy; training mutates parameters in place."""
        return Checkpoint(
            params=Parameters.from_state_dict(self.params.state_dict()),
            mconfig=self.mconfig,
            optimizer_state={
                "m": {n: a.copy() for n, a in self.optimizer_state["m"].items()},
                "v": {n: a.copy() for n, a in self.optimizer_state["v"].items()},
                "t": self.optimizer_state["t"],
            },
            vocab_hash=self.vocab_hash,
            step=self.step,
            epoch=self.epoch,
        )


def _little_endian(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    """Canonical serialization; equal state yields equal bytes."""
    tensors: dict[str, np.ndarray] = {}
    for name, tensor in ckpt.params.items():
        tensors[f"param.{name}"] = tensor.data
    for name, arr in ckpt.optimizer_state["m"].items():
        tensors[f"opt.m.{name}"] = arr
    for name, arr in ckpt.optimizer_state["v"].items():
        tensors[f"opt.v.{name}"] = arr

    entries = []
    blobs = []
    for name in sorted(tensors):
        arr = _little_endian(tensors[name])
        dtype_str = arr.dtype.str if arr.dtype.str[0] == "<" else "<" + arr.dtype.str[1:]
        entries.append([name, dtype_str, list(arr.shape)])
        blobs.append(arr.tobytes())

    header = {
        "config": ckpt.mconfig.to_dict(),
        "config_hash": ckpt.config_hash,
        "vocab_hash": ckpt.vocab_hash,
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "opt_t": ckpt.optimizer_state["t"],
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(head)), head, *blobs])


def checkpoint_digest(ckpt: Checkpoint) -> str:
    return hashlib.sha256(checkpoint_bytes(ckpt)).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(ckpt))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise InputError(f"{path}: not a checkpoint file")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    (head_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset : offset + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: corrupt checkpoint header") from exc
    offset += head_len

    mconfig = ModelConfig.from_dict(header["config"])
    if header.get("config_hash") != config_hash(mconfig):
        raise InputError(f"{path}: config hash mismatch, file corrupt")

    tensors: dict[str, np.ndarray] = {}
    for name, dtype_str, shape in header["tensors"]:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        dtype = np.dtype(dtype_str)
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise InputError(f"{path}: truncated checkpoint (tensor {name})")
        tensors[name] = (
            np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise InputError(f"{path}: trailing bytes after tensor payload")

    param_state = {k[len("param."):]: v for k, v in tensors.items() if k.startswith("param.")}
    opt_m = {k[len("opt.m."):]: v for k, v in tensors.items() if k.startswith("opt.m.")}
    opt_v = {k[len("opt.v."):]: v for k, v in tensors.items() if k.startswith("opt.v.")}
    if not param_state:
        raise InputError(f"{path}: checkpoint holds no parameters")

    return Checkpoint(
        params=Parameters.from_state_dict(param_state),
        mconfig=mconfig,
        optimizer_state={"m": opt_m, "v": opt_v, "t": int(header["opt_t"])},
        vocab_hash=header["vocab_hash"],
        step=int(header["step"]),
        epoch=int(header["epoch"]),
    )


def require_compatible(init: Checkpoint, mconfig: ModelConfig, vocab_hash: str | None) -> None:
    """Warm-start contract: same vocabulary, same tensor geometry."""
    if vocab_hash is not None and init.vocab_hash and init.vocab_hash != vocab_hash:
        raise ConfigError(
            "vocabulary hash mismatch between checkpoint and tokenizer; "
            "warm starts require the identical frozen vocabulary"
        )
    shape_fields = ("vocab_size", "d_model", "n_heads", "n_enc_layers",
                    "n_dec_layers", "d_ff", "max_len")
    a, b = init.mconfig.to_dict(), mconfig.to_dict()
    bad = [f for f in shape_fields if a[f] != b[f]]
    if bad:
        raise ConfigError(f"checkpoint architecture differs on {', '.join(bad)}")
